#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "fewgan/matrix.hpp"

namespace fewgan {

// Floor applied to probabilities before log in every loss; keeps the GAN and
// cross-entropy objectives finite even for a saturated discriminator.
inline constexpr double kLogGuard = 1e-12;

inline double guarded_log(double u) {
    if (std::isnan(u)) return u;  // divergence must surface, not vanish into the guard
    return std::log(u > kLogGuard ? u : kLogGuard);
}

// Reverse-mode tape over dense matrices. Nodes are appended during the
// forward pass (parents always have smaller ids, so the tape is acyclic by
// construction) and backward() walks ids in strict reverse order, adding each
// node's contribution into its parents' gradients. Gradients always have the
// shape of the node value.
class Tape {
public:
    using NodeId = int;

    struct Node {
        Matrix value;
        Matrix grad;
        std::vector<NodeId> parents;
        // Adds d(root)/d(parent) contributions into parent grads.
        std::function<void(Tape&, NodeId)> backprop;
        bool touched = false;
    };

    std::size_t size() const { return nodes_.size(); }
    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    const Matrix& grad(NodeId id) const { return nodes_[id].grad; }
    double scalar(NodeId id) const { return nodes_[id].value(0, 0); }

    NodeId leaf(Matrix v) { return push(std::move(v), {}, nullptr); }

    NodeId matmul(NodeId a, NodeId b) {
        Matrix out = fewgan::matmul(value(a), value(b));
        return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
            const Matrix& g = t.nodes_[self].grad;
            t.accumulate(a, fewgan::matmul(g, transpose(t.value(b))));
            t.accumulate(b, fewgan::matmul(transpose(t.value(a)), g));
        });
    }

    NodeId add(NodeId a, NodeId b) {
        Matrix out = fewgan::add(value(a), value(b));
        return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
            t.accumulate(a, t.nodes_[self].grad);
            t.accumulate(b, t.nodes_[self].grad);
        });
    }

    NodeId sub(NodeId a, NodeId b) {
        Matrix out = fewgan::sub(value(a), value(b));
        return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
            t.accumulate(a, t.nodes_[self].grad);
            t.accumulate(b, fewgan::scale(t.nodes_[self].grad, -1.0));
        });
    }

    // Adds a 1 x cols bias row to every row of a.
    NodeId broadcast_add_row(NodeId a, NodeId bias) {
        const Matrix& av = value(a);
        const Matrix& bv = value(bias);
        if (bv.rows() != 1 || bv.cols() != av.cols())
            throw ShapeError("broadcast_add_row: bias must be 1 x cols of input");
        Matrix out = av;
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
        return push(std::move(out), {a, bias}, [a, bias](Tape& t, NodeId self) {
            const Matrix& g = t.nodes_[self].grad;
            t.accumulate(a, g);
            Matrix gb(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
            t.accumulate(bias, std::move(gb));
        });
    }

    NodeId scale(NodeId a, double c) {
        return push(fewgan::scale(value(a), c), {a}, [a, c](Tape& t, NodeId self) {
            t.accumulate(a, fewgan::scale(t.nodes_[self].grad, c));
        });
    }

    NodeId add_scalar(NodeId a, double c) {
        Matrix out = value(a);
        for (double& v : out.raw()) v += c;
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            t.accumulate(a, t.nodes_[self].grad);
        });
    }

    NodeId hadamard(NodeId a, NodeId b) {
        const Matrix& av = value(a);
        const Matrix& bv = value(b);
        if (!av.same_shape(bv)) throw ShapeError("hadamard: shape mismatch");
        Matrix out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] *= bv.raw()[i];
        return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
            const Matrix& g = t.nodes_[self].grad;
            Matrix ga = g, gb = g;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.raw()[i] *= t.value(b).raw()[i];
                gb.raw()[i] *= t.value(a).raw()[i];
            }
            t.accumulate(a, std::move(ga));
            t.accumulate(b, std::move(gb));
        });
    }

    NodeId tanh(NodeId a) {
        Matrix out = value(a);
        for (double& v : out.raw()) v = std::tanh(v);
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            const Matrix& y = t.value(self);
            Matrix g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) g.raw()[i] *= 1.0 - y.raw()[i] * y.raw()[i];
            t.accumulate(a, std::move(g));
        });
    }

    NodeId sigmoid(NodeId a) {
        Matrix out = value(a);
        for (double& v : out.raw()) v = 1.0 / (1.0 + std::exp(-v));
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            const Matrix& y = t.value(self);
            Matrix g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) g.raw()[i] *= y.raw()[i] * (1.0 - y.raw()[i]);
            t.accumulate(a, std::move(g));
        });
    }

    NodeId relu(NodeId a) {
        Matrix out = value(a);
        for (double& v : out.raw()) {
            if (std::isnan(v)) continue;  // propagate
            v = v > 0.0 ? v : 0.0;
        }
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            Matrix g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (t.value(a).raw()[i] <= 0.0) g.raw()[i] = 0.0;
            t.accumulate(a, std::move(g));
        });
    }

    NodeId exp(NodeId a) {
        Matrix out = value(a);
        for (double& v : out.raw()) v = std::exp(v);
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            Matrix g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) g.raw()[i] *= t.value(self).raw()[i];
            t.accumulate(a, std::move(g));
        });
    }

    NodeId square(NodeId a) {
        Matrix out = value(a);
        for (double& v : out.raw()) v = v * v;
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            Matrix g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) g.raw()[i] *= 2.0 * t.value(a).raw()[i];
            t.accumulate(a, std::move(g));
        });
    }

    // log(max(u, 1e-12)); gradient is zero on the clamped branch.
    NodeId log_guarded(NodeId a) {
        Matrix out = value(a);
        for (double& v : out.raw()) v = fewgan::guarded_log(v);
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            Matrix g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double u = t.value(a).raw()[i];
                g.raw()[i] = u > kLogGuard ? g.raw()[i] / u : 0.0;
            }
            t.accumulate(a, std::move(g));
        });
    }

    NodeId clamp(NodeId a, double lo, double hi) {
        Matrix out = value(a);
        for (double& v : out.raw()) v = v < lo ? lo : (v > hi ? hi : v);
        return push(std::move(out), {a}, [a, lo, hi](Tape& t, NodeId self) {
            Matrix g = t.nodes_[self].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double u = t.value(a).raw()[i];
                if (u <= lo || u >= hi) g.raw()[i] = 0.0;
            }
            t.accumulate(a, std::move(g));
        });
    }

    NodeId row_softmax(NodeId a) {
        Matrix out = value(a);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            double* r = out.row_ptr(i);
            double mx = r[0];
            for (std::size_t j = 1; j < out.cols(); ++j) mx = r[j] > mx ? r[j] : mx;
            double s = 0.0;
            for (std::size_t j = 0; j < out.cols(); ++j) {
                r[j] = std::exp(r[j] - mx);
                s += r[j];
            }
            for (std::size_t j = 0; j < out.cols(); ++j) r[j] /= s;
        }
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            const Matrix& y = t.value(self);
            const Matrix& g = t.nodes_[self].grad;
            Matrix ga(y.rows(), y.cols());
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
            }
            t.accumulate(a, std::move(ga));
        });
    }

    NodeId reduce_sum(NodeId a) {
        KahanSum s;
        for (double v : value(a).raw()) s.add(v);
        Matrix out(1, 1);
        out(0, 0) = s.value();
        return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
            const double g = t.nodes_[self].grad(0, 0);
            Matrix ga(t.value(a).rows(), t.value(a).cols(), g);
            t.accumulate(a, std::move(ga));
        });
    }

    NodeId reduce_mean(NodeId a) {
        const double n = static_cast<double>(value(a).size());
        KahanSum s;
        for (double v : value(a).raw()) s.add(v);
        Matrix out(1, 1);
        out(0, 0) = s.value() / n;
        return push(std::move(out), {a}, [a, n](Tape& t, NodeId self) {
            const double g = t.nodes_[self].grad(0, 0) / n;
            Matrix ga(t.value(a).rows(), t.value(a).cols(), g);
            t.accumulate(a, std::move(ga));
        });
    }

    NodeId concat_rows(NodeId a, NodeId b) {
        Matrix out = fewgan::concat_rows(value(a), value(b));
        const std::size_t a_rows = value(a).rows();
        return push(std::move(out), {a, b}, [a, b, a_rows](Tape& t, NodeId self) {
            const Matrix& g = t.nodes_[self].grad;
            Matrix ga(a_rows, g.cols());
            Matrix gb(g.rows() - a_rows, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    if (i < a_rows)
                        ga(i, j) = g(i, j);
                    else
                        gb(i - a_rows, j) = g(i, j);
                }
            t.accumulate(a, std::move(ga));
            t.accumulate(b, std::move(gb));
        });
    }

    // Mean of 1x1 nodes. The forward value is compensated so that H identical
    // terms reduce to the term itself bit-exactly.
    NodeId mean_scalars(std::vector<NodeId> terms) {
        if (terms.empty()) throw ContractError("mean_scalars: no terms");
        KahanSum s;
        for (NodeId id : terms) {
            if (value(id).size() != 1) throw ContractError("mean_scalars: non-scalar term");
            s.add(scalar(id));
        }
        const double h = static_cast<double>(terms.size());
        Matrix out(1, 1);
        out(0, 0) = exact_divide(s, h);
        return push(std::move(out), terms, [terms, h](Tape& t, NodeId self) {
            const double g = t.nodes_[self].grad(0, 0) / h;
            Matrix unit(1, 1, g);
            for (NodeId id : terms) t.accumulate(id, unit);
        });
    }

    // sum_t w_t * M_t over same-shape nodes.
    NodeId weighted_sum(const std::vector<NodeId>& terms, const std::vector<double>& weights) {
        if (terms.empty() || terms.size() != weights.size())
            throw ContractError("weighted_sum: term/weight count mismatch");
        Matrix out(value(terms[0]).rows(), value(terms[0]).cols());
        for (std::size_t t = 0; t < terms.size(); ++t) {
            const Matrix& v = value(terms[t]);
            if (!v.same_shape(out)) throw ShapeError("weighted_sum: shape mismatch");
            for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] += weights[t] * v.raw()[i];
        }
        return push(std::move(out), terms, [terms, weights](Tape& t, NodeId self) {
            for (std::size_t k = 0; k < terms.size(); ++k)
                t.accumulate(terms[k], fewgan::scale(t.nodes_[self].grad, weights[k]));
        });
    }

    // Seeds root with 1 and propagates through every recorded node in reverse
    // id order. Leaves that do not influence the root keep an all-zero
    // gradient of their value's shape.
    void backward(NodeId root) {
        if (value(root).rows() != 1 || value(root).cols() != 1)
            throw ContractError("backward: root must be a 1x1 node");
        for (auto& n : nodes_) {
            n.grad = Matrix(n.value.rows(), n.value.cols());
            n.touched = false;
        }
        nodes_[root].grad(0, 0) = 1.0;
        nodes_[root].touched = true;
        for (NodeId id = root; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.touched || !n.backprop) continue;
            n.backprop(*this, id);
        }
    }

private:
    NodeId push(Matrix value, std::vector<NodeId> parents, std::function<void(Tape&, NodeId)> bp) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backprop = std::move(bp);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    void accumulate(NodeId id, Matrix g) {
        Node& n = nodes_[id];
        if (!n.grad.same_shape(g)) throw ShapeError("gradient shape mismatch");
        for (std::size_t i = 0; i < g.size(); ++i) n.grad.raw()[i] += g.raw()[i];
        n.touched = true;
    }

    // (s + c) / h rounded once, so an exactly-representable quotient comes out
    // exact. Relies on fma for the residual.
    static double exact_divide(const KahanSum& s, double h) {
        const double q0 = s.primary() / h;
        const double resid = std::fma(-q0, h, s.primary()) + s.compensation();
        return q0 + resid / h;
    }

    std::vector<Node> nodes_;
};

}  // namespace fewgan
