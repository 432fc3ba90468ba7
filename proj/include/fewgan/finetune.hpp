#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "fewgan/matrix.hpp"
#include "fewgan/mlp.hpp"
#include "fewgan/optim.hpp"
#include "fewgan/rng.hpp"
#include "fewgan/tape.hpp"

namespace fewgan {

// Shared feature body plus H linear classification heads. Predictions average
// the per-head softmax outputs.
struct MultiHeadClassifier {
    struct Head {
        Matrix weight;  // feature_dim x n_classes
        Matrix bias;    // 1 x n_classes
    };

    MlpModel body;
    std::vector<Head> heads;
    std::size_t n_classes = 0;

    std::size_t feature_dim() const { return body.output_dim(); }
    std::size_t input_dim() const { return body.input_dim(); }
};

struct BodySpec {
    std::vector<std::size_t> hidden = {64};
    std::size_t feature_dim = 32;
};

struct FinetuneConfig {
    std::size_t heads = 5;          // H
    std::size_t epochs = 300;       // ep_t, full-batch steps during fine-tuning
    double gamma = 0.01;            // L2 coefficient on head weights
    double learning_rate = 0.05;    // fine-tuning (plain gradient descent)
    std::uint64_t head_init_seed = 7;
    bool freeze_body = true;
    bool allow_zero_epochs = false;  // explicit opt-in for ep_t = 0
    std::size_t pretrain_epochs = 200;
    double pretrain_learning_rate = 5e-3;  // pre-training uses adam

    void validate() const {
        if (heads < 1) throw ContractError("finetune: need at least one head");
        if (gamma < 0.0) throw ContractError("finetune: gamma must be >= 0");
    }
};

inline Matrix one_hot(const std::vector<int>& labels, std::size_t n_classes) {
    Matrix y(labels.size(), n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes)
            throw DataError("label " + std::to_string(labels[i]) + " out of range at row " +
                            std::to_string(i));
        y(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return y;
}

namespace detail {

struct TapedClassifier {
    TapedMlp body;
    std::vector<Tape::NodeId> head_weights;
    std::vector<Tape::NodeId> head_biases;
    Tape::NodeId loss = -1;
};

// Builds the multi-head loss on a tape:
//   L = (1/H) sum_h [ CE_h + gamma * |w_h|^2 ]
// with CE_h the mean softmax cross-entropy of head h and the bias excluded
// from the penalty. The head mean is compensated so that H identical heads
// reduce to the single-head loss exactly.
inline TapedClassifier build_mh_loss(Tape& tape, const MultiHeadClassifier& model,
                                     const Matrix& x, const Matrix& y_onehot, double gamma) {
    if (x.rows() == 0) throw DataError("mh_loss: empty batch");
    if (y_onehot.rows() != x.rows() || y_onehot.cols() != model.n_classes)
        throw ShapeError("mh_loss: one-hot labels do not match batch/classes");

    TapedClassifier tc;
    tc.body = push_model(tape, model.body);
    Tape::NodeId features = forward_on_tape(tape, tc.body, model.body, tape.leaf(x));
    Tape::NodeId y = tape.leaf(y_onehot);
    const double inv_n = 1.0 / static_cast<double>(x.rows());

    std::vector<Tape::NodeId> head_losses;
    for (const auto& head : model.heads) {
        Tape::NodeId w = tape.leaf(head.weight);
        Tape::NodeId b = tape.leaf(head.bias);
        tc.head_weights.push_back(w);
        tc.head_biases.push_back(b);
        Tape::NodeId logits = tape.broadcast_add_row(tape.matmul(features, w), b);
        Tape::NodeId log_p = tape.log_guarded(tape.row_softmax(logits));
        Tape::NodeId ce = tape.scale(tape.reduce_sum(tape.hadamard(y, log_p)), -inv_n);
        if (gamma != 0.0) {
            Tape::NodeId penalty = tape.scale(tape.reduce_sum(tape.square(w)), gamma);
            head_losses.push_back(tape.add(ce, penalty));
        } else {
            head_losses.push_back(ce);
        }
    }
    tc.loss = tape.mean_scalars(head_losses);
    return tc;
}

inline void check_labels(const std::vector<int>& labels) {
    std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) throw DataError("training data covers a single class");
}

}  // namespace detail

// Multi-head loss value (Eq.-level contract; training uses the same tape).
inline double mh_loss(const MultiHeadClassifier& model, const Matrix& x, const Matrix& y_onehot,
                      double gamma) {
    Tape tape;
    return tape.scalar(detail::build_mh_loss(tape, model, x, y_onehot, gamma).loss);
}

inline MultiHeadClassifier::Head make_head(std::size_t feature_dim, std::size_t n_classes,
                                           Rng& rng) {
    MultiHeadClassifier::Head h;
    const double s = std::sqrt(1.0 / static_cast<double>(feature_dim));
    h.weight = rng.normal_matrix(feature_dim, n_classes);
    for (double& v : h.weight.raw()) v *= s;
    h.bias = Matrix(1, n_classes);
    return h;
}

// Joint body+heads training on the (corrected) generated dataset. Full-batch
// adam; one epoch is one step at desk scale.
inline MultiHeadClassifier pretrain(const Matrix& data, const std::vector<int>& labels,
                                    const BodySpec& body_spec, const FinetuneConfig& config,
                                    std::size_t n_classes, Rng& rng,
                                    std::vector<double>* loss_history = nullptr) {
    config.validate();
    if (config.pretrain_epochs == 0) throw ContractError("pretrain: zero epochs");
    if (data.rows() == 0 || labels.size() != data.rows())
        throw DataError("pretrain: data/label size mismatch or empty data");
    detail::check_labels(labels);

    MultiHeadClassifier model;
    model.n_classes = n_classes;
    Rng body_rng = rng.spawn(1);
    model.body = make_mlp(data.cols(), body_spec.hidden, body_spec.feature_dim, Activation::relu,
                          Activation::relu, body_rng);
    for (std::size_t h = 0; h < config.heads; ++h) {
        Rng head_rng = rng.spawn(2 + h);
        model.heads.push_back(make_head(body_spec.feature_dim, n_classes, head_rng));
    }

    Matrix y = one_hot(labels, n_classes);
    OptimizerConfig opt_cfg;
    opt_cfg.kind = OptimizerKind::adam;
    opt_cfg.learning_rate = config.pretrain_learning_rate;
    OptimizerState opt(opt_cfg);

    for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
        Tape tape;
        auto tc = detail::build_mh_loss(tape, model, data, y, config.gamma);
        tape.backward(tc.loss);
        if (loss_history) loss_history->push_back(tape.scalar(tc.loss));

        std::vector<Matrix*> params;
        std::vector<Matrix> grads;
        for (std::size_t li = 0; li < model.body.layers.size(); ++li) {
            params.push_back(&model.body.layers[li].weight);
            grads.push_back(tape.grad(tc.body.weights[li]));
            params.push_back(&model.body.layers[li].bias);
            grads.push_back(tape.grad(tc.body.biases[li]));
        }
        for (std::size_t h = 0; h < model.heads.size(); ++h) {
            params.push_back(&model.heads[h].weight);
            grads.push_back(tape.grad(tc.head_weights[h]));
            params.push_back(&model.heads[h].bias);
            grads.push_back(tape.grad(tc.head_biases[h]));
        }
        optimizer_step(params, grads, opt);
    }
    return model;
}

// ep_t epochs of full-batch gradient descent on the multi-head loss over the
// support set. Heads are re-initialized with distinct per-head streams; the
// body stays frozen unless the config unfreezes it.
inline MultiHeadClassifier finetune(const MultiHeadClassifier& pretrained, const Matrix& support_x,
                                    const std::vector<int>& support_y,
                                    const FinetuneConfig& config,
                                    std::vector<double>* loss_history = nullptr) {
    config.validate();
    if (support_x.rows() == 0) throw DataError("finetune: empty support set");
    for (int c : support_y)
        if (c < 0 || static_cast<std::size_t>(c) >= pretrained.n_classes)
            throw ContractError("finetune: support label outside the model's classes");
    if (config.epochs == 0) {
        if (!config.allow_zero_epochs)
            throw ContractError("finetune: ep_t = 0 requires the explicit identity flag");
        return pretrained;  // identity fine-tune
    }

    MultiHeadClassifier model = pretrained;
    model.heads.clear();
    Rng head_base(config.head_init_seed);
    for (std::size_t h = 0; h < config.heads; ++h) {
        Rng head_rng = head_base.spawn(h);
        model.heads.push_back(make_head(model.feature_dim(), model.n_classes, head_rng));
    }

    Matrix y = one_hot(support_y, model.n_classes);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Tape tape;
        auto tc = detail::build_mh_loss(tape, model, support_x, y, config.gamma);
        tape.backward(tc.loss);
        if (loss_history) loss_history->push_back(tape.scalar(tc.loss));

        for (std::size_t h = 0; h < model.heads.size(); ++h) {
            Matrix& w = model.heads[h].weight;
            Matrix& b = model.heads[h].bias;
            const Matrix& gw = tape.grad(tc.head_weights[h]);
            const Matrix& gb = tape.grad(tc.head_biases[h]);
            for (std::size_t i = 0; i < w.size(); ++i)
                w.raw()[i] -= config.learning_rate * gw.raw()[i];
            for (std::size_t i = 0; i < b.size(); ++i)
                b.raw()[i] -= config.learning_rate * gb.raw()[i];
        }
        if (!config.freeze_body) {
            for (std::size_t li = 0; li < model.body.layers.size(); ++li) {
                Matrix& w = model.body.layers[li].weight;
                Matrix& b = model.body.layers[li].bias;
                const Matrix& gw = tape.grad(tc.body.weights[li]);
                const Matrix& gb = tape.grad(tc.body.biases[li]);
                for (std::size_t i = 0; i < w.size(); ++i)
                    w.raw()[i] -= config.learning_rate * gw.raw()[i];
                for (std::size_t i = 0; i < b.size(); ++i)
                    b.raw()[i] -= config.learning_rate * gb.raw()[i];
            }
        }
    }
    return model;
}

struct Prediction {
    Matrix probabilities;     // n x n_classes, head-averaged softmax
    std::vector<int> labels;  // argmax, ties to the lowest class index
};

inline Prediction predict(const MultiHeadClassifier& model, const Matrix& x) {
    const std::size_t n = x.rows();
    Matrix features = forward(model.body, x);
    Matrix probs(n, model.n_classes);

    std::vector<Matrix> per_head;
    per_head.reserve(model.heads.size());
    for (const auto& head : model.heads) {
        Matrix logits = matmul(features, head.weight);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < model.n_classes; ++c) logits(i, c) += head.bias(0, c);
        // row softmax
        for (std::size_t i = 0; i < n; ++i) {
            double mx = logits(i, 0);
            for (std::size_t c = 1; c < model.n_classes; ++c)
                mx = logits(i, c) > mx ? logits(i, c) : mx;
            double s = 0.0;
            for (std::size_t c = 0; c < model.n_classes; ++c) {
                logits(i, c) = std::exp(logits(i, c) - mx);
                s += logits(i, c);
            }
            for (std::size_t c = 0; c < model.n_classes; ++c) logits(i, c) /= s;
        }
        per_head.push_back(std::move(logits));
    }

    const double h = static_cast<double>(model.heads.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < model.n_classes; ++c) {
            KahanSum s;
            for (const auto& ph : per_head) s.add(ph(i, c));
            probs(i, c) = s.value() / h;
        }

    Prediction out;
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < model.n_classes; ++c)
            if (probs(i, c) > probs(i, best)) best = c;
        out.labels[i] = static_cast<int>(best);
    }
    out.probabilities = std::move(probs);
    return out;
}

}  // namespace fewgan
