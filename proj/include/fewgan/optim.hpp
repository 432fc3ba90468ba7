#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fewgan/matrix.hpp"

namespace fewgan {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Per-parameter Adam moments plus the shared step counter. Buffers are
// created lazily on the first step and must shape-match thereafter.
struct OptimizerState {
    OptimizerConfig config;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::size_t step_count = 0;

    explicit OptimizerState(OptimizerConfig cfg = {}) : config(cfg) {}
};

inline void optimizer_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
                           OptimizerState& state) {
    if (params.size() != grads.size())
        throw ShapeError("optimizer_step: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i]->same_shape(grads[i]))
            throw ShapeError("optimizer_step: gradient shape mismatch at parameter " +
                             std::to_string(i));

    state.step_count += 1;
    const OptimizerConfig& c = state.config;

    if (c.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < params[i]->size(); ++j)
                params[i]->raw()[j] -= c.learning_rate * grads[i].raw()[j];
        return;
    }

    if (state.m.empty()) {
        for (const auto* p : params) {
            state.m.emplace_back(p->rows(), p->cols());
            state.v.emplace_back(p->rows(), p->cols());
        }
    }
    if (state.m.size() != params.size())
        throw ShapeError("optimizer_step: state was built for a different parameter set");

    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grads[i].raw()[j];
            m.raw()[j] = c.beta1 * m.raw()[j] + (1.0 - c.beta1) * g;
            v.raw()[j] = c.beta2 * v.raw()[j] + (1.0 - c.beta2) * g * g;
            const double mhat = m.raw()[j] / bc1;
            const double vhat = v.raw()[j] / bc2;
            p.raw()[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    }
}

}  // namespace fewgan
