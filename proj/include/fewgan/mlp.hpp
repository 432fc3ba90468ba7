#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fewgan/matrix.hpp"
#include "fewgan/rng.hpp"
#include "fewgan/tape.hpp"

namespace fewgan {

enum class Activation { identity, relu, tanh, sigmoid };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    throw LoadError("unknown activation tag: " + s);
}

// Feed-forward network. Serves as generator, sub-discriminator/critic, and
// classifier body; the role is fixed only by dimensions and the final
// activation.
struct MlpModel {
    struct Layer {
        Matrix weight;  // in_dim x out_dim
        Matrix bias;    // 1 x out_dim
        Activation act = Activation::identity;
    };

    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> ps;
        for (auto& l : layers) {
            ps.push_back(&l.weight);
            ps.push_back(&l.bias);
        }
        return ps;
    }
};

// He/Xavier-style scaled normal init.
inline MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t output_dim, Activation hidden_act, Activation final_act,
                         Rng& rng) {
    MlpModel m;
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (auto h : hidden) dims.push_back(h);
    dims.push_back(output_dim);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        MlpModel::Layer l;
        const double s = std::sqrt(2.0 / static_cast<double>(dims[i]));
        l.weight = rng.normal_matrix(dims[i], dims[i + 1]);
        for (double& v : l.weight.raw()) v *= s;
        l.bias = Matrix(1, dims[i + 1]);
        l.act = (i + 2 == dims.size()) ? final_act : hidden_act;
        m.layers.push_back(std::move(l));
    }
    return m;
}

// Model parameters registered as tape leaves, so one backward pass delivers
// both parameter and input gradients.
struct TapedMlp {
    std::vector<Tape::NodeId> weights;
    std::vector<Tape::NodeId> biases;
};

inline TapedMlp push_model(Tape& tape, const MlpModel& model) {
    TapedMlp t;
    for (const auto& l : model.layers) {
        t.weights.push_back(tape.leaf(l.weight));
        t.biases.push_back(tape.leaf(l.bias));
    }
    return t;
}

inline Tape::NodeId apply_activation(Tape& tape, Tape::NodeId x, Activation a) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return tape.relu(x);
        case Activation::tanh: return tape.tanh(x);
        case Activation::sigmoid: return tape.sigmoid(x);
    }
    return x;
}

// Forward pass on an existing tape. With skip_final_activation the returned
// node is the last pre-activation (the logit a sampler or loss may need raw).
inline Tape::NodeId forward_on_tape(Tape& tape, const TapedMlp& tm, const MlpModel& model,
                                    Tape::NodeId input, bool skip_final_activation = false) {
    if (model.layers.empty()) throw ContractError("forward: model has no layers");
    if (tape.value(input).cols() != model.input_dim())
        throw ShapeError("forward: input has " + std::to_string(tape.value(input).cols()) +
                         " columns, model expects " + std::to_string(model.input_dim()));
    Tape::NodeId x = input;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        x = tape.broadcast_add_row(tape.matmul(x, tm.weights[i]), tm.biases[i]);
        const bool last = (i + 1 == model.layers.size());
        if (!(last && skip_final_activation)) x = apply_activation(tape, x, model.layers[i].act);
    }
    return x;
}

// Plain evaluation; records onto a scratch tape internally.
inline Matrix forward(const MlpModel& model, const Matrix& input) {
    Tape tape;
    TapedMlp tm = push_model(tape, model);
    Tape::NodeId out = forward_on_tape(tape, tm, model, tape.leaf(input));
    return tape.value(out);
}

}  // namespace fewgan
