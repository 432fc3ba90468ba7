#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fewgan/ensemble.hpp"
#include "fewgan/matrix.hpp"
#include "fewgan/mlp.hpp"
#include "fewgan/optim.hpp"
#include "fewgan/rng.hpp"
#include "fewgan/tape.hpp"

namespace fewgan {

enum class GanMode { gan, wgan };

inline std::string gan_mode_name(GanMode m) { return m == GanMode::gan ? "gan" : "wgan"; }
inline GanMode gan_mode_from_name(const std::string& s) {
    if (s == "gan") return GanMode::gan;
    if (s == "wgan") return GanMode::wgan;
    throw ConfigError("unknown gan mode: " + s);
}

// Standard-normal latent prior.
struct LatentPrior {
    std::size_t dim = 16;

    Matrix sample(std::size_t n, Rng& rng) const { return rng.normal_matrix(n, dim); }

    double log_density(const Matrix& z) const {
        if (z.rows() != 1 || z.cols() != dim) throw ShapeError("prior: z must be 1 x dim");
        double q = 0.0;
        for (double v : z.raw()) q += v * v;
        return -0.5 * q - 0.5 * static_cast<double>(dim) * std::log(2.0 * 3.14159265358979323846);
    }
};

struct GanConfig {
    GanMode mode = GanMode::gan;
    std::size_t latent_dim = 16;
    std::size_t batch_size = 64;
    std::size_t steps = 300;
    // 0 means "mode default": 1 for gan, 5 for wgan.
    std::size_t disc_steps = 0;
    double clip = 0.01;  // wgan weight clamp bound c
    bool saturating_generator_loss = false;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    std::vector<std::size_t> gen_hidden = {64, 64};
    std::vector<std::size_t> disc_hidden = {64, 64};
    Activation gen_output = Activation::identity;
    CombineKind train_combine = CombineKind::mean_probability;
    // Train discriminators against a fixed generator (post-hoc refit of the
    // density-ratio model for an already-trained or handicapped generator).
    bool freeze_generator = false;

    std::size_t effective_disc_steps() const {
        if (disc_steps > 0) return disc_steps;
        return mode == GanMode::wgan ? 5 : 1;
    }

    void validate() const {
        if (steps < 1) throw ConfigError("gan: steps must be >= 1");
        if (latent_dim < 1) throw ConfigError("gan: latent_dim must be >= 1");
        if (batch_size < 1) throw ConfigError("gan: batch_size must be >= 1");
        if (mode == GanMode::wgan && !(clip > 0.0))
            throw ConfigError("wgan: clip bound must be positive");
    }
};

struct LossRecord {
    std::size_t step;
    double d_loss;
    double g_loss;
};

struct TrainedGan {
    MlpModel generator;
    std::vector<MlpModel> sub_discriminators;
    GanConfig config;
    std::size_t data_dim = 0;
    std::vector<LossRecord> loss_history;
    // One index set per sub-discriminator when bagging was on; empty otherwise.
    std::vector<std::vector<std::size_t>> bootstrap_indices;

    LatentPrior prior() const { return LatentPrior{config.latent_dim}; }
};

// V(G, D) for one batch of discriminator outputs: mean log D(x) +
// mean log(1 - D(G(z))), logs guarded.
inline double gan_batch_value(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
    if (d_real.empty() || d_fake.empty()) throw ContractError("gan_batch_value: empty batch");
    KahanSum real_term, fake_term;
    for (double p : d_real) {
        if (!(p >= 0.0 && p <= 1.0))
            throw ContractError("gan_batch_value: probability outside [0,1]");
        real_term.add(guarded_log(p));
    }
    for (double p : d_fake) {
        if (!(p >= 0.0 && p <= 1.0))
            throw ContractError("gan_batch_value: probability outside [0,1]");
        fake_term.add(guarded_log(1.0 - p));
    }
    return real_term.value() / static_cast<double>(d_real.size()) +
           fake_term.value() / static_cast<double>(d_fake.size());
}

// Critic value: mean score on real minus mean score on fake.
inline double wgan_batch_value(const std::vector<double>& critic_real,
                               const std::vector<double>& critic_fake) {
    if (critic_real.empty() || critic_fake.empty())
        throw ContractError("wgan_batch_value: empty batch");
    KahanSum r, f;
    for (double v : critic_real) {
        if (!std::isfinite(v)) throw ContractError("wgan_batch_value: non-finite score");
        r.add(v);
    }
    for (double v : critic_fake) {
        if (!std::isfinite(v)) throw ContractError("wgan_batch_value: non-finite score");
        f.add(v);
    }
    return r.value() / static_cast<double>(critic_real.size()) -
           f.value() / static_cast<double>(critic_fake.size());
}

inline void clip_weights(MlpModel& m, double c) {
    for (auto& l : m.layers) {
        for (double& v : l.weight.raw()) v = v < -c ? -c : (v > c ? c : v);
        for (double& v : l.bias.raw()) v = v < -c ? -c : (v > c ? c : v);
    }
}

namespace detail {

inline Matrix rows_at(const Matrix& data, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), data.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < data.cols(); ++c) out(i, c) = data(idx[i], c);
    return out;
}

// Binary cross-entropy discriminator loss on one tape: real rows labeled 1,
// fake rows labeled 0, single forward over the concatenated batch.
inline Tape::NodeId disc_bce_loss(Tape& tape, const TapedMlp& tm, const MlpModel& d,
                                  Tape::NodeId real, Tape::NodeId fake) {
    const std::size_t n_real = tape.value(real).rows();
    const std::size_t n_fake = tape.value(fake).rows();
    Tape::NodeId all = tape.concat_rows(real, fake);
    Tape::NodeId p = forward_on_tape(tape, tm, d, all);
    Matrix y(n_real + n_fake, 1), ym(n_real + n_fake, 1);
    for (std::size_t i = 0; i < n_real + n_fake; ++i) {
        y(i, 0) = i < n_real ? 1.0 : 0.0;
        ym(i, 0) = 1.0 - y(i, 0);
    }
    Tape::NodeId log_p = tape.log_guarded(p);
    Tape::NodeId log_1mp = tape.log_guarded(tape.add_scalar(tape.scale(p, -1.0), 1.0));
    Tape::NodeId ll = tape.add(tape.hadamard(tape.leaf(y), log_p),
                               tape.hadamard(tape.leaf(ym), log_1mp));
    return tape.scale(tape.reduce_mean(ll), -1.0);
}

}  // namespace detail

// Samples n latent draws from the prior and maps them through the generator,
// preserving the (z_i, x_i) pairing.
inline std::pair<Matrix, Matrix> generate(const MlpModel& g, const LatentPrior& prior,
                                          std::size_t n, Rng& rng) {
    if (n < 1) throw ContractError("generate: n must be >= 1");
    Matrix z = prior.sample(n, rng);
    Matrix x = forward(g, z);
    return {std::move(z), std::move(x)};
}

// Adversarial training of one generator against T sub-discriminators.
//
// The generator descends the loss of the COMBINED discriminator (uniform
// weights at this stage; learned softmax weights are fit after training).
// With bagging on, sub-discriminator t sees only its own bootstrap resample
// of the real rows, drawn once with replacement at full dataset size. All
// ensemble diversity comes from those resamples: sub-discriminators share
// init and batch-index streams, so the no-bootstrap ensemble degenerates to T
// copies of one discriminator and the T=1 run exactly.
inline TrainedGan train_gan(const Matrix& data, const GanConfig& config, std::size_t t_subs,
                            bool bootstrap, Rng& rng,
                            const MlpModel* warm_start_generator = nullptr) {
    config.validate();
    if (data.rows() == 0) throw DataError("train_gan: empty dataset");
    if (t_subs < 1) throw ContractError("train_gan: need at least one sub-discriminator");

    const std::size_t n = data.rows();
    const std::size_t data_dim = data.cols();
    const std::size_t batch = std::min<std::size_t>(config.batch_size, n);

    TrainedGan out;
    out.config = config;
    out.data_dim = data_dim;

    if (warm_start_generator) {
        if (warm_start_generator->input_dim() != config.latent_dim ||
            warm_start_generator->output_dim() != data_dim)
            throw ShapeError("train_gan: warm-start generator dims do not match config/data");
        out.generator = *warm_start_generator;
    } else {
        if (config.freeze_generator)
            throw ContractError("train_gan: freeze_generator needs a warm-start generator");
        Rng gen_init = rng.spawn(1);
        out.generator = make_mlp(config.latent_dim, config.gen_hidden, data_dim, Activation::tanh,
                                 config.gen_output, gen_init);
    }
    const Activation disc_final =
        config.mode == GanMode::gan ? Activation::sigmoid : Activation::identity;
    out.sub_discriminators.reserve(t_subs);
    for (std::size_t t = 0; t < t_subs; ++t) {
        Rng disc_init = rng.spawn(2);  // shared stream: identical inits across t
        out.sub_discriminators.push_back(
            make_mlp(data_dim, config.disc_hidden, 1, Activation::relu, disc_final, disc_init));
    }

    Rng boot_rng = rng.spawn(3);
    if (bootstrap) {
        out.bootstrap_indices.resize(t_subs);
        for (std::size_t t = 0; t < t_subs; ++t) {
            out.bootstrap_indices[t].resize(n);
            for (auto& ix : out.bootstrap_indices[t]) ix = boot_rng.integer(n);
        }
    }

    std::vector<Rng> disc_batch_rngs;
    for (std::size_t t = 0; t < t_subs; ++t) disc_batch_rngs.push_back(rng.spawn(4));
    Rng gen_batch_rng = rng.spawn(5);

    OptimizerState gen_opt(config.optimizer);
    std::vector<OptimizerState> disc_opts(t_subs, OptimizerState(config.optimizer));

    const LatentPrior prior{config.latent_dim};
    const std::size_t disc_steps = config.effective_disc_steps();
    const CombineRule train_rule = CombineRule::uniform(config.train_combine, t_subs);

    out.loss_history.reserve(config.steps);
    for (std::size_t step = 1; step <= config.steps; ++step) {
        double d_loss_sum = 0.0;

        for (std::size_t k = 0; k < disc_steps; ++k) {
            for (std::size_t t = 0; t < t_subs; ++t) {
                Rng& drng = disc_batch_rngs[t];
                std::vector<std::size_t> idx(batch);
                for (auto& ix : idx) {
                    const std::size_t pick = drng.integer(n);
                    ix = bootstrap ? out.bootstrap_indices[t][pick] : pick;
                }
                Matrix real = detail::rows_at(data, idx);
                Matrix fake = forward(out.generator, prior.sample(batch, drng));

                Tape tape;
                TapedMlp tm = push_model(tape, out.sub_discriminators[t]);
                Tape::NodeId real_id = tape.leaf(std::move(real));
                Tape::NodeId fake_id = tape.leaf(std::move(fake));
                Tape::NodeId loss;
                if (config.mode == GanMode::gan) {
                    loss = detail::disc_bce_loss(tape, tm, out.sub_discriminators[t], real_id,
                                                 fake_id);
                } else {
                    Tape::NodeId sr = forward_on_tape(tape, tm, out.sub_discriminators[t], real_id);
                    Tape::NodeId sf = forward_on_tape(tape, tm, out.sub_discriminators[t], fake_id);
                    loss = tape.sub(tape.reduce_mean(sf), tape.reduce_mean(sr));
                }
                tape.backward(loss);
                d_loss_sum += tape.scalar(loss);

                std::vector<Matrix*> params = out.sub_discriminators[t].parameters();
                std::vector<Matrix> grads;
                grads.reserve(params.size());
                for (std::size_t li = 0; li < tm.weights.size(); ++li) {
                    grads.push_back(tape.grad(tm.weights[li]));
                    grads.push_back(tape.grad(tm.biases[li]));
                }
                optimizer_step(params, grads, disc_opts[t]);
                if (config.mode == GanMode::wgan)
                    clip_weights(out.sub_discriminators[t], config.clip);
            }
        }

        // Generator step against the combined discriminator.
        Tape tape;
        TapedMlp g_tm = push_model(tape, out.generator);
        Tape::NodeId z = tape.leaf(prior.sample(batch, gen_batch_rng));
        Tape::NodeId x = forward_on_tape(tape, g_tm, out.generator, z);
        Tape::NodeId g_loss;
        if (config.mode == GanMode::gan) {
            std::vector<Tape::NodeId> logits;
            for (const auto& d : out.sub_discriminators) {
                TapedMlp dm = push_model(tape, d);
                logits.push_back(forward_on_tape(tape, dm, d, x, /*skip_final_activation=*/true));
            }
            Tape::NodeId p = combine_logits_on_tape(tape, logits, train_rule);
            if (config.saturating_generator_loss) {
                // literal fake term of the minimax objective
                g_loss = tape.reduce_mean(
                    tape.log_guarded(tape.add_scalar(tape.scale(p, -1.0), 1.0)));
            } else {
                g_loss = tape.scale(tape.reduce_mean(tape.log_guarded(p)), -1.0);
            }
        } else {
            std::vector<Tape::NodeId> scores;
            for (const auto& d : out.sub_discriminators) {
                TapedMlp dm = push_model(tape, d);
                scores.push_back(forward_on_tape(tape, dm, d, x));
            }
            Tape::NodeId mean_score = tape.weighted_sum(
                scores, std::vector<double>(scores.size(), 1.0 / static_cast<double>(t_subs)));
            g_loss = tape.scale(tape.reduce_mean(mean_score), -1.0);
        }
        if (!config.freeze_generator) {
            tape.backward(g_loss);
            std::vector<Matrix*> g_params = out.generator.parameters();
            std::vector<Matrix> g_grads;
            for (std::size_t li = 0; li < g_tm.weights.size(); ++li) {
                g_grads.push_back(tape.grad(g_tm.weights[li]));
                g_grads.push_back(tape.grad(g_tm.biases[li]));
            }
            optimizer_step(g_params, g_grads, gen_opt);
        }

        const double d_loss = d_loss_sum / static_cast<double>(disc_steps * t_subs);
        const double g_loss_v = tape.scalar(g_loss);
        if (!std::isfinite(d_loss) || !std::isfinite(g_loss_v))
            throw TrainingDivergedError("train_gan: non-finite loss", step);
        out.loss_history.push_back({step, d_loss, g_loss_v});
    }
    return out;
}

}  // namespace fewgan
