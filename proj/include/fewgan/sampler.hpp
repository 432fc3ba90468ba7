#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fewgan/ensemble.hpp"
#include "fewgan/gan.hpp"
#include "fewgan/matrix.hpp"
#include "fewgan/mlp.hpp"
#include "fewgan/parallel.hpp"
#include "fewgan/rng.hpp"
#include "fewgan/tape.hpp"

namespace fewgan {

// Log-density (up to a constant) of the distribution a latent-space chain
// targets, with its gradient. The GAN-backed implementation composes the
// generator and the calibrated ensemble; tests substitute analytic targets.
class LatentTarget {
public:
    virtual ~LatentTarget() = default;
    virtual std::size_t dim() const = 0;
    // Returns log p_t(z); fills grad (1 x dim) when non-null and, when the
    // target lives behind a generator, x_out = G(z) (otherwise x_out = z).
    virtual double log_density(const Matrix& z, Matrix* grad, Matrix* x_out = nullptr) const = 0;
};

// log p_0(z) + log d(G(z)) with d the calibrated ensemble's density ratio.
// Since sigmoid(u)/(1-sigmoid(u)) = exp(u), the ratio term reduces to
// a * logit(D(G(z))) + b, all evaluated on one tape so a single backward pass
// yields the latent gradient.
class GanLatentTarget : public LatentTarget {
public:
    GanLatentTarget(const MlpModel& generator, const EnsembleDiscriminator& ensemble,
                    LatentPrior prior)
        : generator_(generator), ensemble_(ensemble), prior_(prior) {
        if (generator_.input_dim() != prior_.dim)
            throw ShapeError("latent target: generator input dim != prior dim");
    }

    std::size_t dim() const override { return prior_.dim; }

    double log_density(const Matrix& z, Matrix* grad, Matrix* x_out = nullptr) const override {
        if (!z.all_finite()) throw SamplerError("log_target: non-finite latent point");
        Tape tape;
        Tape::NodeId z_id = tape.leaf(z);

        TapedMlp g_tm = push_model(tape, generator_);
        Tape::NodeId x = forward_on_tape(tape, g_tm, generator_, z_id);

        std::vector<Tape::NodeId> logits;
        logits.reserve(ensemble_.size());
        for (const auto& d : ensemble_.sub_discriminators) {
            TapedMlp dm = push_model(tape, d);
            const bool skip = d.layers.back().act == Activation::sigmoid;
            logits.push_back(forward_on_tape(tape, dm, d, x, skip));
        }
        Tape::NodeId p = combine_logits_on_tape(tape, logits, ensemble_.rule);
        Tape::NodeId pc = tape.clamp(p, kProbClamp, 1.0 - kProbClamp);
        Tape::NodeId lgt = tape.sub(tape.log_guarded(pc),
                                    tape.log_guarded(tape.add_scalar(tape.scale(pc, -1.0), 1.0)));
        Tape::NodeId log_ratio = tape.add_scalar(tape.scale(lgt, ensemble_.calibration.a),
                                                 ensemble_.calibration.b);

        Tape::NodeId log_prior = tape.add_scalar(
            tape.scale(tape.reduce_sum(tape.square(z_id)), -0.5),
            -0.5 * static_cast<double>(prior_.dim) * std::log(2.0 * 3.14159265358979323846));
        Tape::NodeId total = tape.add(log_prior, log_ratio);

        if (grad) {
            tape.backward(total);
            *grad = tape.grad(z_id);
        }
        if (x_out) *x_out = tape.value(x);
        return tape.scalar(total);
    }

private:
    const MlpModel& generator_;
    const EnsembleDiscriminator& ensemble_;
    LatentPrior prior_;
};

// Convenience form of the target density at a single latent point.
inline double log_target(const Matrix& z, const MlpModel& generator,
                         const EnsembleDiscriminator& ensemble, const LatentPrior& prior) {
    return GanLatentTarget(generator, ensemble, prior).log_density(z, nullptr);
}

enum class ChainInit { prior_draw, best_of_k_prior };

struct SamplerConfig {
    double tau = 0.05;
    std::size_t chain_length = 2000;
    std::size_t burn_in = 0;  // 0 means "half the chain"
    std::size_t thinning = 1;
    std::size_t n_chains = 4;
    ChainInit init = ChainInit::best_of_k_prior;
    std::size_t init_candidates = 64;  // k for best-of-k-prior
    bool adapt_tau = true;             // dual averaging during burn-in
    double target_acceptance = 0.574;  // MALA optimum
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    std::size_t effective_burn_in() const { return burn_in > 0 ? burn_in : chain_length / 2; }

    void validate() const {
        if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("sampler: tau must be positive");
        if (chain_length < 1) throw ConfigError("sampler: chain_length must be >= 1");
        if (effective_burn_in() >= chain_length)
            throw ConfigError("sampler: burn-in must be shorter than the chain");
        if (thinning < 1) throw ConfigError("sampler: thinning must be >= 1");
        if (n_chains < 1) throw ConfigError("sampler: need at least one chain");
        if ((chain_length - effective_burn_in()) / thinning < 1)
            throw ConfigError("sampler: chain keeps no post-burn-in samples at this thinning");
    }
};

// Current point of one chain with everything the next proposal needs cached:
// the image x = G(z), log target, and its latent gradient.
struct ChainState {
    Matrix z;
    Matrix x;
    double log_target = 0.0;
    Matrix grad;
};

inline ChainState make_chain_state(const LatentTarget& target, Matrix z) {
    ChainState s;
    s.x = Matrix();
    s.log_target = target.log_density(z, &s.grad, &s.x);
    if (s.x.empty()) s.x = z;
    s.z = std::move(z);
    if (!std::isfinite(s.log_target) || !s.grad.all_finite())
        throw SamplerError("chain state: non-finite log target or gradient");
    return s;
}

struct ChainDiagnostics {
    double acceptance_rate = 0.0;
    double mean_accepted_move = 0.0;  // mean |dz| over accepted moves
    std::vector<double> log_target_trace;
    double tau_final = 0.0;
    std::size_t n_kept = 0;
    bool low_acceptance = false;  // acceptance below 1% over the run
};

namespace detail {

// log N(z; mean, tau * I)
inline double gaussian_log_q(const Matrix& z, const Matrix& mean, double tau) {
    const double d = static_cast<double>(z.cols());
    double q = 0.0;
    for (std::size_t i = 0; i < z.cols(); ++i) {
        const double diff = z(0, i) - mean(0, i);
        q += diff * diff;
    }
    return -0.5 * q / tau - 0.5 * d * std::log(2.0 * 3.14159265358979323846 * tau);
}

inline Matrix drift_mean(const ChainState& s, double tau, bool use_drift) {
    if (!use_drift) return s.z;
    Matrix m = s.z;
    for (std::size_t i = 0; i < m.cols(); ++i) m(0, i) += 0.5 * tau * s.grad(0, i);
    return m;
}

}  // namespace detail

struct Proposal {
    Matrix z;
    double forward_log_q;
};

// Langevin proposal z' = z + (tau/2) * grad log p_t(z) + sqrt(tau) * eps.
inline Proposal langevin_propose(const ChainState& state, double tau, Rng& rng,
                                 bool use_drift = true) {
    if (!state.grad.all_finite()) {
        std::string at;
        for (double v : state.z.raw()) at += std::to_string(v) + " ";
        throw SamplerError("langevin_propose: non-finite gradient at z = [" + at + "]");
    }
    Matrix mean = detail::drift_mean(state, tau, use_drift);
    Matrix z = mean;
    const double sd = std::sqrt(tau);
    for (std::size_t i = 0; i < z.cols(); ++i) z(0, i) += sd * rng.normal();
    const double fwd = detail::gaussian_log_q(z, mean, tau);
    return {std::move(z), fwd};
}

struct Acceptance {
    bool accepted = false;
    double alpha = 0.0;
    ChainState next;  // candidate state if accepted, otherwise the old state
};

// Metropolis-Hastings correction:
//   alpha = min(1, exp[(log p_t(z') + log q(z_k|z')) - (log p_t(z_k) + log q(z'|z_k))])
// The candidate's cached gradient doubles as the reverse-proposal mean.
inline Acceptance mh_accept(const ChainState& state, const Matrix& z_prime,
                            const LatentTarget& target, double tau, Rng& rng,
                            bool use_drift = true) {
    ChainState cand = make_chain_state(target, z_prime);
    const double fwd = detail::gaussian_log_q(z_prime, detail::drift_mean(state, tau, use_drift),
                                              tau);
    const double rev = detail::gaussian_log_q(state.z, detail::drift_mean(cand, tau, use_drift),
                                              tau);
    const double log_alpha = (cand.log_target + rev) - (state.log_target + fwd);
    const double alpha = log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
    Acceptance a;
    a.alpha = alpha;
    a.accepted = rng.uniform() < alpha;
    a.next = a.accepted ? std::move(cand) : state;
    return a;
}

struct SamplerOutput {
    Matrix samples;  // kept x = G(z) rows, stacked across chains
    Matrix latents;  // matching kept z rows
    std::vector<ChainDiagnostics> diagnostics;

    double overall_acceptance() const {
        double s = 0.0;
        for (const auto& d : diagnostics) s += d.acceptance_rate;
        return diagnostics.empty() ? 0.0 : s / static_cast<double>(diagnostics.size());
    }
};

// One full chain: optional dual-averaging tau adaptation during burn-in
// (targeting the configured acceptance rate), then fixed-tau sampling with
// every thinning-th post-burn-in state kept.
inline void run_single_chain(const LatentTarget& target, const SamplerConfig& config, Rng rng,
                             Matrix& kept_x, Matrix& kept_z, ChainDiagnostics& diag) {
    const std::size_t burn = config.effective_burn_in();
    const std::size_t dim = target.dim();

    Matrix z0(1, dim);
    if (config.init == ChainInit::prior_draw) {
        for (double& v : z0.raw()) v = rng.normal();
    } else {
        double best = -1e300;
        for (std::size_t k = 0; k < config.init_candidates; ++k) {
            Matrix zc(1, dim);
            for (double& v : zc.raw()) v = rng.normal();
            const double lt = target.log_density(zc, nullptr);
            if (lt > best) {
                best = lt;
                z0 = std::move(zc);
            }
        }
    }
    ChainState state = make_chain_state(target, std::move(z0));

    // Dual averaging state (Nesterov-style, as commonly used for step-size
    // adaptation): only consulted while adapt_tau is on and we are in burn-in.
    const double mu = std::log(config.tau);
    double log_tau = mu, log_tau_bar = mu, h_bar = 0.0;
    const double da_gamma = 0.05, da_t0 = 10.0, da_kappa = 0.75;

    double tau = config.tau;
    std::size_t accepted = 0;
    KahanSum accepted_move;
    const std::size_t expected_kept = (config.chain_length - burn) / config.thinning;
    kept_x = Matrix();
    kept_z = Matrix(expected_kept, dim);
    std::size_t kept = 0;
    diag.log_target_trace.reserve(config.chain_length);

    for (std::size_t step = 1; step <= config.chain_length; ++step) {
        Proposal prop = langevin_propose(state, tau, rng);
        Acceptance acc = mh_accept(state, prop.z, target, tau, rng);
        if (acc.accepted) {
            ++accepted;
            double move = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double d = acc.next.z(0, i) - state.z(0, i);
                move += d * d;
            }
            accepted_move.add(std::sqrt(move));
        }
        state = std::move(acc.next);
        if (!std::isfinite(state.log_target) || !state.z.all_finite())
            throw SamplerError("run_chain: chain state became non-finite at step " +
                               std::to_string(step));
        diag.log_target_trace.push_back(state.log_target);

        if (step <= burn && config.adapt_tau) {
            const double t = static_cast<double>(step);
            h_bar = (1.0 - 1.0 / (t + da_t0)) * h_bar +
                    (config.target_acceptance - acc.alpha) / (t + da_t0);
            log_tau = mu - std::sqrt(t) / da_gamma * h_bar;
            const double eta = std::pow(t, -da_kappa);
            log_tau_bar = eta * log_tau + (1.0 - eta) * log_tau_bar;
            tau = std::exp(log_tau);
            if (step == burn) tau = std::exp(log_tau_bar);
        }

        if (step > burn && (step - burn) % config.thinning == 0 && kept < expected_kept) {
            if (kept_x.empty()) kept_x = Matrix(expected_kept, state.x.cols());
            kept_x.set_row(kept, state.x);
            kept_z.set_row(kept, state.z);
            ++kept;
        }
    }

    diag.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(config.chain_length);
    diag.mean_accepted_move =
        accepted ? accepted_move.value() / static_cast<double>(accepted) : 0.0;
    diag.tau_final = tau;
    diag.n_kept = kept;
    diag.low_acceptance = diag.acceptance_rate < 0.01;
}

// Runs n_chains independent chains (in parallel when configured; per-chain rng
// streams keep the result identical to sequential execution) and stacks the
// kept states.
inline SamplerOutput run_chains(const LatentTarget& target, const SamplerConfig& config,
                                const Rng& base_rng) {
    config.validate();
    SamplerOutput out;
    out.diagnostics.resize(config.n_chains);
    std::vector<Matrix> xs(config.n_chains), zs(config.n_chains);

    parallel_for(config.n_chains, config.threads, [&](std::size_t c) {
        run_single_chain(target, config, base_rng.spawn(1000 + c), xs[c], zs[c],
                         out.diagnostics[c]);
    });

    for (std::size_t c = 0; c < config.n_chains; ++c) {
        if (out.samples.empty()) {
            out.samples = std::move(xs[c]);
            out.latents = std::move(zs[c]);
        } else {
            out.samples = concat_rows(out.samples, xs[c]);
            out.latents = concat_rows(out.latents, zs[c]);
        }
    }
    return out;
}

// Corrects the generator's distribution: a latent chain per the config, with
// the calibrated ensemble's density ratio tilting the prior.
inline SamplerOutput run_chain(const TrainedGan& gan, const EnsembleDiscriminator& ensemble,
                               const SamplerConfig& config) {
    GanLatentTarget target(gan.generator, ensemble, gan.prior());
    return run_chains(target, config, Rng(config.seed));
}

}  // namespace fewgan
