#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fewgan/matrix.hpp"
#include "fewgan/mlp.hpp"
#include "fewgan/rng.hpp"
#include "fewgan/tape.hpp"

namespace fewgan {

// Clamp applied to probabilities before logit / density-ratio transforms.
inline constexpr double kProbClamp = 1e-6;

inline double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

inline double logit(double p) {
    const double c = clamp_prob(p);
    return std::log(c) - std::log(1.0 - c);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

enum class CombineKind { softmax_weighted, mean_probability, mean_logit };

inline std::string combine_kind_name(CombineKind k) {
    switch (k) {
        case CombineKind::softmax_weighted: return "softmax-weighted";
        case CombineKind::mean_probability: return "mean-probability";
        case CombineKind::mean_logit: return "mean-logit";
    }
    return "softmax-weighted";
}

inline CombineKind combine_kind_from_name(const std::string& s) {
    if (s == "softmax-weighted") return CombineKind::softmax_weighted;
    if (s == "mean-probability") return CombineKind::mean_probability;
    if (s == "mean-logit") return CombineKind::mean_logit;
    throw ConfigError("unknown combine kind: " + s);
}

// Rule turning T sub-discriminator outputs into one output. Weights apply to
// the softmax-weighted kind only and must sum to 1.
struct CombineRule {
    CombineKind kind = CombineKind::softmax_weighted;
    std::vector<double> weights;  // convex weights, softmax-weighted only

    static CombineRule uniform(CombineKind kind, std::size_t t) {
        CombineRule r;
        r.kind = kind;
        if (kind == CombineKind::softmax_weighted)
            r.weights.assign(t, 1.0 / static_cast<double>(t));
        return r;
    }

    void validate(std::size_t t) const {
        if (kind != CombineKind::softmax_weighted) return;
        if (weights.size() != t)
            throw ContractError("combine rule has " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(t) + " sub-discriminators");
        double s = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw ContractError("combine weights must be non-negative");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-12) throw ContractError("combine weights must sum to 1");
    }
};

// Combine per-sample probabilities from T sub-discriminators (each an n x 1
// column). All kinds map T copies of the same input back to that input.
inline Matrix combine(const std::vector<Matrix>& sub_outputs, const CombineRule& rule) {
    if (sub_outputs.empty()) throw ContractError("combine: need at least one sub-output");
    rule.validate(sub_outputs.size());
    const std::size_t n = sub_outputs[0].rows();
    for (const auto& m : sub_outputs)
        if (m.rows() != n || m.cols() != 1) throw ShapeError("combine: outputs must be n x 1");

    const double t = static_cast<double>(sub_outputs.size());
    Matrix out(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        switch (rule.kind) {
            case CombineKind::softmax_weighted: {
                double s = 0.0;
                for (std::size_t k = 0; k < sub_outputs.size(); ++k)
                    s += rule.weights[k] * sub_outputs[k](i, 0);
                out(i, 0) = s;
                break;
            }
            case CombineKind::mean_probability: {
                double s = 0.0;
                for (const auto& m : sub_outputs) s += m(i, 0);
                out(i, 0) = s / t;
                break;
            }
            case CombineKind::mean_logit: {
                double s = 0.0;
                for (const auto& m : sub_outputs) s += logit(m(i, 0));
                out(i, 0) = sigmoid(s / t);
                break;
            }
        }
    }
    return out;
}

// Tape version used while training the generator against the ensemble and
// inside the sampler's log-target. Takes the final pre-sigmoid nodes of each
// sub-discriminator and returns the combined probability node.
inline Tape::NodeId combine_logits_on_tape(Tape& tape, const std::vector<Tape::NodeId>& logits,
                                           const CombineRule& rule) {
    if (logits.empty()) throw ContractError("combine: need at least one sub-output");
    rule.validate(logits.size());
    const double t = static_cast<double>(logits.size());
    if (rule.kind == CombineKind::mean_logit)
        return tape.sigmoid(tape.weighted_sum(logits, std::vector<double>(logits.size(), 1.0 / t)));
    std::vector<Tape::NodeId> probs;
    probs.reserve(logits.size());
    for (auto id : logits) probs.push_back(tape.sigmoid(id));
    std::vector<double> w = rule.kind == CombineKind::softmax_weighted
                                ? rule.weights
                                : std::vector<double>(logits.size(), 1.0 / t);
    return tape.weighted_sum(probs, w);
}

// Two-parameter logistic (Platt-style) recalibration of the combined
// discriminator: D_cal(x) = sigmoid(a * logit(D(x)) + b) with a > 0, so the
// ranking of discriminator outputs is preserved.
struct Calibration {
    double a = 1.0;
    double b = 0.0;

    double apply(double p) const { return sigmoid(a * logit(p) + b); }
    bool is_identity() const { return a == 1.0 && b == 0.0; }
};

// T calibrated sub-discriminators plus the combination rule; the object the
// sampler treats as the density-ratio model.
struct EnsembleDiscriminator {
    std::vector<MlpModel> sub_discriminators;
    CombineRule rule;
    Calibration calibration;

    std::size_t size() const { return sub_discriminators.size(); }

    // Probability (n x 1) each sub-discriminator assigns to "real". Critic
    // networks with identity heads are squashed through sigmoid so every
    // entry lands in (0,1).
    std::vector<Matrix> sub_probabilities(const Matrix& x) const {
        std::vector<Matrix> out;
        out.reserve(sub_discriminators.size());
        for (const auto& d : sub_discriminators) {
            Matrix p = forward(d, x);
            if (d.layers.back().act != Activation::sigmoid)
                for (double& v : p.raw()) v = sigmoid(v);
            out.push_back(std::move(p));
        }
        return out;
    }

    // Combined, uncalibrated D(x).
    Matrix combined(const Matrix& x) const { return fewgan::combine(sub_probabilities(x), rule); }

    // Calibrated D_cal(x) in (0,1).
    Matrix evaluate(const Matrix& x) const {
        Matrix p = combined(x);
        for (double& v : p.raw()) v = calibration.apply(v);
        return p;
    }
};

// d(x) = D_cal(x) / (1 - D_cal(x)) after clamping, the density-ratio form the
// sampler's acceptance rule consumes.
inline Matrix density_ratio(const EnsembleDiscriminator& ens, const Matrix& x) {
    Matrix p = ens.evaluate(x);
    for (double& v : p.raw()) {
        const double c = clamp_prob(v);
        v = c / (1.0 - c);
    }
    return p;
}

// Softmax over per-sub-discriminator holdout log-likelihoods: a sharper
// sub-discriminator on the holdout earns a larger convex weight.
inline std::vector<double> fit_softmax_weights(const std::vector<MlpModel>& subs,
                                               const Matrix& holdout_real,
                                               const Matrix& holdout_fake) {
    if (subs.empty()) throw ContractError("fit_softmax_weights: no sub-discriminators");
    if (holdout_real.rows() == 0 || holdout_fake.rows() == 0)
        throw DataError("fit_softmax_weights: empty holdout");

    std::vector<double> ll(subs.size());
    for (std::size_t t = 0; t < subs.size(); ++t) {
        const MlpModel& d = subs[t];
        auto prob = [&](const Matrix& m) {
            Matrix p = forward(d, m);
            if (d.layers.back().act != Activation::sigmoid)
                for (double& v : p.raw()) v = sigmoid(v);
            return p;
        };
        KahanSum s;
        Matrix pr = prob(holdout_real);
        for (double v : pr.raw()) s.add(std::log(clamp_prob(v)));
        Matrix pf = prob(holdout_fake);
        for (double v : pf.raw()) s.add(std::log(1.0 - clamp_prob(v)));
        ll[t] = s.value() / static_cast<double>(holdout_real.rows() + holdout_fake.rows());
    }

    double mx = ll[0];
    for (double v : ll) mx = v > mx ? v : mx;
    double z = 0.0;
    for (double& v : ll) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : ll) v /= z;
    return ll;
}

// Fits (a, b) by full-batch gradient ascent on the binary log-likelihood of
// real-vs-fake labels under sigmoid(a * logit(D(x)) + b). a is kept positive
// through an exp parameterization. Targets use Platt's smoothing,
// (N+1)/(N+2) and 1/(N+2), so a stays finite when the holdout happens to be
// separable, and a small ridge term shrinks (log a, b) toward the identity:
// the holdout is tiny and an aggressive slope turns the density ratio into an
// extrapolation amplifier. Throws CalibrationDegenerateError when the holdout
// gives no signal (all combined outputs identical); callers fall back to the
// identity calibration.
inline Calibration calibrate(const EnsembleDiscriminator& ens, const Matrix& holdout_real,
                             const Matrix& holdout_fake, std::size_t max_steps = 500,
                             double lr = 0.1, double ridge = 0.05) {
    if (holdout_real.rows() == 0 || holdout_fake.rows() == 0)
        throw DataError("calibrate: empty holdout");

    const double n_real = static_cast<double>(holdout_real.rows());
    const double n_fake = static_cast<double>(holdout_fake.rows());
    const double y_real = (n_real + 1.0) / (n_real + 2.0);
    const double y_fake = 1.0 / (n_fake + 2.0);

    std::vector<double> s;  // logits of combined outputs
    std::vector<double> y;  // smoothed targets
    Matrix pr = ens.combined(holdout_real);
    for (double v : pr.raw()) {
        s.push_back(logit(v));
        y.push_back(y_real);
    }
    Matrix pf = ens.combined(holdout_fake);
    for (double v : pf.raw()) {
        s.push_back(logit(v));
        y.push_back(y_fake);
    }

    double mn = s[0], mx = s[0];
    for (double v : s) {
        mn = v < mn ? v : mn;
        mx = v > mx ? v : mx;
    }
    if (mx - mn < 1e-12)
        throw CalibrationDegenerateError("calibration holdout produced identical outputs");

    const double n = static_cast<double>(s.size());
    double alpha = 0.0;  // a = exp(alpha); init a=1, b=0
    double b = 0.0;
    for (std::size_t step = 0; step < max_steps; ++step) {
        const double a = std::exp(alpha);
        double ga = 0.0, gb = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double r = y[i] - sigmoid(a * s[i] + b);
            ga += r * s[i];
            gb += r;
        }
        alpha += lr * ((ga / n) * a - 2.0 * ridge * alpha);
        b += lr * ((gb / n) - 2.0 * ridge * b);
    }
    return Calibration{std::exp(alpha), b};
}

// Mean binary log-likelihood of the calibrated ensemble on a labeled holdout;
// diagnostic used by tests and reports.
inline double calibrated_log_likelihood(const EnsembleDiscriminator& ens, const Matrix& real,
                                        const Matrix& fake) {
    KahanSum s;
    Matrix pr = ens.evaluate(real);
    for (double v : pr.raw()) s.add(std::log(clamp_prob(v)));
    Matrix pf = ens.evaluate(fake);
    for (double v : pf.raw()) s.add(std::log(1.0 - clamp_prob(v)));
    return s.value() / static_cast<double>(real.rows() + fake.rows());
}

}  // namespace fewgan
