#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fewgan/baselines.hpp"
#include "fewgan/config.hpp"
#include "fewgan/dataset.hpp"
#include "fewgan/ensemble.hpp"
#include "fewgan/episode.hpp"
#include "fewgan/finetune.hpp"
#include "fewgan/gan.hpp"
#include "fewgan/metrics.hpp"
#include "fewgan/parallel.hpp"
#include "fewgan/sampler.hpp"

namespace fewgan {

// The four-way grid: plain GAN, sampler-corrected GAN, ensemble-trained GAN,
// and both corrections combined.
enum class Variant { gan, repgan, en_gan, en_repgan };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::gan: return "gan";
        case Variant::repgan: return "repgan";
        case Variant::en_gan: return "en_gan";
        case Variant::en_repgan: return "en_repgan";
    }
    return "gan";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "gan") return Variant::gan;
    if (s == "repgan") return Variant::repgan;
    if (s == "en_gan") return Variant::en_gan;
    if (s == "en_repgan") return Variant::en_repgan;
    throw ConfigError("unknown variant: " + s + " (expected gan|repgan|en_gan|en_repgan)");
}

inline bool variant_uses_ensemble(Variant v) {
    return v == Variant::en_gan || v == Variant::en_repgan;
}
inline bool variant_uses_sampler(Variant v) {
    return v == Variant::repgan || v == Variant::en_repgan;
}

inline std::vector<Variant> all_variants() {
    return {Variant::gan, Variant::repgan, Variant::en_gan, Variant::en_repgan};
}

// Leading fraction goes to training, the rest to the fitting holdout. Rows
// are shuffled first so the split is seed-stable, not file-order-stable.
struct HoldoutSplit {
    Matrix train;
    Matrix holdout;
};

inline HoldoutSplit split_holdout(const Matrix& rows, double holdout_fraction, Rng& rng) {
    const std::size_t n = rows.rows();
    std::size_t n_holdout = static_cast<std::size_t>(holdout_fraction * static_cast<double>(n));
    if (n_holdout < 1) n_holdout = 1;
    if (n_holdout >= n) n_holdout = n - 1;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx.begin(), idx.end());

    HoldoutSplit out;
    out.train = Matrix(n - n_holdout, rows.cols());
    out.holdout = Matrix(n_holdout, rows.cols());
    for (std::size_t i = 0; i < n; ++i) {
        Matrix& dst = i < n - n_holdout ? out.train : out.holdout;
        const std::size_t r = i < n - n_holdout ? i : i - (n - n_holdout);
        for (std::size_t c = 0; c < rows.cols(); ++c) dst(r, c) = rows(idx[i], c);
    }
    return out;
}

// Fits the ensemble head (softmax weights where configured, then Platt
// calibration) on held-out real rows plus an equal-size fresh fake batch.
// A degenerate holdout falls back to the identity calibration.
inline EnsembleDiscriminator fit_ensemble(const TrainedGan& gan, CombineKind combine,
                                          const Matrix& holdout_real, Rng& rng) {
    EnsembleDiscriminator ens;
    ens.sub_discriminators = gan.sub_discriminators;
    ens.rule = CombineRule::uniform(combine, gan.sub_discriminators.size());

    const LatentPrior prior = gan.prior();
    Matrix holdout_fake = generate(gan.generator, prior, holdout_real.rows(), rng).second;

    if (combine == CombineKind::softmax_weighted)
        ens.rule.weights = fit_softmax_weights(gan.sub_discriminators, holdout_real, holdout_fake);
    try {
        ens.calibration = calibrate(ens, holdout_real, holdout_fake);
    } catch (const CalibrationDegenerateError&) {
        ens.calibration = Calibration{};
    }
    return ens;
}

// One class's synthetic dataset under a variant: train the GAN on the class
// rows, fit the ensemble, and either run the correcting chain or sample the
// raw generator.
struct ClassAugmentation {
    Matrix generated;
    TrainedGan gan;
    EnsembleDiscriminator ensemble;
    std::vector<ChainDiagnostics> chain_diagnostics;
    bool sampler_used = false;
};

inline ClassAugmentation augment_class(const Matrix& class_rows, Variant variant,
                                       const GanSection& gan_cfg, const SamplerSection& smp_cfg,
                                       std::size_t n_samples, const Rng& rng) {
    ClassAugmentation out;
    Rng split_rng = rng.spawn(11);
    HoldoutSplit split = split_holdout(class_rows, gan_cfg.holdout_fraction, split_rng);

    const std::size_t t_subs = variant_uses_ensemble(variant) ? gan_cfg.sub_discriminators : 1;
    const bool bootstrap = variant_uses_ensemble(variant) && gan_cfg.bootstrap;

    Rng train_rng = rng.spawn(12);
    out.gan = train_gan(split.train, gan_cfg.config, t_subs, bootstrap, train_rng);

    if (variant_uses_sampler(variant) && gan_cfg.refit_steps > 0) {
        GanConfig refit_cfg = gan_cfg.config;
        refit_cfg.steps = gan_cfg.refit_steps;
        refit_cfg.freeze_generator = true;
        Rng refit_rng = rng.spawn(16);
        TrainedGan refit = train_gan(split.train, refit_cfg, t_subs, bootstrap, refit_rng,
                                     &out.gan.generator);
        out.gan.sub_discriminators = refit.sub_discriminators;
    }

    Rng fit_rng = rng.spawn(13);
    out.ensemble = fit_ensemble(out.gan, gan_cfg.combine, split.holdout, fit_rng);

    if (variant_uses_sampler(variant)) {
        out.sampler_used = true;
        SamplerConfig cfg = smp_cfg.config;
        cfg.seed = rng.spawn(14).seed();
        const std::size_t per_chain = (n_samples + cfg.n_chains - 1) / cfg.n_chains;
        cfg.burn_in = cfg.effective_burn_in();  // pin before resizing the chain
        cfg.chain_length = cfg.burn_in + per_chain * cfg.thinning;
        SamplerOutput so = run_chain(out.gan, out.ensemble, cfg);
        out.chain_diagnostics = so.diagnostics;
        out.generated = so.samples;
        if (out.generated.rows() > n_samples) {
            Matrix trimmed(n_samples, out.generated.cols());
            for (std::size_t i = 0; i < n_samples; ++i)
                for (std::size_t c = 0; c < out.generated.cols(); ++c)
                    trimmed(i, c) = out.generated(i, c);
            out.generated = std::move(trimmed);
        }
    } else {
        Rng gen_rng = rng.spawn(15);
        out.generated = generate(out.gan.generator, out.gan.prior(), n_samples, gen_rng).second;
    }
    return out;
}

struct EpisodeResult {
    MetricsReport metrics;
    double mmd = 0.0;
    double score = 0.0;
    double sampler_acceptance = -1.0;  // -1 when the sampler was skipped
};

// The full per-episode flow of the method: per-class GAN + ensemble fit +
// correction, pre-train on the merged generated data, fine-tune on support,
// evaluate on query. The reference classifier is an evaluation instrument
// trained once per dataset outside the few-shot restriction.
inline EpisodeResult run_episode_variant(const Episode& ep, Variant variant, const RunConfig& cfg,
                                         const Matrix& realism_reference,
                                         const MultiHeadClassifier* reference_classifier,
                                         const Rng& rng) {
    EpisodeResult out;

    // The augmented "relevant dataset": support rows plus per-class generated
    // data, labels carried from the source class.
    Matrix merged = ep.support_x;
    std::vector<int> merged_labels = ep.support_y;
    Matrix generated_only;
    double acceptance_sum = 0.0;
    std::size_t acceptance_n = 0;
    for (std::size_t k = 0; k < ep.way; ++k) {
        Matrix class_rows = ep.support_rows_of_class(static_cast<int>(k));
        ClassAugmentation aug =
            augment_class(class_rows, variant, cfg.gan, cfg.sampler,
                          cfg.sampler.n_per_class, rng.spawn(100 + k));
        for (std::size_t i = 0; i < aug.generated.rows(); ++i)
            merged_labels.push_back(static_cast<int>(k));
        merged = concat_rows(merged, aug.generated);
        generated_only =
            generated_only.empty() ? aug.generated : concat_rows(generated_only, aug.generated);
        for (const auto& d : aug.chain_diagnostics) {
            acceptance_sum += d.acceptance_rate;
            ++acceptance_n;
        }
    }
    if (acceptance_n) out.sampler_acceptance = acceptance_sum / static_cast<double>(acceptance_n);

    BodySpec body;
    Rng pretrain_rng = rng.spawn(200);
    MultiHeadClassifier pre =
        pretrain(merged, merged_labels, body, cfg.finetune, ep.way, pretrain_rng);
    MultiHeadClassifier tuned = finetune(pre, ep.support_x, ep.support_y, cfg.finetune);

    Prediction qp = predict(tuned, ep.query_x);
    out.metrics = compute_metrics(qp.labels, ep.query_y);

    // Realism metrics are computed on the generated rows alone so they grade
    // the augmentation, not the support set it was seeded from.
    if (realism_reference.rows() >= 2 && generated_only.rows() >= 2)
        out.mmd = mmd_rbf(generated_only, realism_reference);
    if (reference_classifier) out.score = score_analog(generated_only, *reference_classifier);
    return out;
}

struct AblationRow {
    std::string dataset;
    std::string variant;
    std::size_t episode = 0;
    double acc = 0.0, pre = 0.0, f1 = 0.0;
    double mmd = 0.0, score = 0.0;
    std::uint64_t seed = 0;
};

struct SummaryStat {
    double mean = 0.0;
    double stddev = 0.0;
};

inline SummaryStat summarize(const std::vector<double>& v) {
    SummaryStat s;
    if (v.empty()) return s;
    KahanSum sum;
    for (double x : v) sum.add(x);
    s.mean = sum.value() / static_cast<double>(v.size());
    KahanSum sq;
    for (double x : v) sq.add((x - s.mean) * (x - s.mean));
    s.stddev = std::sqrt(sq.value() / static_cast<double>(v.size()));
    return s;
}

// Up to 2048 rows of the classes in play, the yardstick generated data is
// compared against.
inline Matrix realism_reference_rows(const Dataset& data, const std::vector<int>& class_ids) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        for (int c : class_ids)
            if (data.labels[i] == c) rows.push_back(i);
    const std::size_t cap = 2048;
    const std::size_t stride = rows.size() > cap ? rows.size() / cap + 1 : 1;
    Matrix out((rows.size() + stride - 1) / stride, data.x.cols());
    std::size_t r = 0;
    for (std::size_t i = 0; i < rows.size(); i += stride, ++r)
        for (std::size_t c = 0; c < data.x.cols(); ++c) out(r, c) = data.x(rows[i], c);
    return out;
}

// Trains the score_analog instrument on the full dataset.
inline MultiHeadClassifier train_reference_classifier(const Dataset& data, std::uint64_t seed) {
    FinetuneConfig cfg;
    cfg.heads = 1;
    cfg.pretrain_epochs = 300;
    cfg.gamma = 1e-4;
    BodySpec body;
    Rng rng(splitmix64(seed ^ 0x5ef1ec70ULL));
    return pretrain(data.x, data.labels, body, cfg, data.n_classes(), rng);
}

// ---------------------------------------------------------------------------
// Mode-dropping ring experiment: the distribution-realism ablation on the
// 8-mode Gaussian ring. Short adversarial training with extra discriminator
// steps leaves the generator visibly behind its discriminators (the few-shot
// failure mode the corrections target); each variant's samples are then scored
// by MMD against a fresh draw from the true mixture, all at one fixed
// bandwidth so the four numbers are comparable.

struct RingCorrectionOptions {
    std::size_t modes = 8;
    double radius = 2.0;
    double noise = 0.15;
    // 16 rows per mode keeps the setup genuinely few-shot: a single
    // discriminator overfits it, which is the failure bagging repairs.
    std::size_t n_train_per_mode = 16;
    std::size_t n_eval = 1024;
    std::size_t gan_steps = 400;
    std::size_t disc_steps = 1;
    std::size_t t_subs = 5;
    std::size_t n_corrected = 1600;
    double learning_rate = 2e-3;
    // Many short chains at a fixed small step size: the correction acts as a
    // local refinement of generator draws, which keeps coverage while the
    // density ratio trims off-distribution mass.
    double tau = 0.02;
    std::size_t n_chains = 800;
    std::size_t burn_in = 20;
    std::size_t thinning = 2;
    std::size_t refit_steps = 200;
    std::size_t threads = 1;
};

struct RingCorrectionResult {
    double mmd_gan = 0.0;
    double mmd_repgan = 0.0;
    double mmd_en_gan = 0.0;
    double mmd_en_repgan = 0.0;

    double of(Variant v) const {
        switch (v) {
            case Variant::gan: return mmd_gan;
            case Variant::repgan: return mmd_repgan;
            case Variant::en_gan: return mmd_en_gan;
            case Variant::en_repgan: return mmd_en_repgan;
        }
        return mmd_gan;
    }
};

inline RingCorrectionResult ring_correction_experiment(std::uint64_t seed,
                                                       const RingCorrectionOptions& opt = {}) {
    Rng data_rng = Rng(seed).spawn(1);
    Dataset train = make_ring_mixture(opt.modes, opt.radius, opt.noise, opt.n_train_per_mode,
                                      data_rng);
    Rng eval_rng = Rng(seed).spawn(2);
    Dataset eval = make_ring_mixture(opt.modes, opt.radius, opt.noise,
                                     opt.n_eval / opt.modes, eval_rng);
    const double bandwidth = median_heuristic_bandwidth(eval.x, eval.x);

    GanConfig gan_cfg;
    gan_cfg.steps = opt.gan_steps;
    gan_cfg.disc_steps = opt.disc_steps;
    gan_cfg.batch_size = 64;
    gan_cfg.latent_dim = 8;
    gan_cfg.gen_hidden = {32, 32};
    gan_cfg.disc_hidden = {16, 16};
    gan_cfg.optimizer.learning_rate = opt.learning_rate;

    GanSection gan_sec;
    gan_sec.config = gan_cfg;
    gan_sec.sub_discriminators = opt.t_subs;
    gan_sec.bootstrap = true;
    gan_sec.combine = CombineKind::softmax_weighted;
    gan_sec.refit_steps = opt.refit_steps;

    SamplerSection smp_sec;
    smp_sec.config.tau = opt.tau;
    smp_sec.config.thinning = opt.thinning;
    smp_sec.config.burn_in = opt.burn_in;
    smp_sec.config.n_chains = opt.n_chains;
    smp_sec.config.adapt_tau = false;
    smp_sec.config.init = ChainInit::prior_draw;
    smp_sec.config.threads = opt.threads;

    RingCorrectionResult out;
    const Rng base(seed);
    for (Variant v : all_variants()) {
        ClassAugmentation aug = augment_class(train.x, v, gan_sec, smp_sec, opt.n_corrected,
                                              base.spawn(7));
        const double mmd = mmd_rbf(aug.generated, eval.x, bandwidth);
        switch (v) {
            case Variant::gan: out.mmd_gan = mmd; break;
            case Variant::repgan: out.mmd_repgan = mmd; break;
            case Variant::en_gan: out.mmd_en_gan = mmd; break;
            case Variant::en_repgan: out.mmd_en_repgan = mmd; break;
        }
    }
    return out;
}

// Table-1-style grid: every requested variant on every episode, identical
// episode seeds across variants. Episodes are independent jobs and may run on
// several threads.
enum class BaselineKind { none, ros, smote };

inline std::string baseline_name(BaselineKind b) {
    switch (b) {
        case BaselineKind::none: return "none";
        case BaselineKind::ros: return "ros";
        case BaselineKind::smote: return "smote";
    }
    return "none";
}

inline BaselineKind baseline_from_name(const std::string& s) {
    if (s == "none") return BaselineKind::none;
    if (s == "ros") return BaselineKind::ros;
    if (s == "smote") return BaselineKind::smote;
    throw ConfigError("unknown baseline: " + s + " (expected none|ros|smote)");
}

// Episodic evaluation of the oversampling baselines (or of no augmentation at
// all) through the same pre-train + fine-tune stack the GAN variants use, so
// the comparison isolates the augmentation method.
inline std::vector<AblationRow> run_baseline_eval(const Dataset& data,
                                                  const std::string& dataset_id,
                                                  BaselineKind baseline, const RunConfig& cfg,
                                                  const MultiHeadClassifier* reference_classifier) {
    std::vector<AblationRow> rows(cfg.eval.episodes);
    const Rng base(cfg.seed);

    parallel_for(cfg.eval.episodes, cfg.threads, [&](std::size_t e) {
        const Rng ep_rng = base.spawn(e);
        Rng sample_rng = ep_rng.spawn(1);
        Episode ep = sample_episode(data.x, data.labels, cfg.eval.way, cfg.eval.shots,
                                    cfg.eval.query_per_class, sample_rng);
        ep.seed = ep_rng.seed();

        Matrix train_x = ep.support_x;
        std::vector<int> train_y = ep.support_y;
        if (baseline != BaselineKind::none) {
            Rng aug_rng = ep_rng.spawn(3);
            AugmentedSet aug =
                baseline == BaselineKind::ros
                    ? baseline_ros(ep.support_x, ep.support_y, cfg.sampler.n_per_class, aug_rng)
                    : baseline_smote(ep.support_x, ep.support_y, cfg.sampler.n_per_class, 5,
                                     aug_rng);
            train_x = std::move(aug.x);
            train_y = std::move(aug.y);
        }

        BodySpec body;
        Rng pre_rng = ep_rng.spawn(4);
        MultiHeadClassifier pre = pretrain(train_x, train_y, body, cfg.finetune, ep.way, pre_rng);
        MultiHeadClassifier tuned = finetune(pre, ep.support_x, ep.support_y, cfg.finetune);
        Prediction qp = predict(tuned, ep.query_x);
        MetricsReport m = compute_metrics(qp.labels, ep.query_y);

        Matrix reference = realism_reference_rows(data, ep.class_ids);
        AblationRow& row = rows[e];
        row.dataset = dataset_id;
        row.variant = baseline_name(baseline);
        row.episode = e;
        row.acc = m.acc;
        row.pre = m.pre;
        row.f1 = m.f1;
        if (reference.rows() >= 2 && train_x.rows() >= 2) row.mmd = mmd_rbf(train_x, reference);
        if (reference_classifier) row.score = score_analog(train_x, *reference_classifier);
        row.seed = ep.seed;
    });
    return rows;
}

inline std::vector<AblationRow> run_ablation(const Dataset& data, const std::string& dataset_id,
                                             const std::vector<Variant>& variants,
                                             const RunConfig& cfg,
                                             const MultiHeadClassifier* reference_classifier) {
    if (cfg.eval.episodes < 1) throw ConfigError("run_ablation: need at least one episode");
    std::vector<AblationRow> rows(cfg.eval.episodes * variants.size());
    const Rng base(cfg.seed);

    parallel_for(cfg.eval.episodes, cfg.threads, [&](std::size_t e) {
        const Rng ep_rng = base.spawn(e);
        Rng sample_rng = ep_rng.spawn(1);
        Episode ep = sample_episode(data.x, data.labels, cfg.eval.way, cfg.eval.shots,
                                    cfg.eval.query_per_class, sample_rng);
        ep.seed = ep_rng.seed();
        Matrix reference = realism_reference_rows(data, ep.class_ids);
        for (std::size_t v = 0; v < variants.size(); ++v) {
            EpisodeResult res = run_episode_variant(ep, variants[v], cfg, reference,
                                                    reference_classifier, ep_rng.spawn(2));
            AblationRow& row = rows[e * variants.size() + v];
            row.dataset = dataset_id;
            row.variant = variant_name(variants[v]);
            row.episode = e;
            row.acc = res.metrics.acc;
            row.pre = res.metrics.pre;
            row.f1 = res.metrics.f1;
            row.mmd = res.mmd;
            row.score = res.score;
            row.seed = ep.seed;
        }
    });
    return rows;
}

}  // namespace fewgan
