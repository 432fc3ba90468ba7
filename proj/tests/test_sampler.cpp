#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fewgan/ablation.hpp"
#include "fewgan/dataset.hpp"
#include "fewgan/ensemble.hpp"
#include "fewgan/gan.hpp"
#include "fewgan/grad_check.hpp"
#include "fewgan/metrics.hpp"
#include "fewgan/sampler.hpp"
#include "support/analytic_targets.hpp"

using namespace fewgan;
using fewgan::testing::FlatTarget;
using fewgan::testing::GaussianTarget;

namespace {

MlpModel identity_generator(std::size_t dim) {
    MlpModel m;
    Matrix w(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) w(i, i) = 1.0;
    m.layers.push_back({std::move(w), Matrix(1, dim), Activation::identity});
    return m;
}

MlpModel linear_sigmoid(double w, double b) {
    MlpModel m;
    m.layers.push_back({Matrix{{w}}, Matrix{{b}}, Activation::sigmoid});
    return m;
}

EnsembleDiscriminator constant_half_discriminator(std::size_t dim) {
    EnsembleDiscriminator ens;
    MlpModel d;
    d.layers.push_back({Matrix(dim, 1), Matrix(1, 1), Activation::sigmoid});
    ens.sub_discriminators = {std::move(d)};
    ens.rule = CombineRule::uniform(CombineKind::mean_probability, 1);
    return ens;
}

}  // namespace

TEST_CASE("log_target: indifferent discriminator reduces to the prior") {
    const LatentPrior prior{2};
    MlpModel g = identity_generator(2);
    EnsembleDiscriminator ens = constant_half_discriminator(2);

    Rng rng(1);
    for (int rep = 0; rep < 50; ++rep) {
        Matrix z = rng.normal_matrix(1, 2);
        CHECK(log_target(z, g, ens, prior) == doctest::Approx(prior.log_density(z)).epsilon(1e-12));
    }
    // z = 0 in dim 2: log p_0(0) = -log(2 pi)
    Matrix zero(1, 2);
    CHECK(log_target(zero, g, ens, prior) ==
          doctest::Approx(-std::log(2.0 * 3.14159265358979323846)).epsilon(1e-12));
}

TEST_CASE("log_target: tilted 1-d target equals log N(z;1,1) plus a constant") {
    // D_cal(x) = sigmoid(x - 1/2) encodes d(x) = N(x;1,1)/N(x;0,1), so the
    // chain's target is N(z;0,1) * d(z) = N(z;1,1) up to normalization.
    const LatentPrior prior{1};
    MlpModel g = identity_generator(1);
    EnsembleDiscriminator ens;
    ens.sub_discriminators = {linear_sigmoid(1.0, -0.5)};
    ens.rule = CombineRule::uniform(CombineKind::mean_probability, 1);

    GanLatentTarget target(g, ens, prior);
    auto tilted = [](double z) {
        return -0.5 * (z - 1.0) * (z - 1.0) - 0.5 * std::log(2.0 * 3.14159265358979323846);
    };
    const double c0 = target.log_density(Matrix{{0.0}}, nullptr) - tilted(0.0);
    for (double z = -2.5; z <= 3.5; z += 0.25) {
        const double c = target.log_density(Matrix{{z}}, nullptr) - tilted(z);
        CHECK(c == doctest::Approx(c0).epsilon(1e-9));
    }
}

TEST_CASE("log_target gradient agrees with finite differences") {
    Rng rng(5);
    GanConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 16;
    cfg.latent_dim = 3;
    cfg.gen_hidden = {8};
    cfg.disc_hidden = {8};
    Matrix data = rng.normal_matrix(48, 2);
    TrainedGan gan = train_gan(data, cfg, 3, true, rng);
    EnsembleDiscriminator ens;
    ens.sub_discriminators = gan.sub_discriminators;
    ens.rule = CombineRule::uniform(CombineKind::softmax_weighted, 3);
    ens.calibration = Calibration{1.4, 0.2};
    GanLatentTarget target(gan.generator, ens, gan.prior());

    auto map = [&](const Matrix& z, Matrix* grad_out) {
        return target.log_density(z, grad_out);
    };
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep)
        worst = std::max(worst, grad_check(map, rng.normal_matrix(1, 3), 1e-5));
    CHECK(worst <= 1e-5);
}

TEST_CASE("chain state caches match recomputation") {
    const LatentPrior prior{2};
    MlpModel g = identity_generator(2);
    EnsembleDiscriminator ens = constant_half_discriminator(2);
    GanLatentTarget target(g, ens, prior);

    Rng rng(9);
    ChainState s = make_chain_state(target, rng.normal_matrix(1, 2));
    Matrix grad;
    Matrix x;
    const double lt = target.log_density(s.z, &grad, &x);
    CHECK(std::abs(s.log_target - lt) <= 1e-9);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::abs(s.grad(0, i) - grad(0, i)) <= 1e-9);
        CHECK(std::abs(s.x(0, i) - x(0, i)) <= 1e-9);
    }
}

TEST_CASE("langevin proposal mean: stationary point, quadratic oracle, flat diffusion") {
    // stationary point with zero noise: mean is the point itself
    FlatTarget flat(2);
    ChainState at_rest = make_chain_state(flat, Matrix{{0.7, -0.2}});
    Matrix mean = detail::drift_mean(at_rest, 0.3, true);
    CHECK(mean(0, 0) == 0.7);
    CHECK(mean(0, 1) == -0.2);

    // quadratic log-target -z^2/2 at z = 2 with tau = 0.1: mean 1.9
    GaussianTarget std_normal(1, 0.0, 1.0);
    ChainState s = make_chain_state(std_normal, Matrix{{2.0}});
    Matrix m = detail::drift_mean(s, 0.1, true);
    CHECK(m(0, 0) == doctest::Approx(1.9).epsilon(1e-12));

    // flat target: z' = z + sqrt(tau) * eps exactly (same rng replayed)
    const double tau = 0.25;
    Rng rng_a(33), rng_b(33);
    Proposal p = langevin_propose(at_rest, tau, rng_a);
    for (std::size_t i = 0; i < 2; ++i) {
        const double eps = rng_b.normal();
        CHECK(p.z(0, i) == at_rest.z(0, i) + std::sqrt(tau) * eps);
    }
}

TEST_CASE("langevin drift matches autodiff over 10^4 proposals") {
    GaussianTarget target(2, 0.5, 1.3);
    ChainState s = make_chain_state(target, Matrix{{1.7, -0.9}});
    const double tau = 0.2;
    const int n = 10000;
    Rng rng(77);
    KahanSum sum0, sum1;
    for (int i = 0; i < n; ++i) {
        Proposal p = langevin_propose(s, tau, rng);
        sum0.add(p.z(0, 0) - s.z(0, 0));
        sum1.add(p.z(0, 1) - s.z(0, 1));
    }
    const double se = std::sqrt(tau / n);
    CHECK(std::abs(sum0.value() / n - 0.5 * tau * s.grad(0, 0)) <= 3.0 * se);
    CHECK(std::abs(sum1.value() / n - 0.5 * tau * s.grad(0, 1)) <= 3.0 * se);
}

TEST_CASE("mh_accept: null move, uphill symmetric move, hand-computed ratio") {
    GaussianTarget target(1, 0.0, 1.0);
    Rng rng(3);

    ChainState s = make_chain_state(target, Matrix{{0.8}});
    Acceptance null_move = mh_accept(s, s.z, target, 0.1, rng);
    CHECK(null_move.alpha == 1.0);

    // random-walk variant (gradient disabled): uphill is always accepted
    ChainState far = make_chain_state(target, Matrix{{2.0}});
    Acceptance uphill = mh_accept(far, Matrix{{0.5}}, target, 0.1, rng, /*use_drift=*/false);
    CHECK(uphill.alpha == 1.0);
    CHECK(uphill.accepted);

    // 0 -> 2 under a symmetric proposal on a standard normal: alpha = e^-2
    ChainState origin = make_chain_state(target, Matrix{{0.0}});
    Acceptance a = mh_accept(origin, Matrix{{2.0}}, target, 0.1, rng, /*use_drift=*/false);
    CHECK(a.alpha == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("alpha stays in [0,1] over fuzzed transitions") {
    GaussianTarget target(2, 0.0, 1.0);
    Rng rng(13);
    for (int i = 0; i < 20000; ++i) {
        ChainState s = make_chain_state(target, rng.uniform_matrix(1, 2, -4.0, 4.0));
        Matrix cand = rng.uniform_matrix(1, 2, -4.0, 4.0);
        const double tau = rng.uniform(0.01, 1.0);
        Acceptance a = mh_accept(s, cand, target, tau, rng, (i % 2) == 0);
        CHECK(a.alpha >= 0.0);
        CHECK(a.alpha <= 1.0);
    }
}

TEST_CASE("run_chains: kept-sample bookkeeping") {
    GaussianTarget target(1, 0.0, 1.0);
    SamplerConfig cfg;
    cfg.chain_length = 100;
    cfg.burn_in = 50;
    cfg.thinning = 5;
    cfg.n_chains = 1;
    cfg.tau = 0.5;
    SamplerOutput out = run_chains(target, cfg, Rng(1));
    CHECK(out.samples.rows() == 10);
    CHECK(out.latents.rows() == 10);
    CHECK(out.diagnostics.size() == 1);
    CHECK(out.diagnostics[0].n_kept == 10);
    CHECK(out.diagnostics[0].acceptance_rate >= 0.0);
    CHECK(out.diagnostics[0].acceptance_rate <= 1.0);
    CHECK(out.diagnostics[0].log_target_trace.size() == 100);
}

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    cfg.chain_length = 10;
    cfg.burn_in = 10;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.burn_in = 5;
    cfg.tau = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.tau = 0.1;
    cfg.thinning = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("indifferent discriminator: kept latents match the prior") {
    MlpModel g = identity_generator(2);
    EnsembleDiscriminator ens = constant_half_discriminator(2);
    TrainedGan gan;
    gan.generator = g;
    gan.config.latent_dim = 2;
    gan.data_dim = 2;

    SamplerConfig cfg;
    cfg.n_chains = 4;
    cfg.thinning = 3;
    cfg.burn_in = 500;
    cfg.chain_length = 500 + 1250 * 3;  // 1250 kept per chain -> 5000 total
    cfg.tau = 0.4;
    cfg.seed = 2024;
    SamplerOutput out = run_chain(gan, ens, cfg);
    REQUIRE(out.latents.rows() == 5000);

    double mean[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < out.latents.rows(); ++i)
        for (int c = 0; c < 2; ++c) mean[c] += out.latents(i, c);
    for (auto& m : mean) m /= static_cast<double>(out.latents.rows());
    CHECK(std::sqrt(mean[0] * mean[0] + mean[1] * mean[1]) <= 0.1);

    double cov[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    for (std::size_t i = 0; i < out.latents.rows(); ++i)
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                cov[a][b] += (out.latents(i, a) - mean[a]) * (out.latents(i, b) - mean[b]);
    double worst = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double c = cov[a][b] / static_cast<double>(out.latents.rows());
            worst = std::max(worst, std::abs(c - (a == b ? 1.0 : 0.0)));
        }
    CHECK(worst <= 0.15);
}

TEST_CASE("tilted 1-d chain: kept sample mean approaches 1") {
    MlpModel g = identity_generator(1);
    EnsembleDiscriminator ens;
    ens.sub_discriminators = {linear_sigmoid(1.0, -0.5)};
    ens.rule = CombineRule::uniform(CombineKind::mean_probability, 1);
    TrainedGan gan;
    gan.generator = g;
    gan.config.latent_dim = 1;
    gan.data_dim = 1;

    SamplerConfig cfg;
    cfg.n_chains = 4;
    cfg.thinning = 3;
    cfg.burn_in = 500;
    cfg.chain_length = 500 + 1250 * 3;
    cfg.tau = 0.5;
    cfg.seed = 99;
    SamplerOutput out = run_chain(gan, ens, cfg);
    REQUIRE(out.samples.rows() == 5000);
    KahanSum s;
    for (std::size_t i = 0; i < out.samples.rows(); ++i) s.add(out.samples(i, 0));
    CHECK(s.value() / 5000.0 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("detailed balance: binned flows on a 1-d random-walk chain") {
    GaussianTarget target(1, 0.0, 1.0);
    const double tau = 0.5;
    const int steps = 200000;
    const int n_bins = 20;  // 18 interior bins on [-2.7, 2.7) plus two overflow bins
    auto bin_of = [&](double z) {
        if (z < -2.7) return 0;
        if (z >= 2.7) return n_bins - 1;
        return 1 + static_cast<int>((z + 2.7) / 0.3);
    };

    Rng rng(555);
    ChainState state = make_chain_state(target, Matrix{{rng.normal()}});
    std::vector<std::vector<long>> flow(n_bins, std::vector<long>(n_bins, 0));
    for (int i = 0; i < steps; ++i) {
        const int from = bin_of(state.z(0, 0));
        Proposal p = langevin_propose(state, tau, rng, /*use_drift=*/false);
        Acceptance a = mh_accept(state, p.z, target, tau, rng, /*use_drift=*/false);
        state = a.next;
        flow[from][bin_of(state.z(0, 0))] += 1;
    }
    for (int i = 0; i < n_bins; ++i)
        for (int j = i + 1; j < n_bins; ++j) {
            const double diff = static_cast<double>(flow[i][j] - flow[j][i]);
            const double n = static_cast<double>(flow[i][j] + flow[j][i]);
            CHECK(std::abs(diff) <= 3.0 * std::sqrt(n) + 1e-9);
        }
}

TEST_CASE("chains parallelize without changing results") {
    GaussianTarget target(2, 0.0, 1.0);
    SamplerConfig cfg;
    cfg.chain_length = 400;
    cfg.burn_in = 100;
    cfg.n_chains = 4;
    cfg.tau = 0.3;
    cfg.threads = 1;
    SamplerOutput seq = run_chains(target, cfg, Rng(7));
    cfg.threads = 4;
    SamplerOutput par = run_chains(target, cfg, Rng(7));
    CHECK(seq.latents == par.latents);
    CHECK(seq.samples == par.samples);
}

TEST_CASE("non-finite latent input is rejected") {
    MlpModel g = identity_generator(1);
    EnsembleDiscriminator ens = constant_half_discriminator(1);
    GanLatentTarget target(g, ens, LatentPrior{1});
    CHECK_THROWS_AS(target.log_density(Matrix{{std::nan("")}}, nullptr), SamplerError);
}

TEST_CASE("correction property: chain improves a deliberately mode-dropping generator") {
    // Generator trained on 6 of the ring's 8 modes, discriminators then refit
    // on the full mixture against the frozen generator; the corrected sample
    // set must land closer to the full mixture than raw generator draws.
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng data_rng = Rng(seed).spawn(1);
        Dataset full = make_ring_mixture(8, 2.0, 0.15, 48, data_rng);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < full.labels.size(); ++i)
            if (full.labels[i] < 6) keep.push_back(i);
        Matrix subset(keep.size(), 2);
        for (std::size_t i = 0; i < keep.size(); ++i)
            for (int c = 0; c < 2; ++c) subset(i, c) = full.x(keep[i], c);

        GanConfig stage1;
        stage1.steps = 400;
        stage1.batch_size = 64;
        stage1.latent_dim = 8;
        stage1.gen_hidden = {32, 32};
        stage1.disc_hidden = {16, 16};
        stage1.optimizer.learning_rate = 2e-3;
        Rng r1 = Rng(seed).spawn(2);
        TrainedGan handicapped = train_gan(subset, stage1, 1, false, r1);

        GanConfig stage2 = stage1;
        stage2.steps = 300;
        stage2.freeze_generator = true;
        Rng r2 = Rng(seed).spawn(3);
        TrainedGan refit = train_gan(full.x, stage2, 5, true, r2, &handicapped.generator);

        Rng r3 = Rng(seed).spawn(4);
        HoldoutSplit split = split_holdout(full.x, 0.2, r3);
        Rng r4 = Rng(seed).spawn(5);
        EnsembleDiscriminator ens =
            fit_ensemble(refit, CombineKind::softmax_weighted, split.holdout, r4);

        SamplerConfig sc;
        sc.tau = 0.02;
        sc.burn_in = 60;
        sc.thinning = 2;
        sc.n_chains = 800;
        sc.chain_length = 60 + 2 * 2;  // 2 kept per chain -> 1600 total
        sc.adapt_tau = false;
        sc.init = ChainInit::prior_draw;
        sc.seed = Rng(seed).spawn(6).seed();
        sc.threads = 2;
        SamplerOutput so = run_chain(refit, ens, sc);

        Rng r5 = Rng(seed).spawn(7);
        Matrix raw = generate(handicapped.generator, handicapped.prior(), 1600, r5).second;

        Rng eval_rng = Rng(seed).spawn(8);
        Dataset eval = make_ring_mixture(8, 2.0, 0.15, 128, eval_rng);
        const double bw = median_heuristic_bandwidth(eval.x, eval.x);
        if (mmd_rbf(so.samples, eval.x, bw) < mmd_rbf(raw, eval.x, bw)) ++wins;
    }
    CHECK(wins >= 8);
}
