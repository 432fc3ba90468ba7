#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fewgan/dataset.hpp"
#include "fewgan/episode.hpp"
#include "fewgan/finetune.hpp"
#include "fewgan/grad_check.hpp"

using namespace fewgan;

namespace {

MultiHeadClassifier toy_classifier(std::size_t heads, std::uint64_t seed,
                                   std::size_t features = 4, std::size_t classes = 2) {
    MultiHeadClassifier m;
    m.n_classes = classes;
    Rng rng(seed);
    m.body = make_mlp(3, {6}, features, Activation::relu, Activation::relu, rng);
    for (std::size_t h = 0; h < heads; ++h) {
        Rng hr = rng.spawn(h + 1);
        m.heads.push_back(make_head(features, classes, hr));
    }
    return m;
}

// Cross-entropy of a single linear head, mirroring the tape's op order
// (max-subtracted softmax, guarded log, row-major accumulation).
double reference_head_ce(const MultiHeadClassifier& m, std::size_t h, const Matrix& x,
                         const Matrix& y) {
    Matrix f = forward(m.body, x);
    Matrix logits = matmul(f, m.heads[h].weight);
    for (std::size_t i = 0; i < logits.rows(); ++i)
        for (std::size_t c = 0; c < logits.cols(); ++c) logits(i, c) += m.heads[h].bias(0, c);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits(i, 0);
        for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(i, c));
        double s = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            logits(i, c) = std::exp(logits(i, c) - mx);
            s += logits(i, c);
        }
        for (std::size_t c = 0; c < logits.cols(); ++c) logits(i, c) /= s;
    }
    KahanSum ce;
    for (std::size_t i = 0; i < logits.rows(); ++i)
        for (std::size_t c = 0; c < logits.cols(); ++c)
            ce.add(y(i, c) * guarded_log(logits(i, c)));
    return ce.value() * (-1.0 / static_cast<double>(x.rows()));
}

double weight_sqnorm(const Matrix& w) {
    KahanSum s;
    for (double v : w.raw()) s.add(v * v);
    return s.value();
}

}  // namespace

TEST_CASE("mh_loss: H=1 reduces to cross-entropy plus the weight penalty, exactly") {
    Rng rng(3);
    MultiHeadClassifier m = toy_classifier(1, 5);
    Matrix x = rng.normal_matrix(8, 3);
    Matrix y = one_hot({0, 1, 0, 1, 1, 0, 0, 1}, 2);
    const double gamma = 0.05;
    const double expected = reference_head_ce(m, 0, x, y) + gamma * weight_sqnorm(m.heads[0].weight);
    CHECK(mh_loss(m, x, y, gamma) == expected);
}

TEST_CASE("mh_loss: identical heads reduce to the single-head loss, exactly") {
    Rng rng(7);
    MultiHeadClassifier one = toy_classifier(1, 9);
    MultiHeadClassifier five = one;
    for (int i = 0; i < 4; ++i) five.heads.push_back(one.heads[0]);
    Matrix x = rng.normal_matrix(6, 3);
    Matrix y = one_hot({1, 0, 1, 0, 0, 1}, 2);
    for (double gamma : {0.0, 0.01, 0.3})
        CHECK(mh_loss(five, x, y, gamma) == mh_loss(one, x, y, gamma));
}

TEST_CASE("mh_loss: near-separated logits give the tiny hand-computed cross-entropy") {
    // one feature = 1, head mapping it to logits (+10, -10) for true class 0:
    // CE = ln(1 + e^-20) ~ 2.061e-9
    MultiHeadClassifier m;
    m.n_classes = 2;
    m.body.layers.push_back({Matrix{{1.0}}, Matrix(1, 1), Activation::identity});
    m.heads.push_back({Matrix{{10.0, -10.0}}, Matrix(1, 2)});
    Matrix x{{1.0}};
    Matrix y = one_hot({0}, 2);
    CHECK(mh_loss(m, x, y, 0.0) == doctest::Approx(2.0611536181902037e-9).epsilon(1e-6));
}

TEST_CASE("mh_loss: errors and regularization ordering") {
    MultiHeadClassifier m = toy_classifier(2, 11);
    Rng rng(1);
    Matrix x = rng.normal_matrix(4, 3);
    CHECK_THROWS_AS(one_hot({0, 1, 2, 0}, 2), DataError);  // label out of range
    Matrix y = one_hot({0, 1, 1, 0}, 2);

    // gamma > 0 strictly exceeds gamma = 0 whenever some head weight is nonzero
    CHECK(mh_loss(m, x, y, 0.1) > mh_loss(m, x, y, 0.0));
    CHECK_THROWS_AS(mh_loss(m, Matrix(), y, 0.0), DataError);
}

TEST_CASE("mh_loss gradient matches finite differences for all head parameters") {
    Rng rng(13);
    MultiHeadClassifier m = toy_classifier(3, 17);
    const Matrix x = rng.normal_matrix(5, 3);
    const Matrix y = one_hot({0, 1, 1, 0, 1}, 2);
    const double gamma = 0.02;

    std::size_t total = 0;
    for (const auto& h : m.heads) total += h.weight.size() + h.bias.size();
    Matrix theta(1, total);
    std::size_t at = 0;
    for (const auto& h : m.heads) {
        for (double v : h.weight.raw()) theta(0, at++) = v;
        for (double v : h.bias.raw()) theta(0, at++) = v;
    }

    auto f = [&](const Matrix& th, Matrix* grad_out) {
        MultiHeadClassifier mm = m;
        std::size_t k = 0;
        for (auto& h : mm.heads) {
            for (double& v : h.weight.raw()) v = th(0, k++);
            for (double& v : h.bias.raw()) v = th(0, k++);
        }
        Tape tape;
        auto tc = fewgan::detail::build_mh_loss(tape, mm, x, y, gamma);
        if (grad_out) {
            tape.backward(tc.loss);
            *grad_out = Matrix(1, total);
            std::size_t g = 0;
            for (std::size_t h = 0; h < mm.heads.size(); ++h) {
                for (double gv : tape.grad(tc.head_weights[h]).raw()) (*grad_out)(0, g++) = gv;
                for (double gv : tape.grad(tc.head_biases[h]).raw()) (*grad_out)(0, g++) = gv;
            }
        }
        return tape.scalar(tc.loss);
    };
    CHECK(grad_check(f, theta, 1e-5) <= 1e-5);
}

TEST_CASE("pretrain: separable blobs reach 99% training accuracy within 200 epochs") {
    Rng rng(21);
    Dataset blobs = make_two_blobs(4.0, 0.5, 120, rng);
    standardize_columns(blobs.x);
    FinetuneConfig cfg;
    cfg.pretrain_epochs = 200;
    Rng train_rng(5);
    MultiHeadClassifier m = pretrain(blobs.x, blobs.labels, BodySpec{}, cfg, 2, train_rng);
    Prediction p = predict(m, blobs.x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < blobs.labels.size(); ++i)
        if (p.labels[i] == blobs.labels[i]) ++correct;
    CHECK(static_cast<double>(correct) / blobs.labels.size() >= 0.99);
}

TEST_CASE("pretrain: preconditions and determinism") {
    Rng rng(31);
    Dataset blobs = make_two_blobs(4.0, 0.5, 20, rng);
    FinetuneConfig cfg;
    cfg.pretrain_epochs = 0;
    Rng r1(1);
    CHECK_THROWS_AS(pretrain(blobs.x, blobs.labels, BodySpec{}, cfg, 2, r1), ContractError);

    cfg.pretrain_epochs = 30;
    std::vector<int> single_class(blobs.labels.size(), 0);
    CHECK_THROWS_AS(pretrain(blobs.x, single_class, BodySpec{}, cfg, 2, r1), DataError);

    Rng ra(9), rb(9);
    std::vector<double> la, lb;
    pretrain(blobs.x, blobs.labels, BodySpec{}, cfg, 2, ra, &la);
    pretrain(blobs.x, blobs.labels, BodySpec{}, cfg, 2, rb, &lb);
    CHECK(la == lb);
}

TEST_CASE("pretrain: loss is non-increasing over 10-epoch windows beyond noise") {
    Rng rng(41);
    Dataset blobs = make_two_blobs(3.0, 0.8, 100, rng);
    standardize_columns(blobs.x);
    FinetuneConfig cfg;
    cfg.pretrain_epochs = 150;
    std::vector<double> trace;
    Rng train_rng(3);
    pretrain(blobs.x, blobs.labels, BodySpec{}, cfg, 2, train_rng, &trace);
    REQUIRE(trace.size() == 150);
    for (std::size_t e = 10; e < trace.size(); ++e)
        CHECK(trace[e] <= trace[e - 10] + 0.05);
}

TEST_CASE("finetune: identity at ep_t=0 only via the explicit flag") {
    Rng rng(51);
    Dataset blobs = make_two_blobs(4.0, 0.5, 40, rng);
    FinetuneConfig pre_cfg;
    pre_cfg.pretrain_epochs = 40;
    Rng train_rng(2);
    MultiHeadClassifier base = pretrain(blobs.x, blobs.labels, BodySpec{}, pre_cfg, 2, train_rng);

    FinetuneConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(finetune(base, blobs.x, blobs.labels, cfg), ContractError);

    cfg.allow_zero_epochs = true;
    MultiHeadClassifier same = finetune(base, blobs.x, blobs.labels, cfg);
    REQUIRE(same.heads.size() == base.heads.size());
    for (std::size_t h = 0; h < base.heads.size(); ++h) {
        CHECK(same.heads[h].weight == base.heads[h].weight);
        CHECK(same.heads[h].bias == base.heads[h].bias);
    }

    // class outside the model's range is a contract violation
    cfg.epochs = 1;
    CHECK_THROWS_AS(finetune(base, blobs.x, std::vector<int>(blobs.labels.size(), 7), cfg),
                    ContractError);
}

TEST_CASE("finetune: frozen body stays frozen; distinct head seeds give distinct heads") {
    Rng rng(61);
    Dataset blobs = make_two_blobs(4.0, 0.6, 60, rng);
    FinetuneConfig pre_cfg;
    pre_cfg.pretrain_epochs = 50;
    Rng train_rng(4);
    MultiHeadClassifier base = pretrain(blobs.x, blobs.labels, BodySpec{}, pre_cfg, 2, train_rng);

    FinetuneConfig cfg;
    cfg.heads = 4;
    cfg.epochs = 20;
    MultiHeadClassifier tuned = finetune(base, blobs.x, blobs.labels, cfg);
    for (std::size_t li = 0; li < base.body.layers.size(); ++li)
        CHECK(tuned.body.layers[li].weight == base.body.layers[li].weight);
    CHECK(tuned.heads.size() == 4);
    CHECK_FALSE(tuned.heads[0].weight == tuned.heads[1].weight);

    cfg.freeze_body = false;
    MultiHeadClassifier unfrozen = finetune(base, blobs.x, blobs.labels, cfg);
    CHECK_FALSE(unfrozen.body.layers[0].weight == base.body.layers[0].weight);
}

TEST_CASE("finetune: one example per class with gamma stays finite over 1000 epochs") {
    MultiHeadClassifier base = toy_classifier(5, 71, 4, 2);
    Matrix support{{0.5, -1.0, 0.25}, {-0.5, 1.0, -0.25}};
    FinetuneConfig cfg;
    cfg.heads = 5;
    cfg.epochs = 1000;
    cfg.gamma = 0.1;
    cfg.learning_rate = 0.05;
    std::vector<double> trace;
    MultiHeadClassifier tuned = finetune(base, support, {0, 1}, cfg, &trace);
    for (double v : trace) CHECK(std::isfinite(v));
    for (const auto& h : tuned.heads) {
        CHECK(h.weight.all_finite());
        CHECK(h.bias.all_finite());
    }
}

TEST_CASE("predict: head averaging, tie-break, row normalization") {
    // identical heads match the single-head prediction
    MultiHeadClassifier one = toy_classifier(1, 81);
    MultiHeadClassifier five = one;
    for (int i = 0; i < 4; ++i) five.heads.push_back(one.heads[0]);
    Rng rng(2);
    Matrix x = rng.normal_matrix(6, 3);
    Prediction p1 = predict(one, x);
    Prediction p5 = predict(five, x);
    CHECK(p1.labels == p5.labels);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(p5.probabilities(i, c) == doctest::Approx(p1.probabilities(i, c)).epsilon(1e-14));

    // two opposed (near) one-hot heads average to (1/2, 1/2); tie goes to class 0
    MultiHeadClassifier opposed;
    opposed.n_classes = 2;
    opposed.body.layers.push_back({Matrix{{1.0}}, Matrix(1, 1), Activation::identity});
    opposed.heads.push_back({Matrix{{40.0, -40.0}}, Matrix(1, 2)});
    opposed.heads.push_back({Matrix{{-40.0, 40.0}}, Matrix(1, 2)});
    Prediction tie = predict(opposed, Matrix{{1.0}});
    CHECK(tie.probabilities(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(tie.labels[0] == 0);

    // probabilities rows sum to 1
    Prediction p = predict(five, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < 2; ++c) s += p.probabilities(i, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("predict: probabilities invariant under head permutation") {
    MultiHeadClassifier m = toy_classifier(4, 91);
    Rng rng(3);
    Matrix x = rng.normal_matrix(5, 3);
    Prediction base = predict(m, x);
    MultiHeadClassifier perm = m;
    std::rotate(perm.heads.begin(), perm.heads.begin() + 2, perm.heads.end());
    Prediction rotated = predict(perm, x);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(rotated.probabilities(i, c) ==
                  doctest::Approx(base.probabilities(i, c)).epsilon(1e-13));
}

TEST_CASE("monotone regularization path: larger gamma, no larger fitted weights") {
    Rng rng(101);
    Dataset blobs = make_two_blobs(4.0, 0.4, 50, rng);
    standardize_columns(blobs.x);
    FinetuneConfig pre_cfg;
    pre_cfg.pretrain_epochs = 60;
    Rng train_rng(6);
    MultiHeadClassifier base = pretrain(blobs.x, blobs.labels, BodySpec{}, pre_cfg, 2, train_rng);

    double prev_norm = 1e300;
    for (double gamma : {0.0, 0.01, 0.1}) {
        FinetuneConfig cfg;
        cfg.heads = 1;
        cfg.epochs = 800;
        cfg.gamma = gamma;
        cfg.learning_rate = 0.2;
        MultiHeadClassifier tuned = finetune(base, blobs.x, blobs.labels, cfg);
        const double norm = std::sqrt(weight_sqnorm(tuned.heads[0].weight));
        CHECK(norm <= prev_norm + 1e-9);
        prev_norm = norm;
    }
}

TEST_CASE("multi-head loss stabilizes aggressive fine-tuning (H=5 vs H=1)") {
    // Fixed toy episode at a deliberately aggressive learning rate: the
    // single head oscillates around the loss threshold while the five-head
    // average descends smoothly.
    Rng data_rng(2);
    Dataset blobs = make_two_blobs(3.0, 1.4, 300, data_rng);
    standardize_columns(blobs.x);
    Rng ep_rng(7);
    Episode ep = sample_episode(blobs.x, blobs.labels, 2, 10, 30, ep_rng);

    FinetuneConfig pre_cfg;
    pre_cfg.heads = 1;
    pre_cfg.pretrain_epochs = 120;
    Rng pre_rng(11);
    MultiHeadClassifier base = pretrain(blobs.x, blobs.labels, BodySpec{}, pre_cfg, 2, pre_rng);

    auto epochs_to_threshold = [&](std::size_t heads, std::uint64_t seed) {
        FinetuneConfig cfg;
        cfg.heads = heads;
        cfg.epochs = 400;
        cfg.gamma = 0.0;
        cfg.learning_rate = 2.0;
        cfg.head_init_seed = seed;
        std::vector<double> trace;
        finetune(base, ep.support_x, ep.support_y, cfg, &trace);
        for (std::size_t e = 0; e < trace.size(); ++e)
            if (trace[e] <= 0.3) return static_cast<double>(e);
        return static_cast<double>(trace.size());
    };

    std::vector<double> h1, h5;
    for (std::uint64_t s = 0; s < 20; ++s) {
        h1.push_back(epochs_to_threshold(1, 100 + s));
        h5.push_back(epochs_to_threshold(5, 100 + s));
    }
    std::sort(h1.begin(), h1.end());
    std::sort(h5.begin(), h5.end());
    const double med1 = 0.5 * (h1[9] + h1[10]);
    const double med5 = 0.5 * (h5[9] + h5[10]);
    CHECK(med5 <= med1);
}
