#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "fewgan/baselines.hpp"
#include "fewgan/dataset.hpp"
#include "fewgan/episode.hpp"
#include "fewgan/finetune.hpp"
#include "fewgan/metrics.hpp"
#include "support/geometry.hpp"

using namespace fewgan;

namespace {

// Brute-force confusion-matrix oracle, written independently of
// compute_metrics: explicit O(n * classes) counting per class.
struct OracleReport {
    double acc, pre, f1;
};

OracleReport metrics_oracle(const std::vector<int>& pred, const std::vector<int>& truth) {
    std::set<int> classes(truth.begin(), truth.end());
    classes.insert(pred.begin(), pred.end());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (pred[i] == truth[i]) ++correct;
    double pre_sum = 0.0, f1_sum = 0.0;
    for (int c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (pred[i] == c && truth[i] == c) ++tp;
            if (pred[i] == c && truth[i] != c) ++fp;
            if (pred[i] != c && truth[i] == c) ++fn;
        }
        const double p = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double r = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
        pre_sum += p;
        f1_sum += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    return {static_cast<double>(correct) / truth.size(), pre_sum / classes.size(),
            f1_sum / classes.size()};
}

}  // namespace

TEST_CASE("sample_episode: shape, disjointness, determinism, errors") {
    Rng data_rng(1);
    Dataset ring = make_ring_mixture(4, 2.0, 0.2, 80, data_rng);

    Rng a(42), b(42);
    Episode e1 = sample_episode(ring.x, ring.labels, 2, 30, 10, a);
    Episode e2 = sample_episode(ring.x, ring.labels, 2, 30, 10, b);

    CHECK(e1.support_x.rows() == 60);
    CHECK(e1.query_x.rows() == 20);
    std::map<int, int> per_class;
    for (int y : e1.support_y) per_class[y]++;
    CHECK(per_class[0] == 30);
    CHECK(per_class[1] == 30);

    std::set<std::size_t> support_rows(e1.support_rows.begin(), e1.support_rows.end());
    for (std::size_t q : e1.query_rows) CHECK(support_rows.count(q) == 0);

    CHECK(e1.support_rows == e2.support_rows);
    CHECK(e1.query_rows == e2.query_rows);
    CHECK(e1.class_ids == e2.class_ids);

    // K larger than the smallest class
    Rng c(1);
    CHECK_THROWS_AS(sample_episode(ring.x, ring.labels, 2, 75, 10, c), EpisodeError);
    // more ways than classes
    CHECK_THROWS_AS(sample_episode(ring.x, ring.labels, 5, 5, 5, c), EpisodeError);
}

TEST_CASE("episode disjointness holds across many draws") {
    Rng data_rng(5);
    Dataset moons = make_two_moons(0.1, 120, data_rng);
    Rng ep_rng(9);
    for (int rep = 0; rep < 50; ++rep) {
        Episode ep = sample_episode(moons.x, moons.labels, 2, 10, 15, ep_rng);
        std::set<std::size_t> support(ep.support_rows.begin(), ep.support_rows.end());
        CHECK(support.size() == ep.support_rows.size());
        for (std::size_t q : ep.query_rows) CHECK(support.count(q) == 0);
    }
}

TEST_CASE("compute_metrics: spec examples") {
    MetricsReport perfect = compute_metrics({1, 0, 1}, {1, 0, 1});
    CHECK(perfect.acc == 1.0);
    CHECK(perfect.pre == 1.0);
    CHECK(perfect.f1 == 1.0);

    MetricsReport r = compute_metrics({0, 1, 1, 1}, {0, 0, 1, 1});
    CHECK(r.acc == doctest::Approx(0.75));
    CHECK(r.pre == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(r.f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0));

    MetricsReport constant = compute_metrics({0, 0, 0, 0}, {0, 0, 1, 1});
    CHECK(constant.acc == doctest::Approx(0.5));

    CHECK_THROWS_AS(compute_metrics({0, 1}, {0}), ContractError);
    CHECK_THROWS_AS(compute_metrics({}, {}), ContractError);
}

TEST_CASE("compute_metrics matches the brute-force oracle on 1000 random vectors") {
    Rng rng(77);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 1 + rng.integer(40);
        const int classes = 2 + static_cast<int>(rng.integer(4));
        std::vector<int> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.integer(classes));
            pred[i] = static_cast<int>(rng.integer(classes));
        }
        MetricsReport r = compute_metrics(pred, truth);
        OracleReport o = metrics_oracle(pred, truth);
        CHECK(r.acc == doctest::Approx(o.acc).epsilon(1e-12));
        CHECK(r.pre == doctest::Approx(o.pre).epsilon(1e-12));
        CHECK(r.f1 == doctest::Approx(o.f1).epsilon(1e-12));
    }
}

TEST_CASE("mmd_rbf: identical samples, symmetry, separation, null behavior") {
    Rng rng(11);
    Matrix x = rng.normal_matrix(100, 2);
    CHECK(mmd_rbf(x, x) <= 1e-12);

    Matrix y = rng.normal_matrix(80, 2);
    CHECK(std::abs(mmd_rbf(x, y) - mmd_rbf(y, x)) <= 1e-12);

    // N(0,1) vs N(5,1): strongly separated
    for (int rep = 0; rep < 10; ++rep) {
        Rng r(100 + rep);
        Matrix a = r.normal_matrix(500, 1);
        Matrix b = r.normal_matrix(500, 1);
        for (double& v : b.raw()) v += 5.0;
        CHECK(mmd_rbf(a, b) > 0.5);
    }

    // two draws from the same distribution: near zero
    for (int rep = 0; rep < 10; ++rep) {
        Rng r(200 + rep);
        Matrix a = r.normal_matrix(500, 1);
        Matrix b = r.normal_matrix(500, 1);
        CHECK(std::abs(mmd_rbf(a, b)) <= 0.02);
    }

    CHECK_THROWS_AS(mmd_rbf(x, rng.normal_matrix(10, 3)), ContractError);
    CHECK_THROWS_AS(mmd_rbf(x, y, -1.0), ContractError);
}

TEST_CASE("score_analog: uninformative, collapsed, and spread classifiers") {
    // classifier outputting uniform p(y|x): zero-weight single head
    MultiHeadClassifier uniform;
    uniform.n_classes = 4;
    uniform.body.layers.push_back({Matrix{{1.0, 1.0}, {1.0, 1.0}}, Matrix(1, 2),
                                   Activation::identity});
    uniform.heads.push_back({Matrix(2, 4), Matrix(1, 4)});
    Rng rng(3);
    Matrix samples = rng.normal_matrix(64, 2);
    CHECK(score_analog(samples, uniform) == doctest::Approx(1.0).epsilon(1e-9));

    // all samples confidently one class: score 1 (p(y|x) = p(y))
    MultiHeadClassifier collapsed = uniform;
    collapsed.heads[0].bias = Matrix{{50.0, 0.0, 0.0, 0.0}};
    CHECK(score_analog(samples, collapsed) == doctest::Approx(1.0).epsilon(1e-6));

    // confident and evenly spread over C classes: score C
    // one feature in {0,1,2,3}; logit_c(x) = 40(c+1)x + b_c with decision
    // boundaries at x = 0.5, 1.5, 2.5 and winning margins of 20 nats
    MultiHeadClassifier spread;
    spread.n_classes = 4;
    spread.body.layers.push_back({Matrix{{1.0}}, Matrix(1, 1), Activation::identity});
    spread.heads.push_back({Matrix{{40.0, 80.0, 120.0, 160.0}},
                            Matrix{{0.0, -20.0, -80.0, -180.0}}});
    Matrix xs(16, 1);
    for (int i = 0; i < 16; ++i) xs(i, 0) = static_cast<double>(i % 4);
    CHECK(score_analog(xs, spread) == doctest::Approx(4.0).epsilon(1e-6));

    CHECK_THROWS_AS(score_analog(Matrix(), uniform), ContractError);
}

TEST_CASE("baseline_ros: exact class targets, duplication semantics") {
    Matrix x{{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
    std::vector<int> y = {0, 0, 1};

    Rng rng(5);
    AugmentedSet same = baseline_ros(x, y, 2, rng);
    CHECK(same.x.rows() == 4);  // class 1 gains one duplicate of its single row

    AugmentedSet grown = baseline_ros(x, y, 5, rng);
    std::map<int, int> counts;
    for (int label : grown.y) counts[label]++;
    CHECK(counts[0] == 5);
    CHECK(counts[1] == 5);
    // every class-1 synthetic row equals the one original row
    for (std::size_t i = 0; i < grown.x.rows(); ++i)
        if (grown.y[i] == 1) {
            CHECK(grown.x(i, 0) == 2.0);
            CHECK(grown.x(i, 1) == 2.0);
        }

    CHECK_THROWS_AS(baseline_ros(x, y, 1, rng), ContractError);
}

TEST_CASE("baseline_smote: segment property with k=1 and two points") {
    Matrix x{{0.0, 0.0}, {2.0, 2.0}, {5.0, 5.0}, {9.0, 9.0}};
    std::vector<int> y = {0, 0, 1, 1};
    Rng rng(7);
    AugmentedSet out = baseline_smote(x, y, 10, 1, rng);
    for (std::size_t i = 4; i < out.x.rows(); ++i) {
        const double a = out.x(i, 0), b = out.x(i, 1);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));  // on the diagonal segment
        if (out.y[i] == 0) {
            CHECK(a >= 0.0);
            CHECK(a <= 2.0);
        } else {
            CHECK(a >= 5.0);
            CHECK(a <= 9.0);
        }
    }
    CHECK(out.ros_fallback_classes.empty());
}

TEST_CASE("baseline_smote: singleton class falls back to duplication with a warning") {
    Matrix x{{0.0, 0.0}, {1.0, 0.0}, {4.0, 4.0}};
    std::vector<int> y = {0, 0, 1};
    Rng rng(9);
    AugmentedSet out = baseline_smote(x, y, 4, 3, rng);
    REQUIRE(out.ros_fallback_classes.size() == 1);
    CHECK(out.ros_fallback_classes[0] == 1);
    for (std::size_t i = 0; i < out.x.rows(); ++i)
        if (out.y[i] == 1) {
            CHECK(out.x(i, 0) == 4.0);
            CHECK(out.x(i, 1) == 4.0);
        }
    CHECK_THROWS_AS(baseline_smote(x, y, 4, 0, rng), ContractError);
}

TEST_CASE("baseline_smote: synthetic rows stay inside the class convex hull") {
    using fewgan::testing::convex_hull;
    using fewgan::testing::inside_hull;
    using fewgan::testing::rows_as_points;

    Rng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 6 + rng.integer(10);
        Matrix x(2 * n, 2);
        std::vector<int> y;
        for (std::size_t i = 0; i < 2 * n; ++i) {
            x(i, 0) = rng.uniform(-3.0, 3.0) + (i < n ? -5.0 : 5.0);
            x(i, 1) = rng.uniform(-3.0, 3.0);
            y.push_back(i < n ? 0 : 1);
        }
        AugmentedSet out = baseline_smote(x, y, 2 * n, n - 1, rng);

        Matrix class0(n, 2), class1(n, 2);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) {
                class0(i, c) = x(i, c);
                class1(i, c) = x(n + i, c);
            }
        auto hull0 = convex_hull(rows_as_points(class0));
        auto hull1 = convex_hull(rows_as_points(class1));
        for (std::size_t i = 2 * n; i < out.x.rows(); ++i) {
            const fewgan::testing::Point2 p{out.x(i, 0), out.x(i, 1)};
            CHECK(inside_hull(out.y[i] == 0 ? hull0 : hull1, p, 1e-7));
        }
    }
}

TEST_CASE("augmented sets preserve balance for downstream training") {
    Rng data_rng(17);
    Dataset blobs = make_two_blobs(4.0, 0.6, 8, data_rng);
    Rng rng(19);
    AugmentedSet ros = baseline_ros(blobs.x, blobs.labels, 30, rng);
    AugmentedSet smote = baseline_smote(blobs.x, blobs.labels, 30, 3, rng);
    std::map<int, int> cr, cs;
    for (int label : ros.y) cr[label]++;
    for (int label : smote.y) cs[label]++;
    for (auto& [c, k] : cr) CHECK(k == 30);
    for (auto& [c, k] : cs) CHECK(k == 30);
}
