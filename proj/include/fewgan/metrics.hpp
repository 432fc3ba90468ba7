#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "fewgan/finetune.hpp"
#include "fewgan/matrix.hpp"

namespace fewgan {

struct ClassCounts {
    int label = 0;
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
};

struct MetricsReport {
    double acc = 0.0;
    double pre = 0.0;  // macro precision
    double f1 = 0.0;   // macro F1
    std::vector<ClassCounts> per_class;
};

// Accuracy plus macro precision/F1 over the union of classes seen in truth or
// predictions. A class never predicted contributes precision 0.
inline MetricsReport compute_metrics(const std::vector<int>& predictions,
                                     const std::vector<int>& truth) {
    if (predictions.size() != truth.size() || truth.empty())
        throw ContractError("compute_metrics: length mismatch or empty input");

    std::map<int, ClassCounts> counts;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        counts[truth[i]].support += 1;
        counts[truth[i]].label = truth[i];
        counts[predictions[i]].label = predictions[i];
        if (predictions[i] == truth[i]) {
            counts[truth[i]].tp += 1;
            ++correct;
        } else {
            counts[predictions[i]].fp += 1;
            counts[truth[i]].fn += 1;
        }
    }

    MetricsReport r;
    r.acc = static_cast<double>(correct) / static_cast<double>(truth.size());
    double pre_sum = 0.0, f1_sum = 0.0;
    for (auto& [label, c] : counts) {
        const double denom_p = static_cast<double>(c.tp + c.fp);
        const double denom_r = static_cast<double>(c.tp + c.fn);
        const double p = denom_p > 0.0 ? static_cast<double>(c.tp) / denom_p : 0.0;
        const double rec = denom_r > 0.0 ? static_cast<double>(c.tp) / denom_r : 0.0;
        pre_sum += p;
        f1_sum += (p + rec) > 0.0 ? 2.0 * p * rec / (p + rec) : 0.0;
        r.per_class.push_back(c);
    }
    const double k = static_cast<double>(counts.size());
    r.pre = pre_sum / k;
    r.f1 = f1_sum / k;
    return r;
}

// Median of pooled pairwise Euclidean distances. Pools are strided down to at
// most 2048 rows so the heuristic stays O(10^6) pairs.
inline double median_heuristic_bandwidth(const Matrix& x, const Matrix& y) {
    const std::size_t cap = 2048;
    std::vector<const Matrix*> sources = {&x, &y};
    std::vector<std::pair<const Matrix*, std::size_t>> rows;
    for (const Matrix* m : sources) {
        const std::size_t stride = m->rows() > cap / 2 ? m->rows() / (cap / 2) + 1 : 1;
        for (std::size_t i = 0; i < m->rows(); i += stride) rows.emplace_back(m, i);
    }
    std::vector<double> dists;
    dists.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            dists.push_back(std::sqrt(
                squared_distance(*rows[i].first, rows[i].second, *rows[j].first, rows[j].second)));
    if (dists.empty()) return 1.0;
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double med = dists[dists.size() / 2];
    return med > 1e-12 ? med : 1.0;
}

// Unbiased U-statistic estimate of squared MMD with an RBF kernel, clamped at
// zero. With no bandwidth given the median heuristic is used.
inline double mmd_rbf(const Matrix& x, const Matrix& y,
                      std::optional<double> bandwidth = std::nullopt) {
    if (x.rows() < 2 || y.rows() < 2) throw ContractError("mmd_rbf: need at least 2 rows per set");
    if (x.cols() != y.cols()) throw ContractError("mmd_rbf: dimension mismatch");
    if (bandwidth && !(*bandwidth > 0.0)) throw ContractError("mmd_rbf: bandwidth must be > 0");

    const double sigma = bandwidth ? *bandwidth : median_heuristic_bandwidth(x, y);
    const double gamma = 1.0 / (2.0 * sigma * sigma);
    const double m = static_cast<double>(x.rows());
    const double n = static_cast<double>(y.rows());

    KahanSum xx, yy, xy;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.rows(); ++j)
            if (i != j) xx.add(std::exp(-gamma * squared_distance(x, i, x, j)));
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j)
            if (i != j) yy.add(std::exp(-gamma * squared_distance(y, i, y, j)));
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j)
            xy.add(std::exp(-gamma * squared_distance(x, i, y, j)));

    const double est = xx.value() / (m * (m - 1.0)) + yy.value() / (n * (n - 1.0)) -
                       2.0 * xy.value() / (m * n);
    return est > 0.0 ? est : 0.0;
}

// exp(mean_x KL(p(y|x) || p(y))) with p(y) the marginal over the sample set;
// desk-scale stand-in for an Inception-style realism score, computed with a
// reference classifier trained on the full dataset.
inline double score_analog(const Matrix& samples, const MultiHeadClassifier& reference) {
    if (samples.rows() == 0) throw ContractError("score_analog: empty sample set");
    Prediction pred = predict(reference, samples);
    const Matrix& p = pred.probabilities;

    std::vector<double> marginal(p.cols(), 0.0);
    for (std::size_t c = 0; c < p.cols(); ++c) {
        KahanSum s;
        for (std::size_t i = 0; i < p.rows(); ++i) s.add(p(i, c));
        marginal[c] = s.value() / static_cast<double>(p.rows());
    }

    KahanSum kl_sum;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double kl = 0.0;
        for (std::size_t c = 0; c < p.cols(); ++c) {
            const double pc = p(i, c);
            if (pc <= 0.0) continue;
            kl += pc * (std::log(pc) - guarded_log(marginal[c]));
        }
        kl_sum.add(kl > 0.0 ? kl : 0.0);  // KL >= 0; clip rounding residue
    }
    return std::exp(kl_sum.value() / static_cast<double>(p.rows()));
}

}  // namespace fewgan
