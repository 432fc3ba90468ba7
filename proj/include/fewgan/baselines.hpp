#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "fewgan/matrix.hpp"
#include "fewgan/rng.hpp"

namespace fewgan {

struct AugmentedSet {
    Matrix x;
    std::vector<int> y;
    // Classes where SMOTE fell back to plain duplication (singleton classes).
    std::vector<int> ros_fallback_classes;
};

namespace detail {

inline std::map<int, std::vector<std::size_t>> group_by_class(const std::vector<int>& y) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
    return by_class;
}

inline void append_row(Matrix& out, std::vector<int>& out_y, std::size_t& at, const double* row,
                       std::size_t cols, int label) {
    for (std::size_t c = 0; c < cols; ++c) out(at, c) = row[c];
    out_y.push_back(label);
    ++at;
}

}  // namespace detail

// Random oversampling: duplicate class rows with replacement until every
// class reaches target_per_class. Original rows come first, then the
// synthesized ones class by class.
inline AugmentedSet baseline_ros(const Matrix& x, const std::vector<int>& y,
                                 std::size_t target_per_class, Rng& rng) {
    if (x.rows() != y.size() || x.rows() == 0)
        throw DataError("baseline_ros: data/label mismatch or empty data");
    auto by_class = detail::group_by_class(y);
    std::size_t extra = 0;
    for (const auto& [c, rows] : by_class) {
        if (rows.empty()) throw DataError("baseline_ros: empty class " + std::to_string(c));
        if (rows.size() > target_per_class)
            throw ContractError("baseline_ros: class " + std::to_string(c) +
                                " already exceeds the target count");
        extra += target_per_class - rows.size();
    }

    AugmentedSet out;
    out.x = Matrix(x.rows() + extra, x.cols());
    out.y.reserve(x.rows() + extra);
    std::size_t at = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        detail::append_row(out.x, out.y, at, x.row_ptr(i), x.cols(), y[i]);
    for (const auto& [c, rows] : by_class)
        for (std::size_t k = rows.size(); k < target_per_class; ++k) {
            const std::size_t pick = rows[rng.integer(rows.size())];
            detail::append_row(out.x, out.y, at, x.row_ptr(pick), x.cols(), c);
        }
    return out;
}

// SMOTE: each synthetic row is x_i + u * (x_nn - x_i) with u ~ U(0,1) and
// x_nn one of the k nearest same-class neighbors of x_i. Singleton classes
// fall back to duplication and are reported in the result.
inline AugmentedSet baseline_smote(const Matrix& x, const std::vector<int>& y,
                                   std::size_t target_per_class, std::size_t k_neighbors,
                                   Rng& rng) {
    if (x.rows() != y.size() || x.rows() == 0)
        throw DataError("baseline_smote: data/label mismatch or empty data");
    if (k_neighbors < 1) throw ContractError("baseline_smote: k_neighbors must be >= 1");
    auto by_class = detail::group_by_class(y);
    std::size_t extra = 0;
    for (const auto& [c, rows] : by_class) {
        if (rows.empty()) throw DataError("baseline_smote: empty class " + std::to_string(c));
        if (rows.size() > target_per_class)
            throw ContractError("baseline_smote: class " + std::to_string(c) +
                                " already exceeds the target count");
        extra += target_per_class - rows.size();
    }

    AugmentedSet out;
    out.x = Matrix(x.rows() + extra, x.cols());
    out.y.reserve(x.rows() + extra);
    std::size_t at = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        detail::append_row(out.x, out.y, at, x.row_ptr(i), x.cols(), y[i]);

    for (const auto& [c, rows] : by_class) {
        const std::size_t need = target_per_class - rows.size();
        if (need == 0) continue;
        if (rows.size() == 1) {
            out.ros_fallback_classes.push_back(c);
            for (std::size_t k = 0; k < need; ++k)
                detail::append_row(out.x, out.y, at, x.row_ptr(rows[0]), x.cols(), c);
            continue;
        }

        // k nearest same-class neighbors per row (excluding the row itself)
        const std::size_t k_eff = std::min(k_neighbors, rows.size() - 1);
        std::vector<std::vector<std::size_t>> nn(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<std::pair<double, std::size_t>> dist;
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (i == j) continue;
                dist.emplace_back(squared_distance(x, rows[i], x, rows[j]), rows[j]);
            }
            std::partial_sort(dist.begin(), dist.begin() + k_eff, dist.end());
            for (std::size_t k = 0; k < k_eff; ++k) nn[i].push_back(dist[k].second);
        }

        for (std::size_t s = 0; s < need; ++s) {
            const std::size_t base = rng.integer(rows.size());
            const std::size_t pick = nn[base][rng.integer(nn[base].size())];
            const double u = rng.uniform();
            std::vector<double> row(x.cols());
            for (std::size_t col = 0; col < x.cols(); ++col) {
                const double xi = x(rows[base], col);
                row[col] = xi + u * (x(pick, col) - xi);
            }
            detail::append_row(out.x, out.y, at, row.data(), x.cols(), c);
        }
    }
    return out;
}

}  // namespace fewgan
