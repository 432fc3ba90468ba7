#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "fewgan/matrix.hpp"
#include "fewgan/rng.hpp"

namespace fewgan {

// One N-way K-shot task: disjoint support/query splits over N sampled classes.
// Labels are re-indexed to 0..N-1; class_ids maps back to dataset labels.
struct Episode {
    std::size_t way = 0;
    std::size_t shots = 0;
    Matrix support_x;
    std::vector<int> support_y;
    Matrix query_x;
    std::vector<int> query_y;
    std::vector<int> class_ids;
    std::vector<std::size_t> support_rows;  // dataset row ids, for audits
    std::vector<std::size_t> query_rows;
    std::uint64_t seed = 0;

    Matrix support_rows_of_class(int episode_class) const {
        std::size_t count = 0;
        for (int y : support_y)
            if (y == episode_class) ++count;
        Matrix out(count, support_x.cols());
        std::size_t r = 0;
        for (std::size_t i = 0; i < support_y.size(); ++i)
            if (support_y[i] == episode_class) {
                for (std::size_t c = 0; c < support_x.cols(); ++c)
                    out(r, c) = support_x(i, c);
                ++r;
            }
        return out;
    }
};

// Uniform class choice without replacement among classes large enough for
// K + query_per_class rows, then stratified row choice without replacement.
inline Episode sample_episode(const Matrix& x, const std::vector<int>& labels, std::size_t way,
                              std::size_t shots, std::size_t query_per_class, Rng& rng) {
    if (x.rows() != labels.size() || x.rows() == 0)
        throw DataError("sample_episode: data/label mismatch or empty data");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    const std::size_t need = shots + query_per_class;
    std::vector<int> eligible;
    int worst_class = -1;
    std::size_t worst_count = static_cast<std::size_t>(-1);
    for (const auto& [c, rows] : by_class) {
        if (rows.size() >= need)
            eligible.push_back(c);
        else if (rows.size() < worst_count) {
            worst_count = rows.size();
            worst_class = c;
        }
    }
    if (eligible.size() < way) {
        if (worst_class >= 0)
            throw EpisodeError("episode needs " + std::to_string(need) + " rows per class; class " +
                               std::to_string(worst_class) + " has only " +
                               std::to_string(worst_count));
        throw EpisodeError("episode needs " + std::to_string(way) + " classes; dataset has " +
                           std::to_string(by_class.size()));
    }

    rng.shuffle(eligible.begin(), eligible.end());
    eligible.resize(way);
    std::sort(eligible.begin(), eligible.end());

    Episode ep;
    ep.way = way;
    ep.shots = shots;
    ep.class_ids = eligible;
    ep.support_x = Matrix(way * shots, x.cols());
    ep.query_x = Matrix(way * query_per_class, x.cols());

    std::size_t s_row = 0, q_row = 0;
    for (std::size_t k = 0; k < way; ++k) {
        std::vector<std::size_t> rows = by_class[eligible[k]];
        rng.shuffle(rows.begin(), rows.end());
        for (std::size_t i = 0; i < shots; ++i, ++s_row) {
            for (std::size_t c = 0; c < x.cols(); ++c) ep.support_x(s_row, c) = x(rows[i], c);
            ep.support_y.push_back(static_cast<int>(k));
            ep.support_rows.push_back(rows[i]);
        }
        for (std::size_t i = shots; i < need; ++i, ++q_row) {
            for (std::size_t c = 0; c < x.cols(); ++c) ep.query_x(q_row, c) = x(rows[i], c);
            ep.query_y.push_back(static_cast<int>(k));
            ep.query_rows.push_back(rows[i]);
        }
    }
    return ep;
}

}  // namespace fewgan
