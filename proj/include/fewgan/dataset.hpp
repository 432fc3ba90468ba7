#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fewgan/matrix.hpp"
#include "fewgan/rng.hpp"

namespace fewgan {

struct Dataset {
    Matrix x;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::vector<std::string> feature_names;

    std::size_t n_classes() const { return class_names.size(); }

    Matrix rows_of_class(int label) const {
        std::size_t count = 0;
        for (int y : labels)
            if (y == label) ++count;
        Matrix out(count, x.cols());
        std::size_t r = 0;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) {
                for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(i, c);
                ++r;
            }
        return out;
    }
};

enum class SyntheticKind { ring_mixture, two_blobs, two_moons };

inline std::string synthetic_kind_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::ring_mixture: return "ring-mixture";
        case SyntheticKind::two_blobs: return "two-blobs";
        case SyntheticKind::two_moons: return "two-moons";
    }
    return "ring-mixture";
}

inline SyntheticKind synthetic_kind_from_name(const std::string& s) {
    if (s == "ring-mixture") return SyntheticKind::ring_mixture;
    if (s == "two-blobs") return SyntheticKind::two_blobs;
    if (s == "two-moons") return SyntheticKind::two_moons;
    throw ConfigError("unknown synthetic dataset kind: " + s);
}

struct DatasetSpec {
    std::string source = "synthetic";  // "csv" | "synthetic"
    std::string path;
    std::string label_column;
    std::vector<std::string> feature_columns;  // empty = all non-label columns
    bool standardize = true;
    SyntheticKind kind = SyntheticKind::two_blobs;
    std::size_t modes = 8;
    double radius = 2.0;
    double noise = 0.15;
    std::size_t n_per_class = 500;
    std::uint64_t seed = 0;
};

// Per-column z-score over the whole set; near-constant columns are centered
// only.
inline void standardize_columns(Matrix& x) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
        KahanSum s;
        for (std::size_t i = 0; i < x.rows(); ++i) s.add(x(i, c));
        const double mean = s.value() / static_cast<double>(x.rows());
        KahanSum sq;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double d = x(i, c) - mean;
            sq.add(d * d);
        }
        const double var = sq.value() / static_cast<double>(x.rows());
        const double sd = std::sqrt(var);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            x(i, c) -= mean;
            if (sd > 1e-12) x(i, c) /= sd;
        }
    }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim
        std::size_t b = cell.find_first_not_of(" \t\r");
        std::size_t e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace detail

inline Dataset make_ring_mixture(std::size_t modes, double radius, double noise,
                                 std::size_t n_per_class, Rng& rng) {
    Dataset d;
    d.x = Matrix(modes * n_per_class, 2);
    d.feature_names = {"x0", "x1"};
    const double two_pi = 2.0 * 3.14159265358979323846;
    std::size_t row = 0;
    for (std::size_t m = 0; m < modes; ++m) {
        const double cx = radius * std::cos(two_pi * m / modes);
        const double cy = radius * std::sin(two_pi * m / modes);
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            d.x(row, 0) = cx + noise * rng.normal();
            d.x(row, 1) = cy + noise * rng.normal();
            d.labels.push_back(static_cast<int>(m));
        }
        d.class_names.push_back("mode" + std::to_string(m));
    }
    return d;
}

inline Dataset make_two_blobs(double separation, double noise, std::size_t n_per_class, Rng& rng) {
    Dataset d;
    d.x = Matrix(2 * n_per_class, 2);
    d.feature_names = {"x0", "x1"};
    d.class_names = {"neg", "pos"};
    for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
        const int cls = i < n_per_class ? 0 : 1;
        const double cx = cls == 0 ? -separation / 2.0 : separation / 2.0;
        d.x(i, 0) = cx + noise * rng.normal();
        d.x(i, 1) = noise * rng.normal();
        d.labels.push_back(cls);
    }
    return d;
}

inline Dataset make_two_moons(double noise, std::size_t n_per_class, Rng& rng) {
    Dataset d;
    d.x = Matrix(2 * n_per_class, 2);
    d.feature_names = {"x0", "x1"};
    d.class_names = {"lower", "upper"};
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n_per_class; ++i) {
        const double t = pi * rng.uniform();
        d.x(i, 0) = std::cos(t) + noise * rng.normal();
        d.x(i, 1) = std::sin(t) + noise * rng.normal();
        d.labels.push_back(0);
    }
    for (std::size_t i = 0; i < n_per_class; ++i) {
        const double t = pi * rng.uniform();
        d.x(n_per_class + i, 0) = 1.0 - std::cos(t) + noise * rng.normal();
        d.x(n_per_class + i, 1) = 0.5 - std::sin(t) + noise * rng.normal();
        d.labels.push_back(1);
    }
    return d;
}

inline Dataset load_csv_dataset(const DatasetSpec& spec) {
    std::ifstream in(spec.path);
    if (!in) throw DataError("cannot open csv file: " + spec.path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty csv file: " + spec.path);
    const std::vector<std::string> header = detail::split_csv_line(line);

    std::size_t label_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == spec.label_column) label_col = i;
    if (label_col == header.size())
        throw DataError("label column '" + spec.label_column + "' not found in " + spec.path);

    std::vector<std::size_t> feature_cols;
    if (spec.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (i != label_col) feature_cols.push_back(i);
    } else {
        for (const auto& name : spec.feature_columns) {
            std::size_t at = header.size();
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) at = i;
            if (at == header.size())
                throw DataError("feature column '" + name + "' not found in " + spec.path);
            feature_cols.push_back(at);
        }
    }

    Dataset d;
    for (auto c : feature_cols) d.feature_names.push_back(header[c]);
    std::vector<double> values;
    std::vector<std::string> raw_labels;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row_no) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
        for (auto c : feature_cols) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cells[c], &used);
                if (used != cells[c].size()) throw std::invalid_argument("trailing characters");
                values.push_back(v);
            } catch (const std::exception&) {
                throw DataError("non-numeric cell at row " + std::to_string(row_no) + ", column '" +
                                header[c] + "': '" + cells[c] + "'");
            }
        }
        raw_labels.push_back(cells[label_col]);
    }
    if (raw_labels.empty()) throw DataError("csv has no data rows: " + spec.path);

    std::map<std::string, int> label_index;
    for (const auto& l : raw_labels)
        if (!label_index.count(l)) {
            label_index[l] = static_cast<int>(label_index.size());
            d.class_names.push_back(l);
        }
    // map insertion order above follows first appearance; rebuild sorted for
    // a stable, file-order-independent class indexing
    d.class_names.clear();
    int next = 0;
    for (auto& [name, idx] : label_index) {
        idx = next++;
        d.class_names.push_back(name);
    }
    for (const auto& l : raw_labels) d.labels.push_back(label_index[l]);

    d.x = Matrix::checked(raw_labels.size(), feature_cols.size(), std::move(values));
    return d;
}

// Loads a dataset per spec: CSV file or one of the synthetic families.
// Requires at least two classes; standardizes features when asked.
inline Dataset load_dataset(const DatasetSpec& spec) {
    Dataset d;
    if (spec.source == "csv") {
        d = load_csv_dataset(spec);
    } else if (spec.source == "synthetic") {
        Rng rng(spec.seed);
        switch (spec.kind) {
            case SyntheticKind::ring_mixture:
                d = make_ring_mixture(spec.modes, spec.radius, spec.noise, spec.n_per_class, rng);
                break;
            case SyntheticKind::two_blobs:
                d = make_two_blobs(4.0, spec.noise <= 0 ? 0.5 : spec.noise, spec.n_per_class, rng);
                break;
            case SyntheticKind::two_moons:
                d = make_two_moons(spec.noise, spec.n_per_class, rng);
                break;
        }
    } else {
        throw ConfigError("dataset source must be 'csv' or 'synthetic', got '" + spec.source + "'");
    }
    if (d.n_classes() < 2) throw DataError("dataset has a single class");
    if (spec.standardize) standardize_columns(d.x);
    return d;
}

// All floats at 17 significant digits, enough to round-trip doubles.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv_matrix(const std::string& path, const Matrix& m,
                             const std::vector<std::string>& header = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write csv file: " + path);
    if (!header.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            out << (c ? "," : "") << header[c];
        out << "\n";
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t c = 0; c < m.cols(); ++c)
            out << (c ? "," : "") << format_double(m(i, c));
        out << "\n";
    }
}

}  // namespace fewgan
