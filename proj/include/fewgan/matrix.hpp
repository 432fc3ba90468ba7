#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "fewgan/errors.hpp"

namespace fewgan {

// Dense row-major matrix of 64-bit floats. Convention throughout the library:
// one row per sample, one column per feature.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("matrix data length does not match rows*cols");
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged initializer for matrix");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    // Construction with finiteness checking; used at ingestion boundaries
    // (CSV load, checkpoint load) where NaN/Inf must be rejected.
    static Matrix checked(std::size_t rows, std::size_t cols, std::vector<double> data) {
        Matrix m(rows, cols, std::move(data));
        for (double v : m.data_)
            if (!std::isfinite(v)) throw DataError("non-finite entry in matrix");
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    Matrix row(std::size_t r) const {
        Matrix out(1, cols_);
        for (std::size_t c = 0; c < cols_; ++c) out(0, c) = (*this)(r, c);
        return out;
    }

    void set_row(std::size_t r, const Matrix& v) {
        if (v.rows() != 1 || v.cols() != cols_) throw ShapeError("set_row shape mismatch");
        for (std::size_t c = 0; c < cols_; ++c) (*this)(r, c) = v(0, c);
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions disagree");
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* out_row = out.row_ptr(i);
        const double* a_row = a.row_ptr(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a_row[p];
            const double* b_row = b.row_ptr(p);
            for (std::size_t j = 0; j < m; ++j) out_row[j] += av * b_row[j];
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] += b.raw()[i];
    return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] -= b.raw()[i];
    return out;
}

inline Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (double& v : out.raw()) v *= c;
    return out;
}

inline Matrix concat_rows(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("concat_rows: column counts disagree");
    Matrix out(a.rows() + b.rows(), a.cols());
    std::size_t i = 0;
    for (; i < a.rows(); ++i)
        for (std::size_t c = 0; c < a.cols(); ++c) out(i, c) = a(i, c);
    for (std::size_t r = 0; r < b.rows(); ++r, ++i)
        for (std::size_t c = 0; c < b.cols(); ++c) out(i, c) = b(r, c);
    return out;
}

inline double squared_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    const double* x = a.row_ptr(i);
    const double* y = b.row_ptr(j);
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double d = x[c] - y[c];
        s += d * d;
    }
    return s;
}

// Neumaier-compensated accumulator. Keeps long reductions (MMD sums, loss
// means) accurate enough that symmetry and reduction identities survive
// floating point.
class KahanSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }
    double primary() const { return sum_; }
    double compensation() const { return comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace fewgan
