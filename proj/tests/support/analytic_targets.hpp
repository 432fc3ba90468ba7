#pragma once

// Analytic latent targets for sampler tests: cases where the stationary
// distribution is known in closed form, so chain output can be checked
// against ground truth instead of against the implementation.

#include <cmath>

#include "fewgan/matrix.hpp"
#include "fewgan/sampler.hpp"

namespace fewgan::testing {

// N(mean, sd^2 I)
class GaussianTarget : public LatentTarget {
public:
    GaussianTarget(std::size_t dim, double mean, double sd) : dim_(dim), mean_(mean), sd_(sd) {}

    std::size_t dim() const override { return dim_; }

    double log_density(const Matrix& z, Matrix* grad, Matrix* x_out) const override {
        double q = 0.0;
        for (double v : z.raw()) {
            const double d = (v - mean_) / sd_;
            q += d * d;
        }
        if (grad) {
            *grad = z;
            for (double& v : grad->raw()) v = -(v - mean_) / (sd_ * sd_);
        }
        if (x_out) *x_out = z;
        return -0.5 * q - 0.5 * static_cast<double>(dim_) *
                              std::log(2.0 * 3.14159265358979323846 * sd_ * sd_);
    }

private:
    std::size_t dim_;
    double mean_;
    double sd_;
};

// Improper flat target: zero gradient everywhere, so the Langevin proposal
// reduces to pure diffusion.
class FlatTarget : public LatentTarget {
public:
    explicit FlatTarget(std::size_t dim) : dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    double log_density(const Matrix& z, Matrix* grad, Matrix* x_out) const override {
        if (grad) *grad = Matrix(1, dim_);
        if (x_out) *x_out = z;
        return 0.0;
    }

private:
    std::size_t dim_;
};

}  // namespace fewgan::testing
