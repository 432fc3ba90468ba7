#pragma once

#include <cmath>
#include <functional>

#include "fewgan/matrix.hpp"

namespace fewgan {

// A scalar-valued differentiable map: returns f(x) and, when grad_out is
// non-null, fills the analytic gradient at x.
using DifferentiableMap = std::function<double(const Matrix&, Matrix* grad_out)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const DifferentiableMap& f, const Matrix& point, double step) {
    if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
    Matrix analytic(point.rows(), point.cols());
    const double f0 = f(point, &analytic);
    if (!std::isfinite(f0) || !analytic.all_finite())
        throw Error("grad_check: non-finite function value or gradient");

    double worst = 0.0;
    Matrix x = point;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x.raw()[i];
        x.raw()[i] = orig + step;
        const double fp = f(x, nullptr);
        x.raw()[i] = orig - step;
        const double fm = f(x, nullptr);
        x.raw()[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw Error("grad_check: non-finite function value during differencing");
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic.raw()[i];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        if (err > worst) worst = err;
    }
    return worst;
}

}  // namespace fewgan
