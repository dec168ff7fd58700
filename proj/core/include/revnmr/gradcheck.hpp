#pragma once

#include <functional>
#include <string>
#include <vector>

#include "revnmr/tensor.hpp"

namespace revnmr {

/// Central finite differences of a scalar function at `x`, step `h`.
/// Independent of the autograd backward path by construction.
inline Tensor<double> finite_difference_gradient(const std::function<double(const Tensor<double>&)>& f,
                                                 Tensor<double> x, double h = 1e-3) {
    Tensor<double> g(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Worst relative error between analytic and numeric gradients, with the
/// denominator floored at 1e-8.
inline double max_relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric) {
    double worst = 0.0;
    for (int64_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

/// One named gradient check: compares analytic gradients of every checked
/// input of a scalar-valued computation against central finite differences.
struct GradCheckResult {
    std::string component;
    double worst_rel_error = 0.0;
    bool ok = false;
};

/// Runs the full registry of gradient checks over every differentiable
/// primitive and the complete training objective (defined in gradcheck.cpp).
std::vector<GradCheckResult> run_gradient_checks(uint64_t seed, double tolerance = 1e-4);

}  // namespace revnmr
