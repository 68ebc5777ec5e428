#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mfjm/errors.hpp"

namespace mfjm {

// Trapezoidal quadrature weights on an arbitrary strictly increasing grid.
inline Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
    const int g = static_cast<int>(grid.size());
    if (g < 2) throw ConfigError("trapezoid_weights: grid needs at least 2 points");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(g);
    for (int i = 0; i + 1 < g; ++i) {
        const double h = grid(i + 1) - grid(i);
        if (h <= 0.0) throw ConfigError("trapezoid_weights: grid not strictly increasing");
        w(i) += 0.5 * h;
        w(i + 1) += 0.5 * h;
    }
    return w;
}

// Linear interpolation of tabulated values; evaluation outside the grid
// (beyond a small tolerance) is a domain error.
inline double interp_linear(const Eigen::VectorXd& grid, const Eigen::VectorXd& values,
                            double t) {
    const int g = static_cast<int>(grid.size());
    const double lo = grid(0), hi = grid(g - 1);
    const double tol = 1e-10 * std::max(1.0, std::abs(hi - lo));
    if (t < lo - tol || t > hi + tol)
        throw DomainError("interp_linear: point " + std::to_string(t) + " outside grid range");
    if (t <= lo) return values(0);
    if (t >= hi) return values(g - 1);
    const double* begin = grid.data();
    const int j = static_cast<int>(std::upper_bound(begin, begin + g, t) - begin) - 1;
    const double frac = (t - grid(j)) / (grid(j + 1) - grid(j));
    return values(j) + frac * (values(j + 1) - values(j));
}

// Empirical quantile, type 7 (linear interpolation of order statistics).
inline double quantile_type7(std::vector<double> x, double p) {
    if (x.empty()) throw ConfigError("quantile_type7: empty sample");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = static_cast<std::size_t>(std::ceil(h));
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// Nodes and weights of the 7-point Gauss-Legendre rule on [-1, 1].
inline const std::array<double, 7>& gauss_legendre7_nodes() {
    static const std::array<double, 7> nodes = {
        -0.9491079123427585245261897,
        -0.7415311855993944398638648,
        -0.4058451513773971669066064,
        0.0,
        0.4058451513773971669066064,
        0.7415311855993944398638648,
        0.9491079123427585245261897,
    };
    return nodes;
}

inline const std::array<double, 7>& gauss_legendre7_weights() {
    static const std::array<double, 7> weights = {
        0.1294849661688696932706114,
        0.2797053914892766679014678,
        0.3818300505051189449503698,
        0.4179591836734693877551020,
        0.3818300505051189449503698,
        0.2797053914892766679014678,
        0.1294849661688696932706114,
    };
    return weights;
}

inline Eigen::VectorXd linspace(double lo, double hi, int count) {
    return Eigen::VectorXd::LinSpaced(count, lo, hi);
}

} // namespace mfjm
