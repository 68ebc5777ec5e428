#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mfjm/errors.hpp"
#include "mfjm/numeric.hpp"

namespace mfjm::jm {

// Composite 7-point Gauss-Legendre rule on [0, upper] with geometrically
// graded panels, finest toward zero where baseline hazards of the form
// exp(a t^b) have unbounded derivatives. A single panel is exact for
// polynomial integrands up to degree 13; the grading controls the error for
// integrands with an algebraic singularity in the derivative at 0.
struct QuadratureRule {
    int panels = 4;
    double grading = 4.0;

    int points_per_subject() const { return panels * 7; }

    // Fills nodes and weights for the integral over [0, upper].
    void nodes(double upper, Eigen::VectorXd& s, Eigen::VectorXd& w) const {
        if (!(upper > 0.0)) throw DomainError("quadrature upper limit must be positive");
        if (panels < 1 || grading < 1.0) throw ConfigError("invalid quadrature rule");
        const auto& gx = gauss_legendre7_nodes();
        const auto& gw = gauss_legendre7_weights();
        s.resize(points_per_subject());
        w.resize(points_per_subject());
        double lo = 0.0;
        int idx = 0;
        for (int p = 0; p < panels; ++p) {
            const double hi =
                (p + 1 == panels) ? upper : upper * std::pow(grading, -(panels - 1 - p));
            const double half = 0.5 * (hi - lo);
            const double mid = 0.5 * (hi + lo);
            for (int j = 0; j < 7; ++j) {
                s(idx) = mid + half * gx[j];
                w(idx) = half * gw[j];
                ++idx;
            }
            lo = hi;
        }
    }

    QuadratureRule refined() const {
        QuadratureRule r = *this;
        r.panels = 2 * panels;
        return r;
    }
};

} // namespace mfjm::jm
