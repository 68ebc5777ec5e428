#include "mfjm/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfjm/errors.hpp"

namespace mfjm::spline {

void SplineBasisDef::validate() const {
    if (degree < 0) throw ConfigError("spline degree must be nonnegative");
    if (num_basis <= degree + 1)
        throw ConfigError("num_basis must exceed degree + 1 (got " +
                          std::to_string(num_basis) + ")");
    if (penalty_order < 1 || penalty_order >= num_basis)
        throw ConfigError("penalty order must be in [1, num_basis)");
    if (!(hi > lo)) throw ConfigError("spline domain is degenerate");
}

std::vector<double> SplineBasisDef::knots() const {
    validate();
    const int interior = num_basis - degree - 1;
    const double h = (hi - lo) / static_cast<double>(interior + 1);
    std::vector<double> k;
    k.reserve(num_basis + degree + 1);
    for (int i = 0; i <= degree; ++i) k.push_back(lo);
    for (int i = 1; i <= interior; ++i) k.push_back(lo + h * i);
    for (int i = 0; i <= degree; ++i) k.push_back(hi);
    return k;
}

namespace {

// Cox-de Boor evaluation of the degree+1 non-vanishing basis functions at x.
// span is the index with knots[span] <= x < knots[span+1].
void basis_funs(const std::vector<double>& knots, int span, int degree, double x,
                std::vector<double>& vals) {
    vals.assign(degree + 1, 0.0);
    std::vector<double> left(degree + 1), right(degree + 1);
    vals[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double temp = denom != 0.0 ? vals[r] / denom : 0.0;
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
}

int find_span(const std::vector<double>& knots, int num_basis, int degree, double x) {
    // Right-closed at the upper boundary: the last span owns hi.
    const int last = num_basis - 1; // knots[last] <= x < knots[last+1] normally
    if (x >= knots[num_basis]) return last;
    const auto it = std::upper_bound(knots.begin() + degree, knots.begin() + num_basis + 1, x);
    return static_cast<int>(it - knots.begin()) - 1;
}

} // namespace

Eigen::RowVectorXd eval_bspline_row(const SplineBasisDef& def, double x) {
    const auto knots = def.knots();
    const double tol = 1e-12 * std::max(1.0, std::abs(def.hi - def.lo));
    if (x < def.lo - tol || x > def.hi + tol)
        throw DomainError("B-spline evaluation point " + std::to_string(x) +
                          " outside domain [" + std::to_string(def.lo) + ", " +
                          std::to_string(def.hi) + "]");
    x = std::clamp(x, def.lo, def.hi);
    const int span = find_span(knots, def.num_basis, def.degree, x);
    std::vector<double> vals;
    basis_funs(knots, span, def.degree, x, vals);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(def.num_basis);
    for (int j = 0; j <= def.degree; ++j) row(span - def.degree + j) = vals[j];
    return row;
}

Eigen::MatrixXd eval_bspline_basis(const SplineBasisDef& def, const Eigen::VectorXd& points) {
    def.validate();
    Eigen::MatrixXd out(points.size(), def.num_basis);
    for (int i = 0; i < points.size(); ++i) out.row(i) = eval_bspline_row(def, points(i));
    return out;
}

Eigen::MatrixXd difference_penalty(int num_basis, int order) {
    if (order < 1 || order >= num_basis)
        throw ConfigError("difference penalty order must be in [1, num_basis)");
    Eigen::MatrixXd diff = Eigen::MatrixXd::Identity(num_basis, num_basis);
    for (int d = 0; d < order; ++d) {
        const int rows = static_cast<int>(diff.rows()) - 1;
        Eigen::MatrixXd next(rows, num_basis);
        for (int i = 0; i < rows; ++i) next.row(i) = diff.row(i + 1) - diff.row(i);
        diff = std::move(next);
    }
    return diff.transpose() * diff;
}

CenteredDesign center_design(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty) {
    const int p = static_cast<int>(design.cols());
    if (p < 2) throw ConfigError("center_design: need at least 2 columns");
    if (penalty.rows() != p || penalty.cols() != p)
        throw ConfigError("center_design: penalty dimension mismatch");

    // Orthonormal basis of the null space of the column-sum constraint.
    Eigen::VectorXd c = design.colwise().sum().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd z = q.rightCols(p - 1);

    CenteredDesign out;
    out.design = design * z;
    out.penalty = z.transpose() * penalty * z;
    out.penalty = 0.5 * (out.penalty + out.penalty.transpose().eval());
    out.transform.null_basis = std::move(z);
    out.transform.applied = true;

    if (!out.design.allFinite())
        throw NumericalError("center_design: non-finite values after constraint transform");
    return out;
}

} // namespace mfjm::spline
