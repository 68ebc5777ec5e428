#pragma once

#include <vector>

#include <Eigen/Dense>

namespace mfjm::spline {

// B-spline basis definition with equidistant interior knots and degree+1
// repeated boundary knots. num_basis counts basis functions before any
// sum-to-zero centering.
struct SplineBasisDef {
    int degree = 3;
    int num_basis = 20;
    double lo = 0.0;
    double hi = 1.0;
    int penalty_order = 3;

    std::vector<double> knots() const;
    void validate() const;
};

// Evaluates all num_basis B-spline basis functions at the given points
// (row i = basis values at points[i]). Points must lie in [lo, hi].
Eigen::MatrixXd eval_bspline_basis(const SplineBasisDef& def, const Eigen::VectorXd& points);

// Single-point variant returning one row.
Eigen::RowVectorXd eval_bspline_row(const SplineBasisDef& def, double x);

// D^T D for the order-th difference operator D on num_basis coefficients.
Eigen::MatrixXd difference_penalty(int num_basis, int order);

// Sum-to-zero centering via reparameterization onto the orthogonal
// complement of the column-sum constraint. The transform maps reduced
// coefficients b back to the original space as beta = Z b.
struct CenteringTransform {
    Eigen::MatrixXd null_basis; // p x (p-1), orthonormal columns
    bool applied = false;
};

struct CenteredDesign {
    Eigen::MatrixXd design;
    Eigen::MatrixXd penalty;
    CenteringTransform transform;
};

CenteredDesign center_design(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty);

} // namespace mfjm::spline
