#include <doctest.h>

#include <cmath>

#include "mfjm/bspline.hpp"
#include "mfjm/errors.hpp"
#include "mfjm/rng.hpp"

using namespace mfjm;
using spline::SplineBasisDef;

namespace {

// Independent oracle: direct Cox-de Boor recursion over all basis indices,
// no span optimization.
double cox_de_boor(const std::vector<double>& knots, int i, int p, double x, double hi) {
    if (p == 0) {
        if (knots[i] <= x && x < knots[i + 1]) return 1.0;
        // closed right boundary: last nonempty interval owns hi
        if (x == hi && knots[i] < knots[i + 1] && knots[i + 1] == hi) return 1.0;
        return 0.0;
    }
    double left = 0.0, right = 0.0;
    if (knots[i + p] > knots[i])
        left = (x - knots[i]) / (knots[i + p] - knots[i]) * cox_de_boor(knots, i, p - 1, x, hi);
    if (knots[i + p + 1] > knots[i + 1])
        right = (knots[i + p + 1] - x) / (knots[i + p + 1] - knots[i + 1]) *
                cox_de_boor(knots, i + 1, p - 1, x, hi);
    return left + right;
}

} // namespace

TEST_CASE("partition of unity on random interior points") {
    SplineBasisDef def{3, 12, 0.0, 1.0, 2};
    Rng rng(7);
    Eigen::VectorXd pts(1000);
    for (int i = 0; i < 1000; ++i) pts(i) = rng.uniform();
    const Eigen::MatrixXd b = spline::eval_bspline_basis(def, pts);
    for (int i = 0; i < b.rows(); ++i) {
        CHECK(std::abs(b.row(i).sum() - 1.0) < 1e-12);
        CHECK(b.row(i).minCoeff() >= 0.0);
        CHECK(b.row(i).maxCoeff() <= 1.0);
    }
}

TEST_CASE("degree 0 basis gives bin indicators") {
    SplineBasisDef def{0, 4, 0.0, 1.0, 1};
    Eigen::VectorXd pts(1);
    pts << 0.3;
    const Eigen::MatrixXd b = spline::eval_bspline_basis(def, pts);
    CHECK(b(0, 0) == 0.0);
    CHECK(b(0, 1) == 1.0);
    CHECK(b(0, 2) == 0.0);
    CHECK(b(0, 3) == 0.0);
}

TEST_CASE("matches direct Cox-de Boor recursion oracle") {
    SplineBasisDef def{3, 10, 0.0, 1.0, 2};
    const auto knots = def.knots();
    for (double x : {0.0, 0.111, 0.25, 0.5, 0.77, 0.999, 1.0}) {
        const Eigen::RowVectorXd row = spline::eval_bspline_row(def, x);
        for (int j = 0; j < def.num_basis; ++j) {
            const double expected = cox_de_boor(knots, j, def.degree, x, def.hi);
            CHECK(std::abs(row(j) - expected) < 1e-12);
        }
    }
}

TEST_CASE("evaluation outside the domain is a domain error") {
    SplineBasisDef def{3, 10, 0.0, 1.0, 2};
    CHECK_THROWS_AS(spline::eval_bspline_row(def, -0.01), DomainError);
    CHECK_THROWS_AS(spline::eval_bspline_row(def, 1.01), DomainError);
}

TEST_CASE("degenerate basis definitions are config errors") {
    SplineBasisDef too_small{3, 4, 0.0, 1.0, 2};
    CHECK_THROWS_AS(too_small.validate(), ConfigError);
    SplineBasisDef bad_order{3, 10, 0.0, 1.0, 10};
    CHECK_THROWS_AS(bad_order.validate(), ConfigError);
    CHECK_THROWS_AS(spline::difference_penalty(5, 5), ConfigError);
}

TEST_CASE("difference penalty annihilates low-degree sequences") {
    for (int order = 1; order <= 3; ++order) {
        const Eigen::MatrixXd k = spline::difference_penalty(8, order);
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(8);
        CHECK((k * ones).cwiseAbs().maxCoeff() < 1e-10);
        if (order >= 2) {
            Eigen::VectorXd lin(8);
            for (int i = 0; i < 8; ++i) lin(i) = i + 1;
            CHECK((k * lin).cwiseAbs().maxCoeff() < 1e-10);
        }
        if (order >= 3) {
            Eigen::VectorXd quad(8);
            for (int i = 0; i < 8; ++i) quad(i) = (i + 1) * (i + 1);
            CHECK((k * quad).cwiseAbs().maxCoeff() < 1e-10);
        }
        // rank = n - order
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
        const int rank = static_cast<int>((eig.eigenvalues().array() > 1e-10).count());
        CHECK(rank == 8 - order);
    }
}

TEST_CASE("first-order penalty matches the hand-multiplied matrix") {
    const Eigen::MatrixXd k = spline::difference_penalty(4, 1);
    Eigen::MatrixXd expected(4, 4);
    expected << 1, -1, 0, 0,
        -1, 2, -1, 0,
        0, -1, 2, -1,
        0, 0, -1, 1;
    CHECK((k - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("centering produces zero column sums") {
    SplineBasisDef def{3, 9, 0.0, 1.0, 2};
    Eigen::VectorXd pts = Eigen::VectorXd::LinSpaced(60, 0.0, 1.0);
    const Eigen::MatrixXd x = spline::eval_bspline_basis(def, pts);
    const Eigen::MatrixXd k = spline::difference_penalty(9, 2);
    const auto centered = spline::center_design(x, k);
    CHECK(centered.design.cols() == 8);
    CHECK(centered.design.colwise().sum().cwiseAbs().maxCoeff() < 1e-10);

    // Idempotence: columns that already sum to zero stay zero-sum.
    const auto again = spline::center_design(centered.design,
                                             Eigen::MatrixXd::Zero(8, 8));
    CHECK(again.design.colwise().sum().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("single-column centering is a config error") {
    CHECK_THROWS_AS(spline::center_design(Eigen::MatrixXd::Ones(5, 1),
                                          Eigen::MatrixXd::Zero(1, 1)),
                    ConfigError);
}

TEST_CASE("centering preserves the penalized fit") {
    // Penalized least-squares oracle: original basis plus intercept versus
    // centered basis plus intercept on random mean-zero targets.
    SplineBasisDef def{3, 10, 0.0, 1.0, 2};
    Eigen::VectorXd pts = Eigen::VectorXd::LinSpaced(120, 0.0, 1.0);
    const Eigen::MatrixXd x = spline::eval_bspline_basis(def, pts);
    const Eigen::MatrixXd k = spline::difference_penalty(10, 2);
    const auto centered = spline::center_design(x, k);
    Rng rng(42);
    for (int rep = 0; rep < 3; ++rep) {
        Eigen::VectorXd y = rng.normal_vector(120);
        y.array() -= y.mean();
        const double lambda = 0.5;

        const auto fit_with_intercept = [&](const Eigen::MatrixXd& design,
                                            const Eigen::MatrixXd& penalty) {
            const long p = design.cols();
            Eigen::MatrixXd full(design.rows(), p + 1);
            full.col(0).setOnes();
            full.rightCols(p) = design;
            Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(p + 1, p + 1);
            pen.bottomRightCorner(p, p) = penalty;
            const Eigen::VectorXd beta =
                (full.transpose() * full + lambda * pen)
                    .ldlt()
                    .solve(full.transpose() * y);
            return (full * beta).eval();
        };
        const Eigen::VectorXd fit_orig = fit_with_intercept(x, k);
        const Eigen::VectorXd fit_cent = fit_with_intercept(centered.design, centered.penalty);
        CHECK((fit_orig - fit_cent).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("knot vector has boundary repeats and equidistant interior") {
    SplineBasisDef def{3, 8, 0.0, 2.0, 2};
    const auto knots = def.knots();
    CHECK(static_cast<int>(knots.size()) == 8 + 3 + 1);
    for (int i = 0; i <= 3; ++i) {
        CHECK(knots[i] == 0.0);
        CHECK(knots[knots.size() - 1 - i] == 2.0);
    }
    for (std::size_t i = 1; i < knots.size(); ++i) CHECK(knots[i] >= knots[i - 1]);
}
