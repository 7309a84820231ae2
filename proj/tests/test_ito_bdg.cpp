#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cylmart/ito_bdg.hpp"

using namespace cylmart;

namespace {

NoiseSpec brownian(Eigen::Index d, double scale = 1.0) { return NoiseSpec::constant(scale * Matrix::Identity(d, d), "W"); }

NoiseSpec adapted_scalar() {
    return NoiseSpec::adapted(
        1, 1, [](double, std::size_t cell, const DriverPast& past) { return Matrix::Constant(1, 1, 1.0 + 0.5 * std::sin(past.at(cell)(0))); },
        "adapted");
}

} // namespace

TEST(Isometry, ConstantIntegrandTwoDim) {
    const auto ens = simulate(brownian(2), TimeGrid::uniform(1.0, 32), 4000, 1);
    const Matrix phi = (Matrix(2, 2) << 1, 2, 0, -1).finished();
    const auto r = ito_isometry(IntegrandProcess::constant(phi, 32), ens);
    EXPECT_NEAR(r.rhs.value, phi.squaredNorm(), 1e-12);
    EXPECT_LE(std::abs(r.z), 3.0);
}

TEST(Isometry, AdaptedNoiseAndIntegrand) {
    const auto ens = simulate(adapted_scalar(), TimeGrid::uniform(1.0, 40), 4000, 2);
    const auto phi = IntegrandProcess::adapted(1, 1, 40, [&](std::size_t p, std::size_t i) {
        return Matrix::Constant(1, 1, std::cos(ens.value(p, i)(0)));
    });
    const auto r = ito_isometry(phi, ens);
    EXPECT_LE(std::abs(r.z), 3.0);
}

TEST(TraceTerm, IdentityAndZero) {
    EXPECT_DOUBLE_EQ(trace_term(Matrix::Identity(3, 3), Matrix::Identity(3, 3)), 3.0);
    EXPECT_EQ(trace_term(Matrix::Zero(3, 2), Matrix::Identity(3, 3)), 0.0);
}

TEST(TraceTerm, MatchesMatrixTrace) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix r = gaussian_matrix(rng, 4, 3);
        const Matrix a0 = gaussian_matrix(rng, 4, 4);
        const Matrix a = a0 + a0.transpose();
        const double direct = (r.transpose() * a * r).trace();
        EXPECT_NEAR(trace_term(r, a), direct, 1e-12 * (1.0 + std::abs(direct)));
        Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, 3, 3));
        const Matrix u = qr.householderQ();
        EXPECT_NEAR(trace_term(r * u, a), direct, 1e-10 * (1.0 + std::abs(direct)));
    }
}

TEST(TraceTerm, ShapeMismatchThrows) { EXPECT_THROW(trace_term(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), InvalidArgument); }

TEST(BdgPanel, ScalarP2WithinDoobBracket) {
    std::vector<BdgInstance> panel;
    panel.push_back({"W", brownian(1), TimeGrid::uniform(1.0, 64), IntegrandProcess::constant(Matrix::Ones(1, 1), 64)});
    panel.push_back({"tv", NoiseSpec::deterministic(1, 1, [](double t) { return Matrix::Constant(1, 1, 0.5 + t); }, "tv"),
                     TimeGrid::uniform(2.0, 64), IntegrandProcess::constant(Matrix::Constant(1, 1, 3.0), 64)});
    panel.push_back({"adapted", adapted_scalar(), TimeGrid::uniform(1.0, 64), IntegrandProcess::constant(Matrix::Ones(1, 1), 64)});
    const auto reports = bdg_ratio_panel(panel, {2.0}, {NormFlavor::euclidean()}, 4000, 4);
    ASSERT_EQ(reports.size(), 3u);
    for (const auto& r : reports) {
        EXPECT_FALSE(r.excluded);
        // Doob: E ||zeta_T||^2 <= E sup ||zeta||^2 <= 4 E ||zeta_T||^2, and rhs = E ||zeta_T||^2.
        const double se = r.lhs.stderr_ / r.rhs.value;
        EXPECT_GE(r.ratio + 3.0 * se, 1.0) << r.instance;
        EXPECT_LE(r.ratio - 3.0 * se, 4.0) << r.instance;
    }
    const auto brackets = fit_brackets(reports);
    ASSERT_EQ(brackets.size(), 1u);
    EXPECT_EQ(brackets[0].count, 3u);
    EXPECT_LE(brackets[0].width, 4.0);
    EXPECT_NEAR(brackets[0].c, std::sqrt(brackets[0].hi / brackets[0].lo), 1e-14);
}

TEST(BdgPanel, ZeroIntegrandExcluded) {
    std::vector<BdgInstance> panel{{"zero", brownian(2), TimeGrid::uniform(1.0, 8), IntegrandProcess::constant(Matrix::Zero(2, 2), 8)}};
    const auto reports = bdg_ratio_panel(panel, {1.0, 2.0}, {NormFlavor::euclidean()}, 50, 5);
    for (const auto& r : reports) {
        EXPECT_TRUE(r.excluded);
        EXPECT_FALSE(r.note.empty());
    }
    EXPECT_TRUE(fit_brackets(reports).empty());
}

TEST(BdgPanel, TimeRescalingLeavesRatioUnchanged) {
    // sqrt(2) W on [0, 1/2] has the law of W on [0, 1] at the grid points.
    std::vector<BdgInstance> panel;
    panel.push_back({"unit", brownian(2), TimeGrid::uniform(1.0, 32), IntegrandProcess::constant(Matrix::Identity(2, 2), 32)});
    panel.push_back({"fast", brownian(2, std::sqrt(2.0)), TimeGrid::uniform(0.5, 32),
                     IntegrandProcess::constant(Matrix::Identity(2, 2), 32)});
    for (double p : {1.0, 2.0, 4.0}) {
        const auto reports = bdg_ratio_panel(panel, {p}, {NormFlavor::euclidean(), NormFlavor::lp(4)}, 4000, 6, 20000);
        ASSERT_EQ(reports.size(), 4u);
        for (std::size_t f = 0; f < 2; ++f) {
            const auto& a = reports[f];
            const auto& b = reports[2 + f];
            auto rel_se = [](const BdgReport& r) {
                return r.ratio * std::hypot(r.lhs.stderr_ / r.lhs.value, r.rhs.stderr_ / r.rhs.value);
            };
            EXPECT_LE(std::abs(a.ratio - b.ratio), 3.0 * std::hypot(rel_se(a), rel_se(b))) << p << " " << a.flavor;
            if (f == 0) {
                EXPECT_NEAR(a.rhs.value, b.rhs.value, 1e-12 * a.rhs.value);
            }
        }
    }
}

TEST(BdgPanel, LpRejectsPathDependentInstances) {
    std::vector<BdgInstance> panel{{"adapted", adapted_scalar(), TimeGrid::uniform(1.0, 8), IntegrandProcess::constant(Matrix::Ones(1, 1), 8)}};
    EXPECT_THROW(bdg_ratio_panel(panel, {2.0}, {NormFlavor::lp(3)}, 20, 7), InvalidArgument);
}

TEST(ItoResidual, LinearIsExact) {
    const auto ens = simulate(adapted_scalar(), TimeGrid::uniform(1.0, 50), 200, 8);
    const auto phi = IntegrandProcess::adapted(1, 1, 50, [&](std::size_t p, std::size_t i) {
        return Matrix::Constant(1, 1, 1.0 + ens.value(p, i)(0) * ens.value(p, i)(0));
    });
    const Vector x_star = Vector::Constant(1, -1.5);
    const auto r = ito_residual(TestFunction::linear(x_star), Vector::Constant(1, 0.3), nullptr, nullptr, phi, ens);
    EXPECT_LE(r.max_abs, 1e-12);
}

TEST(ItoResidual, LinearWithDriftIsExact) {
    const auto grid = TimeGrid::uniform(1.0, 20);
    const auto ens = simulate(brownian(2), grid, 100, 9);
    std::vector<double> a(21);
    for (std::size_t j = 0; j <= 20; ++j) a[j] = grid[j] * grid[j];
    const IncreasingPath path(grid, a);
    const auto psi = IntegrandProcess::constant((Vector(2) << 1.0, -2.0).finished(), 20);
    const auto phi = IntegrandProcess::constant(Matrix::Identity(2, 2), 20);
    const auto r = ito_residual(TestFunction::linear((Vector(2) << 0.5, 2.0).finished()), Vector::Ones(2), &psi, &path, phi, ens);
    EXPECT_LE(r.max_abs, 1e-12);
}

TEST(ItoResidual, SquareOfBrownianMotion) {
    const auto ens = simulate(brownian(1), TimeGrid::uniform(1.0, 64), 10000, 10);
    const auto r = ito_residual(TestFunction::squared_norm(1), Vector::Zero(1), nullptr, nullptr,
                                IntegrandProcess::constant(Matrix::Ones(1, 1), 64), ens);
    EXPECT_LE(std::abs(r.mean_terminal.value), 3.0 * r.mean_terminal.stderr_);
}

TEST(ItoResidual, SquaredNormRecoversIsometry) {
    const auto ens = simulate(brownian(3), TimeGrid::uniform(1.0, 64), 10000, 11);
    const Matrix phi = (Matrix(2, 3) << 1, 0, 1, 0, 2, 0).finished();
    const auto r = ito_residual(TestFunction::squared_norm(2), Vector::Zero(2), nullptr, nullptr,
                                IntegrandProcess::constant(phi, 64), ens);
    EXPECT_LE(std::abs(r.mean_terminal.value), 3.0 * r.mean_terminal.stderr_);
}

TEST(ItoResidual, MaxResidualShrinksAlongLadder) {
    std::vector<double> dt, worst, mean_abs;
    for (std::size_t k : {16u, 64u, 256u}) {
        const auto ens = simulate(brownian(1), TimeGrid::uniform(1.0, k), 2000, 12);
        const auto r = ito_residual(TestFunction::squared_norm(1), Vector::Zero(1), nullptr, nullptr,
                                    IntegrandProcess::constant(Matrix::Ones(1, 1), k), ens);
        dt.push_back(1.0 / static_cast<double>(k));
        worst.push_back(r.max_abs);
        mean_abs.push_back(r.mean_abs);
    }
    EXPECT_GE(loglog_slope(dt, worst), 0.4);
    EXPECT_GE(loglog_slope(dt, mean_abs), 0.4);
}

TEST(ItoResidual, WrongHessianIsRejected) {
    auto tf = TestFunction::squared_norm(2);
    tf.d22 = [](double, const Vector&) { return Matrix(Matrix::Identity(2, 2)); };
    const auto ens = simulate(brownian(2), TimeGrid::uniform(1.0, 4), 5, 13);
    EXPECT_THROW(ito_residual(tf, Vector::Zero(2), nullptr, nullptr, IntegrandProcess::constant(Matrix::Identity(2, 2), 4), ens),
                 InvalidArgument);
}

TEST(ItoResidual, WrongTimeDerivativeIsRejected) {
    auto tf = TestFunction::linear(Vector::Ones(1));
    tf.f = [](double t, const Vector& x) { return t + x(0); };
    EXPECT_THROW(validate_derivatives(tf, 1, 0), InvalidArgument);
}
