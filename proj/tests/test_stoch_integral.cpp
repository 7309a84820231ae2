#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cylmart/mart_sim.hpp"
#include "cylmart/report.hpp"
#include "cylmart/stoch_integral.hpp"

using namespace cylmart;

namespace {

NoiseSpec brownian(Eigen::Index d) { return NoiseSpec::constant(Matrix::Identity(d, d), "W"); }

NoiseSpec adapted_noise() {
    return NoiseSpec::adapted(
        2, 2,
        [](double t, std::size_t cell, const DriverPast& past) {
            Matrix s(2, 2);
            s << 1.0 + 0.3 * std::sin(past.at(cell)(1)), 0.2, -0.1 * t, 0.8;
            return s;
        },
        "adapted");
}

double rel_diff(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, std::max(a.norm(), b.norm())); }

} // namespace

TEST(NormFlavor, Values) {
    const Vector v = (Vector(2) << 3.0, -4.0).finished();
    EXPECT_DOUBLE_EQ(NormFlavor::euclidean()(v), 5.0);
    EXPECT_NEAR(NormFlavor::lp(4)(v), std::pow(81.0 + 256.0, 0.25), 1e-14);
    EXPECT_EQ(NormFlavor::lp(4).name(), "l4");
}

TEST(ElementaryIntegral, SingleTermIsEvaluation) {
    const auto ens = simulate(brownian(2), TimeGrid::uniform(1.0, 6), 5, 1);
    const Vector h = (Vector(2) << 0.6, 0.8).finished(), x = (Vector(3) << 1, 2, 3).finished();
    const ElementaryIntegrand phi{3, {ElementaryTerm{0, 6, nullptr, {h}, {x}}}};
    const auto z = elementary_integral(phi, ens);
    for (std::size_t p = 0; p < 5; ++p)
        for (std::size_t j = 0; j <= 6; ++j)
            EXPECT_LE((z.paths[p].col(static_cast<Eigen::Index>(j)) - ens.eval(p, j, h) * x).norm(), 1e-14);
}

TEST(ElementaryIntegral, ZeroIntegrand) {
    const auto ens = simulate(brownian(2), TimeGrid::uniform(1.0, 4), 3, 1);
    const auto z = elementary_integral(ElementaryIntegrand{2, {}}, ens);
    for (const auto& p : z.paths) EXPECT_EQ(p.norm(), 0.0);
}

TEST(ElementaryIntegral, TwoCellsSwappedVectorsTelescope) {
    const auto ens = simulate(brownian(2), TimeGrid::uniform(1.0, 2), 4, 2);
    const Vector e1 = Vector::Unit(2, 0), e2 = Vector::Unit(2, 1);
    const ElementaryIntegrand phi{2, {ElementaryTerm{0, 1, nullptr, {e1}, {e2}}, ElementaryTerm{1, 2, nullptr, {e2}, {e1}}}};
    const auto z = elementary_integral(phi, ens);
    for (std::size_t p = 0; p < 4; ++p) {
        const Vector m1 = ens.value(p, 1), m2 = ens.value(p, 2);
        const Vector expected = m1(0) * e2 + (m2(1) - m1(1)) * e1;
        EXPECT_LE((z.paths[p].col(2) - expected).norm(), 1e-14);
    }
}

TEST(ElementaryIntegral, RejectsNonOrthogonalPanel) {
    const auto ens = simulate(brownian(2), TimeGrid::uniform(1.0, 2), 1, 2);
    const Vector a = Vector::Unit(2, 0), b = Vector::Ones(2);
    EXPECT_THROW(elementary_integral(ElementaryIntegrand{1, {ElementaryTerm{0, 1, nullptr, {a, b}, {Vector::Ones(1), Vector::Ones(1)}}}}, ens),
                 InvalidArgument);
}

TEST(Integrate, IdentityRecoversDriver) {
    const auto ens = simulate(brownian(3), TimeGrid::uniform(1.0, 5), 4, 3);
    const auto z = integrate(IntegrandProcess::constant(Matrix::Identity(3, 3), 5), ens);
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(z.paths[p], ens.values(p));
}

TEST(Integrate, ScalarIsometryVariance) {
    const auto grid = TimeGrid::uniform(1.0, 10);
    const auto spec = NoiseSpec::deterministic(1, 1, [](double t) { return Matrix::Constant(1, 1, 1.0 + t); }, "s");
    const auto ens = simulate(spec, grid, 10000, 4);
    std::vector<Matrix> phi(10);
    double expected = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        phi[i] = Matrix::Constant(1, 1, std::cos(grid[i]));
        expected += std::pow(std::cos(grid[i]) * (1.0 + grid[i]), 2) * grid.width(i);
    }
    const auto z = integrate(IntegrandProcess::deterministic(phi), ens);
    std::vector<double> sq(10000);
    for (std::size_t p = 0; p < sq.size(); ++p) sq[p] = z.terminal(p).squaredNorm();
    const Estimate e = mean_estimate(sq);
    EXPECT_LE(std::abs(e.value - expected), 3.0 * e.stderr_);
}

TEST(Integrate, AgreesWithElementaryIntegral) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 8), 50, 5);
    const ElementaryIntegrand phi{
        2,
        {ElementaryTerm{1, 5, [](std::size_t p) { return p % 2 == 0; }, {Vector::Unit(2, 0), Vector::Unit(2, 1)},
                        {Vector::Ones(2), (Vector(2) << 1, -1).finished()}},
         ElementaryTerm{3, 8, nullptr, {(Vector(2) << 1, 1).finished()}, {(Vector(2) << 0.5, 2).finished()}}}};
    const auto a = integrate(phi.as_process(8, 2), ens);
    const auto b = elementary_integral(phi, ens);
    for (std::size_t p = 0; p < 50; ++p) EXPECT_LE(rel_diff(a.paths[p], b.paths[p]), 1e-12);
}

TEST(Integrate, FromValuesAgrees) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 8), 20, 5);
    std::mt19937_64 rng(1);
    const auto phi = IntegrandProcess::constant(gaussian_matrix(rng, 3, 2), 8);
    const auto a = integrate(phi, ens), b = integrate_from_values(phi, ens);
    for (std::size_t p = 0; p < 20; ++p) EXPECT_LE(rel_diff(a.paths[p], b.paths[p]), 1e-12);
}

TEST(Integrate, Linearity) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 12), 40, 6);
    std::mt19937_64 rng(2);
    std::vector<Matrix> p1(12), p2(12);
    for (std::size_t i = 0; i < 12; ++i) {
        p1[i] = gaussian_matrix(rng, 3, 2);
        p2[i] = gaussian_matrix(rng, 3, 2);
    }
    const auto f = IntegrandProcess::deterministic(p1), g = IntegrandProcess::deterministic(p2);
    const double a = 1.5, b = -0.25;
    const auto lhs = integrate(f.combined(a, g, b), ens);
    const auto zf = integrate(f, ens), zg = integrate(g, ens);
    for (std::size_t p = 0; p < 40; ++p) EXPECT_LE(rel_diff(lhs.paths[p], a * zf.paths[p] + b * zg.paths[p]), 1e-12);
}

TEST(BracketOfIntegral, FixedCovectorRecoversDirectionBracket) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 10), 10, 7);
    const Vector x = (Vector(2) << 0.3, -1.2).finished();
    const auto br = bracket_of_integral(IntegrandProcess::constant(x.transpose(), 10), ens, 3);
    const auto f = br.cumulative();
    for (std::size_t j = 0; j <= 10; ++j) EXPECT_NEAR(f[j], ens.direction_bracket(3, j, x), 1e-12);
}

TEST(BracketOfIntegral, KernelDirectionVanishes) {
    Matrix s = Matrix::Zero(2, 1);
    s(0, 0) = 1.0;
    const auto ens = simulate(NoiseSpec::constant(s, "rank1"), TimeGrid::uniform(1.0, 4), 2, 1);
    const Matrix row = (Matrix(1, 2) << 0.0, 1.0).finished();
    EXPECT_EQ(bracket_of_integral(IntegrandProcess::constant(row, 4), ens, 0).total(), 0.0);
}

TEST(BracketOfIntegral, MatchesRealizedVariation) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 8), 10000, 8);
    const Matrix row = (Matrix(1, 2) << 0.7, 0.4).finished();
    const auto phi = IntegrandProcess::constant(row, 8);
    const auto z = integrate(phi, ens);
    double exact = 0.0, realized = 0.0;
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        exact += bracket_of_integral(phi, ens, p).total();
        for (Eigen::Index i = 0; i < 8; ++i) realized += std::pow(z.paths[p](0, i + 1) - z.paths[p](0, i), 2);
    }
    EXPECT_LT(std::abs(realized / exact - 1.0), 0.05);
}

TEST(BracketOfIntegral, TriangleInequality) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 8), 5, 9);
    const auto f = IntegrandProcess::constant((Matrix(1, 2) << 1.0, 0.5).finished(), 8);
    const auto g = IntegrandProcess::constant((Matrix(1, 2) << -0.2, 2.0).finished(), 8);
    for (std::size_t p = 0; p < 5; ++p) {
        const auto a = bracket_of_integral(f, ens, p).cumulative(), b = bracket_of_integral(g, ens, p).cumulative();
        const auto s = bracket_of_integral(f.combined(1.0, g, 1.0), ens, p).cumulative();
        for (std::size_t j = 0; j <= 8; ++j) EXPECT_LE(std::sqrt(s[j]), std::sqrt(a[j]) + std::sqrt(b[j]) + 1e-12);
    }
}

TEST(CovariationOperator, SelfIsAm) {
    const auto spec = NoiseSpec::deterministic(2, 2, [](double t) { return Matrix(Matrix::Identity(2, 2) * (1 + t)); }, "a");
    const auto grid = TimeGrid::uniform(1.0, 5);
    const auto c = covariation_operator(spec, spec, grid), a = am_operator(spec, grid);
    for (std::size_t j = 0; j <= 5; ++j) EXPECT_LE((c.matrices[j] - a.matrices[j]).norm(), 1e-14);
}

TEST(CovariationOperator, ZeroAndOrthogonalRanges) {
    const auto grid = TimeGrid::uniform(1.0, 3);
    Matrix d1 = Matrix::Zero(2, 2), d2 = Matrix::Zero(2, 2);
    d1(0, 0) = 1.0;
    d2(1, 1) = 1.0;
    const auto c = covariation_operator(NoiseSpec::constant(d1, "1"), NoiseSpec::constant(d2, "2"), grid);
    EXPECT_EQ(c.matrices.back().norm(), 0.0);
    const auto z = covariation_operator(NoiseSpec::constant(d1, "1"), NoiseSpec::constant(Matrix::Zero(2, 2), "0"), grid);
    EXPECT_EQ(z.matrices.back().norm(), 0.0);
}

TEST(CovariationOperator, PolarizationAndCauchySchwarz) {
    std::mt19937_64 rng(4);
    const Matrix s1 = gaussian_matrix(rng, 3, 3), s2 = gaussian_matrix(rng, 3, 3);
    const auto grid = TimeGrid::uniform(1.0, 6);
    auto spec = [](const Matrix& s) {
        return NoiseSpec::deterministic(3, 3, [s](double t) { return Matrix(s * (1.0 + t * t)); }, "r");
    };
    const auto c = covariation_operator(spec(s1), spec(s2), grid);
    const auto plus = am_operator(spec(s1 + s2), grid), minus = am_operator(spec(s1 - s2), grid);
    const auto a1 = am_operator(spec(s1), grid), a2 = am_operator(spec(s2), grid);
    for (std::size_t j = 0; j <= 6; ++j) {
        const Matrix sym = 0.5 * (c.matrices[j] + c.matrices[j].transpose());
        EXPECT_LE((sym - 0.25 * (plus.matrices[j] - minus.matrices[j])).norm(), 1e-12 * (1.0 + plus.matrices[j].norm()));
    }
    for (int trial = 0; trial < 50; ++trial) {
        const Vector x = gaussian_vector(rng, 3);
        for (std::size_t s = 0; s < 6; ++s) {
            const double lhs = std::abs(x.dot((c.matrices[6] - c.matrices[s]) * x));
            const double r1 = x.dot((a1.matrices[6] - a1.matrices[s]) * x), r2 = x.dot((a2.matrices[6] - a2.matrices[s]) * x);
            EXPECT_LE(lhs, std::sqrt(r1 * r2) * (1 + 1e-12) + 1e-14);
        }
    }
}

TEST(KunitaWatanabe, EqualityCase) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 8), 100, 3);
    const auto f = IntegrandProcess::constant((Matrix(1, 2) << 0.4, 0.9).finished(), 8);
    const auto r = kunita_watanabe_check(f, f, ens, ens);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.worst_slack, 0.0, 1e-12);
}

TEST(KunitaWatanabe, IndependentDriversGiveZeroLhs) {
    Matrix a = Matrix::Zero(2, 2), b = Matrix::Zero(2, 2);
    a(0, 0) = 1.0;
    b(1, 1) = 1.0;
    const auto grid = TimeGrid::uniform(1.0, 4);
    const auto m1 = simulate(NoiseSpec::constant(a, "a"), grid, 10, 1), m2 = simulate(NoiseSpec::constant(b, "b"), grid, 10, 1);
    const auto f = IntegrandProcess::constant(Matrix::Ones(1, 2), 4);
    const auto r = kunita_watanabe_check(f, f, m1, m2);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.worst_slack, 1.0, 1e-15);
}

TEST(KunitaWatanabe, RandomAdaptedInstances) {
    std::mt19937_64 rng(10);
    const auto joint = joint_independent(adapted_noise(), NoiseSpec::constant(gaussian_matrix(rng, 2, 2), "c"));
    const auto grid = TimeGrid::uniform(1.0, 10);
    const auto m1 = simulate(joint.first, grid, 300, 4), m2 = simulate(joint.sum, grid, 300, 4);
    const auto f = IntegrandProcess::adapted(1, 2, 10, [&](std::size_t p, std::size_t i) {
        return Matrix((Matrix(1, 2) << std::sin(m1.value(p, i)(0)), 1.0).finished());
    });
    const auto g = IntegrandProcess::constant(gaussian_matrix(rng, 1, 2), 10);
    EXPECT_TRUE(kunita_watanabe_check(f, g, m1, m2).pass);
    EXPECT_THROW(kunita_watanabe_check(f, g, m1, simulate(joint.sum, grid, 300, 5)), InvalidArgument);
}

TEST(StopIntegral, ThreeFormsAgree) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 20), 1000, 11);
    std::mt19937_64 rng(3);
    const auto phi = IntegrandProcess::constant(gaussian_matrix(rng, 2, 2), 20);
    std::vector<std::size_t> stop(1000);
    for (std::size_t p = 0; p < stop.size(); ++p) stop[p] = qv_crossing(ens.bracket(p), 0.6);
    EXPECT_TRUE(stop_integral(phi, ens, stop).identical);
    const auto full = stop_integral(phi, ens, std::vector<std::size_t>(1000, 20));
    EXPECT_TRUE(full.identical);
    EXPECT_EQ(full.stopped.paths[0], integrate(phi, ens).paths[0]);
    const auto none = stop_integral(phi, ens, std::vector<std::size_t>(1000, 0));
    EXPECT_TRUE(none.identical);
    EXPECT_EQ(none.stopped.paths[7].norm(), 0.0);
}

TEST(LocalProperty, VanishesOnEvent) {
    const auto ens = simulate(adapted_noise(), TimeGrid::uniform(1.0, 10), 200, 12);
    auto event = [](std::size_t p) { return p % 3 == 0; };
    const auto phi = IntegrandProcess::adapted(2, 2, 10, [&](std::size_t p, std::size_t) {
        return event(p) ? Matrix(Matrix::Zero(2, 2)) : Matrix(Matrix::Identity(2, 2));
    });
    EXPECT_TRUE(local_property_check(phi, ens, event).pass);
    EXPECT_TRUE(local_property_check(IntegrandProcess::constant(Matrix::Zero(1, 2), 10), ens, [](std::size_t) { return true; }).pass);
    std::vector<std::size_t> tau(200);
    for (std::size_t p = 0; p < 200; ++p) tau[p] = exit_index(ens, p, Vector::Unit(2, 0), 0.8);
    const auto after = IntegrandProcess::adapted(1, 2, 10, [&](std::size_t p, std::size_t i) {
        return i >= tau[p] ? Matrix(Matrix::Ones(1, 2)) : Matrix(Matrix::Zero(1, 2));
    });
    EXPECT_TRUE(local_property_check(after, ens, [&](std::size_t p) { return tau[p] >= 10; }).pass);
}
