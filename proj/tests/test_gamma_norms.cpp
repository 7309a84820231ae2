#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cylmart/gamma_norms.hpp"

using namespace cylmart;

namespace {

GammaKernel random_kernel(std::mt19937_64& rng, std::size_t cells, Eigen::Index m, Eigen::Index d, NormFlavor flavor) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::vector<double> mass(cells);
    for (auto& x : mass) x = u(rng);
    GammaKernel k{GridMeasure(TimeGrid::uniform(1.0, cells), mass), {}, flavor};
    for (std::size_t i = 0; i < cells; ++i) k.matrices.push_back(gaussian_matrix(rng, m, d));
    return k;
}

double sigma3(const GammaEstimate& a, const GammaEstimate& b) { return 3.0 * std::hypot(a.stderr_, b.stderr_); }

Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index d) {
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, d, d));
    return qr.householderQ();
}

} // namespace

TEST(GammaExact, DiagonalThreeFour) {
    const Matrix phi = (Vector(2) << 3, 4).finished().asDiagonal();
    const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 4)), std::vector<Matrix>(4, phi)};
    EXPECT_NEAR(gamma_norm_exact_hilbert(k), 5.0, 1e-14);
}

TEST(GammaExact, ZeroKernel) {
    const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 3)), std::vector<Matrix>(3, Matrix::Zero(2, 2))};
    EXPECT_EQ(gamma_norm_exact_hilbert(k), 0.0);
}

TEST(GammaExact, RejectsNonHilbertFlavor) {
    const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 2)), std::vector<Matrix>(2, Matrix::Identity(2, 2)),
                        NormFlavor::lp(3)};
    EXPECT_THROW(gamma_norm_exact_hilbert(k), InvalidArgument);
}

TEST(GammaMc, MatchesExactWithinThreeSigma) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        const auto k = random_kernel(rng, 5, 3, 2, NormFlavor::euclidean());
        const auto e = gamma_norm_mc(k, 20000, 10 + trial);
        EXPECT_LE(std::abs(e.value - gamma_norm_exact_hilbert(k)), 3.0 * e.stderr_);
        EXPECT_GT(e.stderr_, 0.0);
    }
}

TEST(GammaMc, RankOneClosedForm) {
    const Vector u = (Vector(3) << 1, -2, 2).finished();
    const Vector v = (Vector(2) << 3, 4).finished();
    const GridMeasure mu(TimeGrid::uniform(1.0, 4), {0.5, 0.25, 0.0, 1.25});
    const GammaKernel k{mu, std::vector<Matrix>(4, u * v.transpose())};
    const double closed = u.norm() * v.norm() * std::sqrt(mu.total());
    EXPECT_NEAR(gamma_norm_exact_hilbert(k), closed, 1e-12);
    const auto e = gamma_norm_mc(k, 20000, 3);
    EXPECT_LE(std::abs(e.value - closed), 3.0 * e.stderr_);
}

TEST(GammaMc, L1IdentityMatchesGaussianMoments) {
    // E (sum |g_i|)^2 = d + d (d - 1) 2 / pi.
    for (Eigen::Index d : {1, 3, 6}) {
        const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 1)), {Matrix::Identity(d, d)}, NormFlavor::lp(1)};
        const double dd = static_cast<double>(d);
        const double exact = std::sqrt(dd + dd * (dd - 1.0) * 2.0 / std::numbers::pi);
        const auto e = gamma_norm_mc(k, 40000, 4);
        EXPECT_LE(std::abs(e.value - exact), 3.0 * e.stderr_) << d;
    }
}

TEST(GammaMc, L1IdentityMatchesDirectSimulation) {
    const Eigen::Index d = 4;
    std::mt19937_64 rng(77);
    std::vector<double> sq(40000);
    for (auto& s : sq) s = std::pow(gaussian_vector(rng, d).cwiseAbs().sum(), 2);
    const Estimate direct = mean_estimate(sq);
    const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 1)), {Matrix::Identity(d, d)}, NormFlavor::lp(1)};
    const auto e = gamma_norm_mc(k, 40000, 5);
    const double dv = std::sqrt(direct.value), dse = direct.stderr_ / (2.0 * dv);
    EXPECT_LE(std::abs(e.value - dv), 3.0 * std::hypot(e.stderr_, dse));
}

TEST(GammaMc, ZeroMassIsExactlyZero) {
    const GammaKernel k{GridMeasure(TimeGrid::uniform(1.0, 3), {0.0, 0.0, 0.0}), std::vector<Matrix>(3, Matrix::Ones(2, 2)),
                        NormFlavor::lp(3)};
    const auto e = gamma_norm_mc(k, 10, 1);
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.stderr_, 0.0);
}

TEST(GammaMc, DeterministicGivenSeed) {
    std::mt19937_64 rng(2);
    const auto k = random_kernel(rng, 4, 3, 3, NormFlavor::lp(3));
    const auto a = gamma_norm_mc(k, 5000, 9), b = gamma_norm_mc(k, 5000, 9);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(GammaMc, RejectsTooFewSamples) {
    const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 1)), {Matrix::Identity(2, 2)}};
    EXPECT_THROW(gamma_norm_mc(k, 1, 0), InvalidArgument);
}

TEST(GammaMc, BasisInvariance) {
    std::mt19937_64 rng(3);
    for (double p : {1.0, 3.0, 4.0}) {
        const auto k = random_kernel(rng, 4, 3, 3, NormFlavor::lp(p));
        auto rotated = k;
        for (auto& m : rotated.matrices) m = m * random_orthogonal(rng, 3);
        const auto a = gamma_norm_mc(k, 20000, 20), b = gamma_norm_mc(rotated, 20000, 21);
        EXPECT_LE(std::abs(a.value - b.value), sigma3(a, b)) << p;
    }
}

TEST(GammaNorm, Homogeneity) {
    std::mt19937_64 rng(4);
    const auto k = random_kernel(rng, 3, 2, 2, NormFlavor::euclidean());
    auto scaled = k;
    for (auto& m : scaled.matrices) m *= -2.5;
    EXPECT_NEAR(gamma_norm_exact_hilbert(scaled), 2.5 * gamma_norm_exact_hilbert(k), 1e-12);
    auto kp = k;
    kp.flavor = NormFlavor::lp(4);
    scaled.flavor = NormFlavor::lp(4);
    const auto a = gamma_norm_mc(kp, 20000, 30), b = gamma_norm_mc(scaled, 20000, 31);
    EXPECT_LE(std::abs(b.value - 2.5 * a.value), 3.0 * std::hypot(b.stderr_, 2.5 * a.stderr_));
    // Common random numbers make MC homogeneity exact up to rounding.
    EXPECT_NEAR(gamma_norm_mc(scaled, 2000, 7).value, 2.5 * gamma_norm_mc(kp, 2000, 7).value, 1e-12);
}

TEST(GammaNorm, OperatorNormBelowGammaNorm) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto k = random_kernel(rng, 1 + trial % 5, 1 + trial % 4, 1 + trial % 3, NormFlavor::euclidean());
        EXPECT_LE(kernel_operator_norm(k), gamma_norm_exact_hilbert(k) * (1 + 1e-12));
    }
    // Rank one: the two norms agree.
    const Vector u = (Vector(2) << 1, 1).finished();
    const GammaKernel r1{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 2)), std::vector<Matrix>(2, u * u.transpose())};
    EXPECT_NEAR(kernel_operator_norm(r1), gamma_norm_exact_hilbert(r1), 1e-12);
}

TEST(Ideal, IdentityFactorsGiveEquality) {
    std::mt19937_64 rng(6);
    const auto k = random_kernel(rng, 3, 3, 2, NormFlavor::euclidean());
    const auto r = ideal_check(Matrix::Identity(3, 3), k, Matrix::Identity(2, 2), 0, 1);
    EXPECT_NEAR(r.lhs.value, r.rhs.value, 1e-12);
    EXPECT_TRUE(r.pass);
}

TEST(Ideal, ZeroLeftFactor) {
    std::mt19937_64 rng(7);
    const auto k = random_kernel(rng, 3, 3, 2, NormFlavor::lp(3));
    const auto r = ideal_check(Matrix::Zero(3, 3), k, Matrix::Identity(2, 2), 2000, 1);
    EXPECT_EQ(r.lhs.value, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(Ideal, RandomContractionsNeverViolate) {
    std::mt19937_64 rng(8);
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const NormFlavor flavor = trial % 2 ? NormFlavor::euclidean() : NormFlavor::lp(1 + trial % 4);
        const auto k = random_kernel(rng, 3, 3, 2, flavor);
        Matrix t = gaussian_matrix(rng, 3, 3), s = gaussian_matrix(rng, 2, 2);
        t /= flavor_operator_norm(t, flavor);
        s /= flavor_operator_norm(s, NormFlavor::euclidean());
        if (!ideal_check(t, k, s, 2000, 100 + trial).pass) ++failures;
    }
    EXPECT_EQ(failures, 0);
}

TEST(Ideal, ShapeMismatchThrows) {
    const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 1)), {Matrix::Identity(2, 3)}};
    EXPECT_THROW(ideal_check(Matrix::Identity(3, 3), k, Matrix::Identity(3, 3), 10, 0), InvalidArgument);
}

TEST(FlavorOperatorNorm, ExactCasesAndBound) {
    const Matrix t = (Matrix(2, 2) << 1, 2, -3, 4).finished();
    EXPECT_DOUBLE_EQ(flavor_operator_norm(t, NormFlavor::lp(1)), 6.0);
    std::mt19937_64 rng(9);
    for (double p : {1.5, 3.0, 4.0}) {
        const double bound = flavor_operator_norm(t, NormFlavor::lp(p));
        for (int i = 0; i < 2000; ++i) {
            const Vector x = gaussian_vector(rng, 2);
            EXPECT_LE(NormFlavor::lp(p)(t * x), bound * NormFlavor::lp(p)(x) * (1 + 1e-12));
        }
    }
}

TEST(PrimitiveBound, ZeroPsi) {
    const GridMeasure mu = GridMeasure::lebesgue(TimeGrid::uniform(1.0, 4));
    const auto r = primitive_gamma_bound_check(std::vector<Vector>(4, Vector::Zero(2)), mu, NormFlavor::euclidean(), 0, 1);
    EXPECT_EQ(r.lhs.value, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(PrimitiveBound, TerminalMassIsEquality) {
    const double horizon = 2.0, mass = 0.7;
    const GridMeasure mu(TimeGrid::uniform(horizon, 4), {0.0, 0.0, 0.0, mass});
    const auto r = primitive_gamma_bound_check(std::vector<Vector>(4, Vector::Ones(1)), mu, NormFlavor::euclidean(), 0, 1);
    EXPECT_NEAR(r.lhs.value, horizon * std::sqrt(mass), 1e-12);
    EXPECT_NEAR(r.rhs, std::sqrt(horizon) * std::sqrt(horizon * mass), 1e-12);
    EXPECT_TRUE(r.pass);
}

TEST(PrimitiveBound, RandomInstancesHold) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t cells = 2 + trial % 7;
        std::vector<double> mass(cells);
        for (auto& x : mass) x = u(rng);
        const GridMeasure mu(TimeGrid::uniform(1.5, cells), mass);
        std::vector<Vector> psi(cells);
        for (auto& v : psi) v = gaussian_vector(rng, 3);
        const NormFlavor flavor = trial % 3 == 0 ? NormFlavor::euclidean() : NormFlavor::lp(trial % 3 == 1 ? 1.0 : 4.0);
        const auto r = primitive_gamma_bound_check(psi, mu, flavor, 4000, 200 + trial);
        EXPECT_TRUE(r.pass) << trial << " lhs " << r.lhs.value << " rhs " << r.rhs;
    }
}

TEST(DualBallSup, EuclideanIsSpectral) {
    const Matrix b = (Vector(2) << 2, 5).finished().asDiagonal();
    EXPECT_NEAR(detail::dual_ball_quadratic_sup(b, NormFlavor::euclidean(), 0), 5.0, 1e-12);
}

TEST(DualBallSup, LInfinityBallOfRankOne) {
    // p = 1: the dual ball is the l^inf cube and sup (v.x)^2 = ||v||_1^2.
    const Vector v = (Vector(3) << 1, -2, 0.5).finished();
    EXPECT_NEAR(detail::dual_ball_quadratic_sup(v * v.transpose(), NormFlavor::lp(1), 3), 3.5 * 3.5, 1e-12);
}

TEST(Fubini, HilbertRatioIsOne) {
    std::mt19937_64 rng(11);
    const auto k = random_kernel(rng, 4, 5, 2, NormFlavor::euclidean());
    const auto r = gamma_fubini_check(k, {0.2, 0.3, 0.1, 0.25, 0.15}, 2.0, 20000, 4);
    EXPECT_LE(std::abs(r.ratio - 1.0), 3.0 * r.ratio_stderr);
}

TEST(Fubini, SinglePointRatioIsOne) {
    std::mt19937_64 rng(12);
    for (double p : {1.0, 3.0, 4.0}) {
        const auto k = random_kernel(rng, 3, 1, 2, NormFlavor::euclidean());
        const auto r = gamma_fubini_check(k, {0.6}, p, 20000, 5);
        EXPECT_LE(std::abs(r.ratio - 1.0), 3.0 * r.ratio_stderr) << p;
    }
}

TEST(Fubini, P4RatioStaysInBracket) {
    // For p >= 2 Jensen and Gaussian moments give 1 <= ratio <= (E|g|^p)^{1/p}.
    std::mt19937_64 rng(13);
    const double upper = gaussian_moment_root(4.0);
    double lo = 1e9, hi = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto k = random_kernel(rng, 3, 4, 2, NormFlavor::euclidean());
        const auto r = gamma_fubini_check(k, {1.0, 0.5, 2.0, 0.25}, 4.0, 20000, 40 + trial);
        EXPECT_GE(r.ratio + 3.0 * r.ratio_stderr, 1.0);
        EXPECT_LE(r.ratio - 3.0 * r.ratio_stderr, upper);
        lo = std::min(lo, r.ratio);
        hi = std::max(hi, r.ratio);
    }
    EXPECT_LT(hi - lo, 0.2);
}

TEST(Fubini, RejectsBadWeights) {
    const GammaKernel k{GridMeasure::lebesgue(TimeGrid::uniform(1.0, 1)), {Matrix::Identity(2, 2)}};
    EXPECT_THROW(gamma_fubini_check(k, {1.0}, 2.0, 10, 0), InvalidArgument);
    EXPECT_THROW(gamma_fubini_check(k, {1.0, 0.0}, 2.0, 10, 0), InvalidArgument);
}

TEST(GaussianMomentRoot, KnownValues) {
    EXPECT_NEAR(gaussian_moment_root(2.0), 1.0, 1e-14);
    EXPECT_NEAR(gaussian_moment_root(4.0), std::pow(3.0, 0.25), 1e-14);
    EXPECT_NEAR(gaussian_moment_root(1.0), std::sqrt(2.0 / std::numbers::pi), 1e-14);
}

TEST(TypeCotype, PanelHolds) {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 12; ++trial) {
        const double p = trial % 3 == 0 ? 1.0 : (trial % 3 == 1 ? 3.0 : 4.0);
        const auto k = random_kernel(rng, 3, 3, 2, NormFlavor::lp(p));
        const auto r = type_cotype_check(k, 10000, 60 + trial);
        EXPECT_TRUE(r.pass) << p << " slack " << r.slack;
    }
}

TEST(TypeCotype, HilbertIsEquality) {
    std::mt19937_64 rng(15);
    const auto k = random_kernel(rng, 4, 3, 2, NormFlavor::euclidean());
    const auto r = type_cotype_check(k, 0, 1);
    EXPECT_NEAR(r.kernel_norm.value, r.pointwise_norm.value, 1e-12);
    EXPECT_TRUE(r.pass);
}
