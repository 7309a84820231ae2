#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "cylmart/grid_measures.hpp"
#include "cylmart/parallel.hpp"
#include "cylmart/rng.hpp"
#include "cylmart/stoch_integral.hpp"

namespace cylmart {

/// Kernel t -> Phi(t) (m x d, constant on each cell) representing an operator
/// L^2(J, mu; R^d) -> X with X = R^m under the given norm.
struct GammaKernel {
    GridMeasure measure;
    std::vector<Matrix> matrices;
    NormFlavor flavor = NormFlavor::euclidean();

    void validate() const {
        if (matrices.size() != measure.cells()) throw InvalidArgument("kernel needs one matrix per cell");
        for (const auto& m : matrices)
            if (m.rows() != matrices.front().rows() || m.cols() != matrices.front().cols())
                throw InvalidArgument("kernel shape varies across cells");
    }
    Eigen::Index rows() const { return matrices.front().rows(); }
    Eigen::Index cols() const { return matrices.front().cols(); }
};

/// Monte-Carlo estimate with its sampling metadata.
struct GammaEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const GammaEstimate& e) {
    j = nlohmann::json{{"value", e.value}, {"stderr", e.stderr_}, {"n_samples", e.n_samples}, {"seed", e.seed}};
}

/// Weighted Hilbert-Schmidt norm (sum_i ||Phi_i||_HS^2 mu_i)^{1/2}.
inline double gamma_norm_exact_hilbert(const GammaKernel& k) {
    k.validate();
    if (!k.flavor.hilbert()) throw InvalidArgument("exact gamma norm needs the Euclidean flavor");
    double s = 0.0;
    for (std::size_t i = 0; i < k.matrices.size(); ++i) s += k.matrices[i].squaredNorm() * k.measure[i];
    return std::sqrt(s);
}

namespace detail {

inline constexpr std::uint64_t kGammaSalt = 0x6a77;

/// (mean of squares)^{1/2} with the delta-method standard error.
inline GammaEstimate root_mean_square(const std::vector<double>& sq, std::uint64_t seed) {
    const Estimate e = mean_estimate(sq);
    GammaEstimate out{std::sqrt(std::max(0.0, e.value)), 0.0, sq.size(), seed};
    if (out.value > 0.0) out.stderr_ = e.stderr_ / (2.0 * out.value);
    return out;
}

} // namespace detail

/// (E ||sum_n g_n R h_n||^2)^{1/2} by sampling Gaussian loadings on the basis
/// h_{i,c} = 1_{cell i} e_c / sqrt(mu_i), for which R h_{i,c} = sqrt(mu_i) Phi_i e_c.
inline GammaEstimate gamma_norm_mc(const GammaKernel& k, std::size_t n_samples, std::uint64_t seed) {
    k.validate();
    if (n_samples < 2) throw InvalidArgument("gamma_norm_mc needs at least two samples");
    if (k.measure.total() == 0.0) return {0.0, 0.0, n_samples, seed};
    std::vector<Matrix> scaled(k.matrices.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = std::sqrt(k.measure[i]) * k.matrices[i];
    std::vector<double> sq(n_samples);
    parallel_for(n_samples, [&](std::size_t r) {
        auto rng = substream(seed, r, detail::kGammaSalt);
        const Matrix g = gaussian_matrix(rng, k.cols(), static_cast<Eigen::Index>(scaled.size()));
        Vector x = Vector::Zero(k.rows());
        for (std::size_t i = 0; i < scaled.size(); ++i)
            if (k.measure[i] > 0.0) x.noalias() += scaled[i] * g.col(static_cast<Eigen::Index>(i));
        const double n = k.flavor(x);
        sq[r] = n * n;
    });
    return detail::root_mean_square(sq, seed);
}

/// Exact value in the Euclidean flavor, Monte-Carlo otherwise.
inline GammaEstimate gamma_norm(const GammaKernel& k, std::size_t n_samples, std::uint64_t seed) {
    if (k.flavor.hilbert()) return {gamma_norm_exact_hilbert(k), 0.0, 0, seed};
    return gamma_norm_mc(k, n_samples, seed);
}

/// Operator norm of the kernel operator L^2(J, mu; R^d) -> R^m with the Euclidean target norm.
inline double kernel_operator_norm(const GammaKernel& k) {
    k.validate();
    Matrix rr = Matrix::Zero(k.rows(), k.rows());
    for (std::size_t i = 0; i < k.matrices.size(); ++i) rr += k.measure[i] * k.matrices[i] * k.matrices[i].transpose();
    return std::sqrt(std::max(0.0, detail::sym_norm(rr)));
}

/// Operator norm of T on R^m with the flavor's norm. Exact for p in {1, 2}; the Riesz-Thorin
/// interpolation bound otherwise.
inline double flavor_operator_norm(const Matrix& t, const NormFlavor& flavor) {
    if (flavor.hilbert()) {
        Eigen::JacobiSVD<Matrix> svd(t);
        return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    }
    const double n1 = t.cwiseAbs().colwise().sum().maxCoeff();
    if (flavor.p == 1.0) return n1;
    const double ninf = t.cwiseAbs().rowwise().sum().maxCoeff();
    return std::pow(n1, 1.0 / flavor.p) * std::pow(ninf, 1.0 - 1.0 / flavor.p);
}

/// Both sides of ||T R S||_gamma <= ||T|| ||R||_gamma ||S|| with their standard errors.
struct IdealReport {
    GammaEstimate lhs;
    GammaEstimate rhs;
    double slack = 0.0;
    bool pass = false;
};

inline IdealReport ideal_check(const Matrix& t, const GammaKernel& k, const Matrix& s, std::size_t n_samples,
                               std::uint64_t seed) {
    k.validate();
    if (t.cols() != k.rows() || s.rows() != k.cols()) throw InvalidArgument("ideal_check factors have the wrong shape");
    GammaKernel tk{k.measure, {}, k.flavor};
    for (const auto& m : k.matrices) tk.matrices.push_back(t * m * s);
    const double s_norm = flavor_operator_norm(s, NormFlavor::euclidean());
    const double t_norm = flavor_operator_norm(t, k.flavor);
    IdealReport r;
    r.lhs = gamma_norm(tk, n_samples, seed);
    const GammaEstimate base = gamma_norm(k, n_samples, seed + 1);
    r.rhs = {t_norm * base.value * s_norm, t_norm * base.stderr_ * s_norm, base.n_samples, base.seed};
    const double sigma = std::hypot(r.lhs.stderr_, r.rhs.stderr_);
    r.slack = r.rhs.value + 3.0 * sigma - r.lhs.value;
    r.pass = r.slack >= -1e-12 * std::max(1.0, r.rhs.value);
    return r;
}

/// Both sides of the bound on the gamma norm of t -> int_0^t psi against mu.
struct PrimitiveBoundReport {
    GammaEstimate lhs;
    double rhs = 0.0;
    double dual_sup = 0.0;
    double first_moment = 0.0;
    bool pass = false;
};

namespace detail {

/// sup of x^T B x over the unit ball of l^q, q = p / (p - 1), by linearization ascent from a
/// panel of starting points. Exact for p = 2.
inline double dual_ball_quadratic_sup(const Matrix& b, const NormFlavor& flavor, std::uint64_t seed) {
    if (flavor.hilbert()) return std::max(0.0, sym_norm(b));
    const double p = flavor.p;
    const Eigen::Index d = b.rows();
    auto dual_norm = [p](const Vector& x) {
        if (p == 1.0) return x.cwiseAbs().maxCoeff();
        const double q = p / (p - 1.0);
        double s = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) s += std::pow(std::abs(x(i)), q);
        return std::pow(s, 1.0 / q);
    };
    // Maximizer of <y, x> over the l^q unit ball.
    auto support = [p](const Vector& y) {
        Vector x(y.size());
        if (p == 1.0) {
            for (Eigen::Index i = 0; i < y.size(); ++i) x(i) = y(i) >= 0.0 ? 1.0 : -1.0;
            return x;
        }
        double np = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) np += std::pow(std::abs(y(i)), p);
        np = std::pow(np, 1.0 / p);
        for (Eigen::Index i = 0; i < y.size(); ++i)
            x(i) = np > 0.0 ? std::copysign(std::pow(std::abs(y(i)) / np, p - 1.0), y(i)) : 0.0;
        return x;
    };
    const Matrix panel = sphere_panel(d, std::max<Eigen::Index>(4 * d, 32), seed);
    double best = 0.0;
    for (Eigen::Index j = 0; j < panel.cols(); ++j) {
        Vector x = panel.col(j) / dual_norm(panel.col(j));
        double val = x.dot(b * x);
        for (int it = 0; it < 50; ++it) {
            const Vector y = b * x;
            if (y.squaredNorm() == 0.0) break;
            const Vector nx = support(y);
            const double nval = nx.dot(b * nx);
            if (nval <= val * (1.0 + 1e-14)) break;
            x = nx;
            val = nval;
        }
        best = std::max(best, val);
    }
    return best;
}

} // namespace detail

/// psi is constant on the cells of mu's grid (one R^m vector per cell); the kernel on cell i is
/// int_0^{t_{i+1}} psi. rhs = sup_{||x*|| <= 1} ||<psi, x*>||_{L^2(0,T)} (int t dmu)^{1/2}.
inline PrimitiveBoundReport primitive_gamma_bound_check(const std::vector<Vector>& psi, const GridMeasure& mu,
                                                        NormFlavor flavor, std::size_t n_samples,
                                                        std::uint64_t seed) {
    if (psi.size() != mu.cells() || psi.empty()) throw InvalidArgument("psi needs one value per cell");
    const TimeGrid& grid = mu.grid();
    const Eigen::Index m = psi.front().size();
    GammaKernel k{mu, {}, flavor};
    Vector acc = Vector::Zero(m);
    Matrix b = Matrix::Zero(m, m);
    double moment = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) {
        acc += psi[i] * grid.width(i);
        k.matrices.push_back(acc);
        b += psi[i] * psi[i].transpose() * grid.width(i);
        moment += grid[i + 1] * mu[i];
    }
    PrimitiveBoundReport r;
    r.lhs = gamma_norm(k, n_samples, seed);
    r.dual_sup = std::sqrt(detail::dual_ball_quadratic_sup(b, flavor, seed));
    r.first_moment = moment;
    r.rhs = r.dual_sup * std::sqrt(moment);
    r.pass = r.lhs.value <= r.rhs + 3.0 * r.lhs.stderr_ + 1e-12 * std::max(1.0, r.rhs);
    return r;
}

/// Both sides of the gamma-Fubini comparison for X = L^p over a finite weighted index set.
struct FubiniReport {
    GammaEstimate lhs;
    double rhs = 0.0;
    double ratio = 0.0;
    double ratio_stderr = 0.0;
};

/// Row s of every kernel matrix is the section at index s. lhs is the gamma norm into
/// L^p(S, w); rhs is the L^p(S, w) norm of s -> ||section_s||_{L^2(mu; R^d)}.
inline FubiniReport gamma_fubini_check(const GammaKernel& k, const std::vector<double>& weights, double p,
                                       std::size_t n_samples, std::uint64_t seed) {
    k.validate();
    if (weights.size() != static_cast<std::size_t>(k.rows())) throw InvalidArgument("one weight per index required");
    GammaKernel scaled{k.measure, {}, NormFlavor::lp(p)};
    Vector w(k.rows());
    for (Eigen::Index s = 0; s < k.rows(); ++s) {
        if (!(weights[s] > 0.0)) throw InvalidArgument("index weights must be positive");
        w(s) = std::pow(weights[s], 1.0 / p);
    }
    for (const auto& m : k.matrices) scaled.matrices.push_back(w.asDiagonal() * m);
    FubiniReport r;
    r.lhs = gamma_norm_mc(scaled, n_samples, seed);
    double acc = 0.0;
    for (Eigen::Index s = 0; s < k.rows(); ++s) {
        double sec = 0.0;
        for (std::size_t i = 0; i < k.matrices.size(); ++i) sec += k.matrices[i].row(s).squaredNorm() * k.measure[i];
        acc += weights[s] * std::pow(sec, p / 2.0);
    }
    r.rhs = std::pow(acc, 1.0 / p);
    if (r.rhs > 0.0) {
        r.ratio = r.lhs.value / r.rhs;
        r.ratio_stderr = r.lhs.stderr_ / r.rhs;
    }
    return r;
}

/// (E|g|^p)^{1/p} for a standard Gaussian g.
inline double gaussian_moment_root(double p) {
    return std::pow(std::pow(2.0, p / 2.0) * std::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi), 1.0 / p);
}

/// One-sided comparison of ||R||_gamma with (sum_i mu_i ||Phi_i||_gamma^2)^{1/2} for l^p targets:
/// type 2 (p >= 2) bounds the former by c times the latter, cotype 2 (p <= 2) the reverse,
/// with c the Gaussian moment constant.
struct TypeCotypeReport {
    GammaEstimate kernel_norm;
    GammaEstimate pointwise_norm;
    double constant = 1.0;
    double slack = 0.0;
    bool pass = false;
};

inline TypeCotypeReport type_cotype_check(const GammaKernel& k, std::size_t n_samples, std::uint64_t seed) {
    k.validate();
    const double p = k.flavor.p;
    TypeCotypeReport r;
    r.kernel_norm = gamma_norm(k, n_samples, seed);
    double sq = 0.0, var = 0.0;
    for (std::size_t i = 0; i < k.matrices.size(); ++i) {
        if (k.measure[i] == 0.0) continue;
        GammaKernel cell{GridMeasure(TimeGrid::uniform(1.0, 1), {1.0}), {k.matrices[i]}, k.flavor};
        const GammaEstimate e = gamma_norm(cell, n_samples, seed + 1 + i);
        sq += k.measure[i] * e.value * e.value;
        var += std::pow(2.0 * k.measure[i] * e.value * e.stderr_, 2);
    }
    const double pv = std::sqrt(sq);
    r.pointwise_norm = {pv, pv > 0.0 ? std::sqrt(var) / (2.0 * pv) : 0.0, n_samples, seed + 1};
    const double g = gaussian_moment_root(p);
    const double sigma3 = 3.0 * std::hypot(r.kernel_norm.stderr_, g * r.pointwise_norm.stderr_);
    if (p >= 2.0) {
        r.constant = g;
        r.slack = g * r.pointwise_norm.value + sigma3 - r.kernel_norm.value;
    } else {
        r.constant = 1.0 / g;
        r.slack = r.kernel_norm.value / g + sigma3 - r.pointwise_norm.value;
    }
    r.pass = r.slack >= 0.0;
    return r;
}

} // namespace cylmart
