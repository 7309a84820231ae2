#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cylmart/gamma_norms.hpp"
#include "cylmart/mart_sim.hpp"
#include "cylmart/report.hpp"
#include "cylmart/stoch_integral.hpp"

namespace cylmart {

/// Phi Q_M^{1/2} on one cell of one path.
inline Matrix scaled_integrand(const Matrix& phi, const Matrix& covariance) {
    return phi * detail::psd_root(normalized_density(covariance));
}

/// Both sides of E||zeta_T||^2 = E int ||Phi Q_M^{1/2}||_HS^2 d[[M]] and the paired z-score.
struct IsometryReport {
    Estimate lhs;
    Estimate rhs;
    double z = 0.0;
};

inline IsometryReport ito_isometry(const IntegrandProcess& phi, const MartEnsemble& ens) {
    const IntegralPaths zeta = integrate(phi, ens);
    std::vector<double> a(ens.n_paths()), b(ens.n_paths()), d(ens.n_paths());
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        a[p] = zeta.terminal(p).squaredNorm();
        const GridMeasure& qv = ens.bracket(p);
        double s = 0.0;
        for (std::size_t i = 0; i < ens.cells(); ++i)
            if (qv[i] > 0.0) s += scaled_integrand(phi.at(p, i), ens.covariance(p, i)).squaredNorm() * qv[i];
        b[p] = s;
        d[p] = a[p] - b[p];
    });
    IsometryReport r{mean_estimate(a), mean_estimate(b), 0.0};
    const Estimate diff = mean_estimate(d);
    r.z = diff.stderr_ > 0.0 ? diff.value / diff.stderr_ : 0.0;
    return r;
}

/// Sum_j hess(R e_j, R e_j) over the standard basis of the source space.
inline double trace_term(const Matrix& r, const Matrix& hess) {
    if (hess.rows() != hess.cols() || hess.rows() != r.rows()) throw InvalidArgument("trace_term shapes do not match");
    double s = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j) s += r.col(j).dot(hess * r.col(j));
    return s;
}

/// One panel instance: integrand, noise and grid; the ensemble is simulated per instance.
struct BdgInstance {
    std::string name;
    NoiseSpec spec;
    TimeGrid grid;
    IntegrandProcess phi;
};

/// lhs = E sup_t ||zeta_t||^p, rhs = E ||Phi Q_M^{1/2}||_gamma^p for one instance, p and flavor.
struct BdgReport {
    std::string instance;
    double p = 2.0;
    std::string flavor;
    std::size_t n_paths = 0;
    Estimate lhs;
    Estimate rhs;
    double ratio = 0.0;
    bool excluded = false;
    std::string note;
};

/// Recorded bracket [lo, hi] of the ratios at one (p, flavor); width = hi / lo = C^2.
struct BdgBracket {
    double p = 2.0;
    std::string flavor;
    double lo = 0.0;
    double hi = 0.0;
    double width = 0.0;
    double c = 0.0;
    std::size_t count = 0;
};

/// Simulates every instance with its own seed derived from `seed` and reports the ratio for
/// each p and flavor. The gamma side is exact in the Euclidean flavor and estimated with
/// `gamma_samples` draws otherwise (the l^p side needs a driver-independent instance).
inline std::vector<BdgReport> bdg_ratio_panel(const std::vector<BdgInstance>& instances, const std::vector<double>& ps,
                                              const std::vector<NormFlavor>& flavors, std::size_t n_paths,
                                              std::uint64_t seed, std::size_t gamma_samples = 20000) {
    std::vector<BdgReport> out;
    for (std::size_t n = 0; n < instances.size(); ++n) {
        const BdgInstance& inst = instances[n];
        const std::uint64_t inst_seed = substream(seed, n, 0xb06)();
        const MartEnsemble ens = simulate(inst.spec, inst.grid, n_paths, inst_seed);
        const IntegralPaths zeta = integrate(inst.phi, ens);
        for (const NormFlavor& flavor : flavors) {
            std::vector<double> sup(n_paths);
            IntegralPaths z = zeta;
            z.flavor = flavor;
            parallel_for(n_paths, [&](std::size_t p) { sup[p] = z.sup_norm(p); });

            std::vector<double> gam(ens.path_dependent() ? n_paths : 1);
            double gam_se = 0.0;
            if (flavor.hilbert()) {
                parallel_for(gam.size(), [&](std::size_t p) {
                    GammaKernel k{ens.bracket(p), {}, flavor};
                    for (std::size_t i = 0; i < ens.cells(); ++i) k.matrices.push_back(scaled_integrand(inst.phi.at(p, i), ens.covariance(p, i)));
                    gam[p] = gamma_norm_exact_hilbert(k);
                });
            } else {
                if (ens.path_dependent() || !inst.phi.is_deterministic())
                    throw InvalidArgument("l^p panel instances must be driver-independent");
                GammaKernel k{ens.bracket(0), {}, flavor};
                for (std::size_t i = 0; i < ens.cells(); ++i) k.matrices.push_back(scaled_integrand(inst.phi.at(0, i), ens.covariance(0, i)));
                const GammaEstimate e = gamma_norm_mc(k, gamma_samples, inst_seed ^ 0x9a33a);
                gam[0] = e.value;
                gam_se = e.stderr_;
            }

            for (double p : ps) {
                BdgReport r;
                r.instance = inst.name;
                r.p = p;
                r.flavor = flavor.name();
                r.n_paths = n_paths;
                std::vector<double> lhs(n_paths);
                for (std::size_t q = 0; q < n_paths; ++q) lhs[q] = std::pow(sup[q], p);
                r.lhs = mean_estimate(lhs);
                std::vector<double> rhs(gam.size());
                for (std::size_t q = 0; q < gam.size(); ++q) rhs[q] = std::pow(gam[q], p);
                r.rhs = rhs.size() > 1 ? mean_estimate(rhs) : Estimate{rhs[0], p * std::pow(gam[0], p - 1.0) * gam_se};
                if (!(r.rhs.value > 1e-300) || !(r.lhs.value > 0.0)) {
                    r.excluded = true;
                    r.note = "degenerate instance: vanishing integrand";
                } else {
                    r.ratio = r.lhs.value / r.rhs.value;
                }
                out.push_back(std::move(r));
            }
        }
    }
    return out;
}

/// Smallest bracket per (p, flavor) holding every non-excluded ratio.
inline std::vector<BdgBracket> fit_brackets(const std::vector<BdgReport>& reports) {
    std::map<std::pair<double, std::string>, BdgBracket> acc;
    for (const auto& r : reports) {
        if (r.excluded) continue;
        auto [it, fresh] = acc.try_emplace({r.p, r.flavor}, BdgBracket{r.p, r.flavor, r.ratio, r.ratio, 0, 0, 0});
        auto& b = it->second;
        b.lo = std::min(b.lo, r.ratio);
        b.hi = std::max(b.hi, r.ratio);
        ++b.count;
    }
    std::vector<BdgBracket> out;
    for (auto& [key, b] : acc) {
        b.width = b.hi / b.lo;
        b.c = std::sqrt(b.width);
        out.push_back(b);
    }
    return out;
}

/// Scalar test function with closed-form derivatives in time (d1), space (d2) and the
/// spatial Hessian (d22).
struct TestFunction {
    std::string name;
    std::function<double(double, const Vector&)> f;
    std::function<double(double, const Vector&)> d1;
    std::function<Vector(double, const Vector&)> d2;
    std::function<Matrix(double, const Vector&)> d22;

    static TestFunction linear(const Vector& x_star) {
        return {"linear", [x_star](double, const Vector& x) { return x_star.dot(x); },
                [](double, const Vector&) { return 0.0; }, [x_star](double, const Vector&) { return x_star; },
                [n = x_star.size()](double, const Vector&) { return Matrix(Matrix::Zero(n, n)); }};
    }
    static TestFunction squared_norm(Eigen::Index m) {
        return {"squared_norm", [](double, const Vector& x) { return x.squaredNorm(); },
                [](double, const Vector&) { return 0.0; }, [](double, const Vector& x) { return Vector(2.0 * x); },
                [m](double, const Vector&) { return Matrix(2.0 * Matrix::Identity(m, m)); }};
    }
};

/// Compares the supplied derivatives with central differences (step 1e-5, relative tolerance
/// 1e-4) at random points; throws InvalidArgument on disagreement.
inline void validate_derivatives(const TestFunction& tf, Eigen::Index m, std::uint64_t seed, double horizon = 1.0) {
    constexpr double h = 1e-5, tol = 1e-4;
    auto rng = substream(seed, 0, 0xd1ff);
    std::uniform_real_distribution<double> ut(0.0, horizon);
    auto close = [](double fd, double an) { return std::abs(fd - an) <= tol * std::max(1.0, std::abs(an)); };
    for (int trial = 0; trial < 8; ++trial) {
        const double t = ut(rng);
        const Vector x = gaussian_vector(rng, m);
        const double dt = (tf.f(t + h, x) - tf.f(t - h, x)) / (2 * h);
        if (!close(dt, tf.d1(t, x))) throw InvalidArgument(tf.name + ": time derivative disagrees with finite differences");
        const Vector g = tf.d2(t, x);
        const Matrix hs = tf.d22(t, x);
        for (Eigen::Index i = 0; i < m; ++i) {
            Vector e = Vector::Zero(m);
            e(i) = h;
            if (!close((tf.f(t, x + e) - tf.f(t, x - e)) / (2 * h), g(i)))
                throw InvalidArgument(tf.name + ": gradient disagrees with finite differences");
            const Vector col = (tf.d2(t, x + e) - tf.d2(t, x - e)) / (2 * h);
            for (Eigen::Index j = 0; j < m; ++j)
                if (!close(col(j), hs(j, i))) throw InvalidArgument(tf.name + ": Hessian disagrees with finite differences");
        }
    }
}

/// Pathwise residual of the Ito formula for f(t, zeta_t) with
/// zeta = xi + int psi dA + int Phi dM.
struct ItoResidual {
    std::vector<double> terminal;
    std::vector<double> sup_abs;
    Estimate mean_terminal;
    double mean_abs = 0.0;
    double max_abs = 0.0;
};

/// psi is an m x 1 integrand (may be empty, meaning 0) and `a` the increasing path it is
/// integrated against. The stochastic term is computed by integrate.
inline ItoResidual ito_residual(const TestFunction& tf, const Vector& xi, const IntegrandProcess* psi,
                                const IncreasingPath* a, const IntegrandProcess& phi, const MartEnsemble& ens,
                                std::uint64_t validation_seed = 1) {
    const Eigen::Index m = phi.rows();
    if (xi.size() != m) throw InvalidArgument("initial value has the wrong dimension");
    if ((psi == nullptr) != (a == nullptr)) throw InvalidArgument("psi and A go together");
    validate_derivatives(tf, m, validation_seed, ens.grid().horizon());
    const std::size_t k = ens.cells();
    const TimeGrid& grid = ens.grid();

    const IntegralPaths mart = integrate(phi, ens);
    std::vector<Matrix> zeta(ens.n_paths());
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        Matrix z = mart.paths[p];
        Vector drift = xi;
        z.col(0) += drift;
        for (std::size_t i = 0; i < k; ++i) {
            if (psi) drift += psi->at(p, i).col(0) * ((*a)[i + 1] - (*a)[i]);
            z.col(static_cast<Eigen::Index>(i + 1)) += drift;
        }
        zeta[p] = std::move(z);
    });

    const IntegrandProcess grad_phi = IntegrandProcess::adapted(
        1, phi.cols(), k, [&](std::size_t p, std::size_t i) {
            const Vector g = tf.d2(grid[i], zeta[p].col(static_cast<Eigen::Index>(i)));
            return Matrix(g.transpose() * phi.at(p, i));
        });
    const IntegralPaths stoch = integrate(grad_phi, ens);

    ItoResidual r;
    r.terminal.resize(ens.n_paths());
    r.sup_abs.resize(ens.n_paths());
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        const GridMeasure& qv = ens.bracket(p);
        const double f0 = tf.f(0.0, zeta[p].col(0));
        double acc = 0.0, worst = 0.0, res = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            const Vector x = zeta[p].col(c);
            const double t = grid[i];
            acc += tf.d1(t, x) * grid.width(i);
            if (psi) acc += tf.d2(t, x).dot(psi->at(p, i).col(0)) * ((*a)[i + 1] - (*a)[i]);
            if (qv[i] > 0.0) acc += 0.5 * trace_term(scaled_integrand(phi.at(p, i), ens.covariance(p, i)), tf.d22(t, x)) * qv[i];
            res = tf.f(grid[i + 1], zeta[p].col(c + 1)) - f0 - (acc + stoch.paths[p](0, c + 1));
            worst = std::max(worst, std::abs(res));
        }
        r.terminal[p] = res;
        r.sup_abs[p] = worst;
    });
    r.mean_terminal = mean_estimate(r.terminal);
    for (std::size_t p = 0; p < r.sup_abs.size(); ++p) {
        r.mean_abs += std::abs(r.terminal[p]) / static_cast<double>(r.terminal.size());
        r.max_abs = std::max(r.max_abs, r.sup_abs[p]);
    }
    return r;
}

} // namespace cylmart
