#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cylmart/mart_sim.hpp"
#include "cylmart/report.hpp"
#include "cylmart/stoch_integral.hpp"

namespace cylmart {

/// Paths of an R^m-valued process on the grid, one m x (K+1) matrix per path.
using ProcessPaths = std::vector<Matrix>;

/// Drift nonlinearity F(t, x) with declared Lipschitz and linear-growth constants.
struct Drift {
    std::string name = "zero";
    std::function<Vector(double, const Vector&)> fn;
    double lipschitz = 0.0;
    double growth = 0.0;
};

/// Noise coefficient G(t, x), an m x d_cyl matrix, with declared Hilbert-Schmidt Lipschitz constant.
struct Diffusion {
    std::string name = "zero";
    std::function<Matrix(double, const Vector&)> fn;
    double lipschitz = 0.0;
};

/// Drift registry: zero, constant (c), linear (a x), affine (c + a x), sine (a sin x).
inline Drift make_drift(const std::string& name, Eigen::Index m, double a, double c) {
    Drift d;
    d.name = name;
    if (name == "zero") {
        d.fn = [m](double, const Vector&) { return Vector(Vector::Zero(m)); };
    } else if (name == "constant") {
        d.fn = [m, c](double, const Vector&) { return Vector(Vector::Constant(m, c)); };
        d.growth = std::abs(c) * std::sqrt(static_cast<double>(m));
    } else if (name == "linear") {
        d.fn = [a](double, const Vector& x) { return Vector(a * x); };
        d.lipschitz = d.growth = std::abs(a);
    } else if (name == "affine") {
        d.fn = [a, c](double, const Vector& x) { return Vector((a * x).array() + c); };
        d.lipschitz = std::abs(a);
        d.growth = std::max(std::abs(a), std::abs(c) * std::sqrt(static_cast<double>(m)));
    } else if (name == "sine") {
        d.fn = [a](double, const Vector& x) { return Vector(a * x.array().sin()); };
        d.lipschitz = d.growth = std::abs(a);
    } else {
        throw InvalidArgument("unknown drift '" + name + "'");
    }
    return d;
}

/// Diffusion registry: zero, constant (g times the leading identity block), linear (g x in
/// the first column), diagonal (g diag(x), m = d_cyl), sine (g diag(sin x), m = d_cyl).
inline Diffusion make_diffusion(const std::string& name, Eigen::Index m, Eigen::Index d_cyl, double g) {
    Diffusion d;
    d.name = name;
    if ((name == "diagonal" || name == "sine") && m != d_cyl) throw InvalidArgument(name + " diffusion needs m = d_cyl");
    if (name == "zero") {
        d.fn = [m, d_cyl](double, const Vector&) { return Matrix(Matrix::Zero(m, d_cyl)); };
    } else if (name == "constant") {
        d.fn = [m, d_cyl, g](double, const Vector&) { return Matrix(g * Matrix::Identity(m, d_cyl)); };
    } else if (name == "linear") {
        d.fn = [m, d_cyl, g](double, const Vector& x) {
            Matrix out = Matrix::Zero(m, d_cyl);
            out.col(0) = g * x;
            return out;
        };
        d.lipschitz = std::abs(g);
    } else if (name == "diagonal") {
        d.fn = [g](double, const Vector& x) { return Matrix((g * x).asDiagonal()); };
        d.lipschitz = std::abs(g);
    } else if (name == "sine") {
        d.fn = [g](double, const Vector& x) { return Matrix((g * x.array().sin()).matrix().asDiagonal()); };
        d.lipschitz = std::abs(g);
    } else {
        throw InvalidArgument("unknown diffusion '" + name + "'");
    }
    return d;
}

/// Contraction semigroup S(t) = exp(tA) of a symmetric negative semidefinite generator.
class Semigroup {
public:
    explicit Semigroup(const Matrix& a) {
        const SymOperator sym(a);
        zero_ = (a.array() == 0.0).all();
        Eigen::SelfAdjointEigenSolver<Matrix> es(sym.matrix());
        const double norm = detail::sym_norm(sym.matrix());
        if (es.eigenvalues().maxCoeff() > 1e-12 * std::max(1.0, norm)) throw InvalidArgument("generator has a positive eigenvalue");
        basis_ = es.eigenvectors();
        spectrum_ = es.eigenvalues().cwiseMin(0.0);
    }

    bool is_zero() const noexcept { return zero_; }
    Eigen::Index dim() const noexcept { return spectrum_.size(); }

    Matrix at(double t) const {
        if (zero_) return Matrix::Identity(dim(), dim());
        const Vector e = (t * spectrum_).array().exp();
        return basis_ * e.asDiagonal() * basis_.transpose();
    }
    Vector apply(double t, const Vector& x) const { return zero_ ? x : Vector(at(t) * x); }

private:
    bool zero_ = true;
    Matrix basis_;
    Vector spectrum_;
};

/// e^{tA} x.
inline Vector semigroup_apply(const Matrix& a, double t, const Vector& x) { return Semigroup(a).apply(t, x); }

/// du = (A u + F(t, u)) dt + G(t, u) dM on [0, T] with F_0-measurable initial value u0(path).
struct SEEProblem {
    Matrix a;
    Drift drift;
    Diffusion diffusion;
    std::function<Vector(std::size_t path)> u0;
    Eigen::Index m = 1;

    /// Checks the generator and the declared constants on `pairs` random point pairs.
    void validate(std::size_t d_cyl, std::uint64_t seed, std::size_t pairs = 1000) const {
        Semigroup s(a);
        if (s.dim() != m) throw InvalidArgument("generator dimension differs from m");
        auto rng = substream(seed, 0, 0x11b);
        std::uniform_real_distribution<double> ut(0.0, 1.0);
        constexpr double slack = 1e-9;
        for (std::size_t k = 0; k < pairs; ++k) {
            const double t = ut(rng);
            const double scale = std::exp(3.0 * (ut(rng) - 0.5));
            const Vector x = scale * gaussian_vector(rng, m), y = scale * gaussian_vector(rng, m);
            const double dxy = (x - y).norm();
            const Vector fx = drift.fn(t, x);
            if (fx.size() != m) throw InvalidArgument("drift returns the wrong dimension");
            if ((fx - drift.fn(t, y)).norm() > drift.lipschitz * dxy + slack * (1.0 + dxy))
                throw InvalidArgument("drift violates its declared Lipschitz constant");
            if (fx.norm() > drift.growth * (1.0 + x.norm()) + slack)
                throw InvalidArgument("drift violates its declared growth constant");
            const Matrix gx = diffusion.fn(t, x);
            if (gx.rows() != m || gx.cols() != static_cast<Eigen::Index>(d_cyl))
                throw InvalidArgument("diffusion returns the wrong shape");
            if ((gx - diffusion.fn(t, y)).norm() > diffusion.lipschitz * dxy + slack * (1.0 + dxy))
                throw InvalidArgument("diffusion violates its declared Lipschitz constant");
        }
    }
};

namespace detail {

inline void check_paths(const ProcessPaths& u, const MartEnsemble& ens, Eigen::Index m) {
    if (u.size() != ens.n_paths()) throw InvalidArgument("one path per ensemble path required");
    for (const auto& x : u)
        if (x.rows() != m || x.cols() != static_cast<Eigen::Index>(ens.cells() + 1))
            throw InvalidArgument("path has the wrong shape");
}

inline std::vector<Matrix> cell_semigroups(const Semigroup& s, const TimeGrid& grid) {
    std::vector<Matrix> out(grid.cells());
    std::map<double, Matrix> cache;
    for (std::size_t i = 0; i < grid.cells(); ++i) {
        auto [it, fresh] = cache.try_emplace(grid.width(i));
        if (fresh) it->second = s.at(grid.width(i));
        out[i] = it->second;
    }
    return out;
}

} // namespace detail

/// S * F(., u)(t_j) = sum_{i<j} S(t_j - t_i) F(t_i, u(t_i)) dt_i.
inline ProcessPaths det_convolution(const SEEProblem& prob, const ProcessPaths& u, const MartEnsemble& ens) {
    detail::check_paths(u, ens, prob.m);
    const Semigroup s(prob.a);
    const auto step = detail::cell_semigroups(s, ens.grid());
    ProcessPaths out(u.size());
    parallel_for(u.size(), [&](std::size_t p) {
        Matrix y = Matrix::Zero(prob.m, u[p].cols());
        for (Eigen::Index i = 0; i + 1 < y.cols(); ++i) {
            const auto c = static_cast<std::size_t>(i);
            const Vector v = y.col(i) + prob.drift.fn(ens.grid()[c], u[p].col(i)) * ens.grid().width(c);
            y.col(i + 1) = s.is_zero() ? v : Vector(step[c] * v);
        }
        out[p] = std::move(y);
    });
    return out;
}

/// S <> G(., u)(t_j) = sum_{i<j} S(t_j - t_i) G(t_i, u(t_i)) sigma dW_i; delegates to
/// integrate when A = 0.
inline ProcessPaths stoch_convolution(const SEEProblem& prob, const ProcessPaths& u, const MartEnsemble& ens) {
    detail::check_paths(u, ens, prob.m);
    const Semigroup s(prob.a);
    if (s.is_zero()) {
        const auto g = IntegrandProcess::adapted(prob.m, static_cast<Eigen::Index>(ens.spec().d_cyl), ens.cells(),
                                                 [&](std::size_t p, std::size_t i) {
                                                     return prob.diffusion.fn(ens.grid()[i], u[p].col(static_cast<Eigen::Index>(i)));
                                                 });
        return integrate(g, ens).paths;
    }
    const auto step = detail::cell_semigroups(s, ens.grid());
    ProcessPaths out(u.size());
    parallel_for(u.size(), [&](std::size_t p) {
        Matrix y = Matrix::Zero(prob.m, u[p].cols());
        const Matrix& dm = ens.increments(p);
        for (Eigen::Index i = 0; i + 1 < y.cols(); ++i) {
            const auto c = static_cast<std::size_t>(i);
            const Vector v = y.col(i) + prob.diffusion.fn(ens.grid()[c], u[p].col(i)) * dm.col(i);
            y.col(i + 1) = step[c] * v;
        }
        out[p] = std::move(y);
    });
    return out;
}

/// V^p norm on grid points [first, last]: (E ||u||_{L^2}^p)^{1/p} + (E ||u||_{L^2([[M]])}^p)^{1/p}
/// with left-point cell values.
inline double vp_norm(const ProcessPaths& u, const MartEnsemble& ens, std::size_t first, std::size_t last, double p) {
    if (first > last || last > ens.cells()) throw InvalidArgument("vp_norm: bad index range");
    if (u.size() != ens.n_paths()) throw InvalidArgument("one path per ensemble path required");
    double time_part = 0.0, qv_part = 0.0;
    for (std::size_t q = 0; q < u.size(); ++q) {
        const GridMeasure& qv = ens.bracket(q);
        double a = 0.0, b = 0.0;
        for (std::size_t i = first; i < last; ++i) {
            const double n2 = u[q].col(static_cast<Eigen::Index>(i)).squaredNorm();
            a += n2 * ens.grid().width(i);
            b += n2 * qv[i];
        }
        time_part += std::pow(a, p / 2.0);
        qv_part += std::pow(b, p / 2.0);
    }
    const double n = static_cast<double>(u.size());
    return std::pow(time_part / n, 1.0 / p) + std::pow(qv_part / n, 1.0 / p);
}

/// vp_norm over the time interval [a, b] rounded outward to grid points.
inline double vp_norm(const ProcessPaths& u, const MartEnsemble& ens, double a, double b, double p) {
    const auto pts = ens.grid().points();
    const auto first = static_cast<std::size_t>(std::upper_bound(pts.begin(), pts.end(), a) - pts.begin()) - 1;
    const auto last = static_cast<std::size_t>(std::lower_bound(pts.begin(), pts.end(), b) - pts.begin());
    return vp_norm(u, ens, first, std::min(last, ens.cells()), p);
}

/// rho_{n,k}: first grid index inside dyadic block k where the [[M]]-increment since the
/// block start exceeds T / 2^n, or `never`.
inline constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

inline std::vector<std::size_t> rho_stopping_times(const GridMeasure& qv, unsigned n) {
    const TimeGrid& grid = qv.grid();
    const double horizon = grid.horizon();
    const std::size_t blocks = std::size_t{1} << n;
    const double threshold = horizon / static_cast<double>(blocks);
    const IncreasingPath f = qv.cumulative();
    const auto pts = grid.points();
    std::vector<std::size_t> out(blocks, kNever);
    for (std::size_t k = 0; k < blocks; ++k) {
        const double b0 = horizon * static_cast<double>(k) / static_cast<double>(blocks);
        const double b1 = horizon * static_cast<double>(k + 1) / static_cast<double>(blocks);
        const auto j0 = static_cast<std::size_t>(std::lower_bound(pts.begin(), pts.end(), b0 - 1e-12 * horizon) - pts.begin());
        for (std::size_t j = j0; j < pts.size() && pts[j] <= b1 + 1e-12 * horizon; ++j) {
            if (f[j] - f[j0] > threshold) {
                out[k] = j;
                break;
            }
        }
    }
    return out;
}

/// Per-block convergence history and schedule of a Picard solve.
struct PicardDiagnostics {
    unsigned depth = 0;
    std::vector<std::size_t> block_edges;
    std::vector<std::vector<double>> distances;
    std::vector<std::vector<double>> contraction;
    double predicted_contraction = 0.0;
    double max_block_qv = 0.0;
    std::size_t localized_blocks = 0;
    std::size_t iterations = 0;
    bool converged = false;
    std::string message;
};

struct PicardResult {
    ProcessPaths u;
    PicardDiagnostics diagnostics;
};

struct PicardOptions {
    double p = 2.0;
    double tol = 1e-10;
    std::size_t max_iter = 200;
    /// Required bound on (L_F + L_G) max(block^{1/2}, block-[[M]]^{1/2}).
    double contraction_target = 0.5;
    /// Start each block from 0 instead of S(. - t_b) u(t_b).
    bool zero_start = false;
};

namespace detail {

/// Mild map restricted to grid points [b, e] with fixed value v_p at t_b.
inline void mild_block(const SEEProblem& prob, const MartEnsemble& ens, const std::vector<Matrix>& step,
                       bool zero_a, std::size_t b, std::size_t e, const ProcessPaths& phi, ProcessPaths& out) {
    parallel_for(phi.size(), [&](std::size_t p) {
        Matrix& y = out[p];
        const Matrix& dm = ens.increments(p);
        for (std::size_t i = b; i < e; ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            const Vector x = phi[p].col(c);
            const double t = ens.grid()[i];
            Vector v = y.col(c) + prob.drift.fn(t, x) * ens.grid().width(i) + prob.diffusion.fn(t, x) * dm.col(c);
            y.col(c + 1) = zero_a ? v : Vector(step[i] * v);
        }
    });
}

inline ProcessPaths difference(const ProcessPaths& a, const ProcessPaths& b) {
    ProcessPaths d(a.size());
    for (std::size_t p = 0; p < a.size(); ++p) d[p] = a[p] - b[p];
    return d;
}

} // namespace detail

/// Full mild map L_T(phi) = S(.) u0 + S * F(., phi) + S <> G(., phi) on [0, T].
inline ProcessPaths mild_map(const SEEProblem& prob, const MartEnsemble& ens, const ProcessPaths& phi) {
    detail::check_paths(phi, ens, prob.m);
    const Semigroup s(prob.a);
    const auto step = detail::cell_semigroups(s, ens.grid());
    ProcessPaths out(phi.size());
    for (std::size_t p = 0; p < phi.size(); ++p) {
        out[p] = Matrix::Zero(prob.m, phi[p].cols());
        out[p].col(0) = prob.u0(p);
    }
    detail::mild_block(prob, ens, step, s.is_zero(), 0, ens.cells(), phi, out);
    return out;
}

/// Picard iteration blockwise over a dyadic schedule: the depth is the smallest n with
/// (L_F + L_G) max((T/2^n)^{1/2}, (max block [[M]]-mass)^{1/2}) <= target, capped so blocks keep
/// at least one cell. Each block iterates until the V^p distance of successive iterates on the
/// block drops below tol.
inline PicardResult picard_solve(const SEEProblem& prob, const MartEnsemble& ens, const PicardOptions& opt = {}) {
    prob.validate(ens.spec().d_cyl, ens.seed(), 200);
    const std::size_t k = ens.cells();
    const Semigroup s(prob.a);
    const auto step = detail::cell_semigroups(s, ens.grid());
    const double lip = prob.drift.lipschitz + prob.diffusion.lipschitz;
    const double horizon = ens.grid().horizon();

    PicardResult res;
    PicardDiagnostics& diag = res.diagnostics;
    unsigned max_depth = 0;
    while ((std::size_t{2} << max_depth) <= k) ++max_depth;
    for (unsigned n = 0;; ++n) {
        const auto edges = detail::dyadic_blocks(k, n);
        double mass = 0.0;
        for (std::size_t p = 0; p < (ens.path_dependent() ? ens.n_paths() : 1); ++p)
            for (std::size_t b = 0; b + 1 < edges.size(); ++b) mass = std::max(mass, ens.bracket(p).mass(edges[b], edges[b + 1]));
        const double predicted = lip * std::max(std::sqrt(horizon / static_cast<double>(std::size_t{1} << n)), std::sqrt(mass));
        if (predicted <= opt.contraction_target || n == max_depth) {
            diag.depth = n;
            diag.block_edges = edges;
            diag.max_block_qv = mass;
            diag.predicted_contraction = predicted;
            break;
        }
    }
    for (std::size_t p = 0; p < (ens.path_dependent() ? ens.n_paths() : 1); ++p)
        for (std::size_t r : rho_stopping_times(ens.bracket(p), diag.depth))
            if (r != kNever) ++diag.localized_blocks;

    ProcessPaths u(ens.n_paths());
    for (std::size_t p = 0; p < u.size(); ++p) {
        u[p] = Matrix::Zero(prob.m, static_cast<Eigen::Index>(k + 1));
        u[p].col(0) = prob.u0(p);
    }
    diag.converged = true;
    for (std::size_t b = 0; b + 1 < diag.block_edges.size(); ++b) {
        const std::size_t e0 = diag.block_edges[b], e1 = diag.block_edges[b + 1];
        ProcessPaths phi = u;
        for (std::size_t p = 0; p < u.size(); ++p)
            for (std::size_t j = e0 + 1; j <= e1; ++j) {
                const auto c = static_cast<Eigen::Index>(j);
                phi[p].col(c) = opt.zero_start ? Vector(Vector::Zero(prob.m))
                                               : (s.is_zero() ? Vector(phi[p].col(c - 1)) : Vector(step[j - 1] * phi[p].col(c - 1)));
            }
        std::vector<double> dist, ratio;
        bool done = false;
        for (std::size_t it = 0; it < opt.max_iter; ++it) {
            ProcessPaths next = phi;
            detail::mild_block(prob, ens, step, s.is_zero(), e0, e1, phi, next);
            const double d = vp_norm(detail::difference(next, phi), ens, e0, e1 + (e1 < k ? 1 : 0), opt.p);
            if (!dist.empty() && dist.back() > 0.0) ratio.push_back(d / dist.back());
            dist.push_back(d);
            phi = std::move(next);
            ++diag.iterations;
            if (d < opt.tol) {
                done = true;
                break;
            }
        }
        diag.distances.push_back(dist);
        diag.contraction.push_back(ratio);
        u = std::move(phi);
        if (!done) {
            diag.converged = false;
            std::ostringstream msg;
            const double c_hat = ratio.empty() ? 0.0 : *std::max_element(ratio.end() - std::min<std::ptrdiff_t>(5, ratio.size()), ratio.end());
            msg << "block " << b << " did not reach tol " << opt.tol << " in " << opt.max_iter
                << " iterations; measured contraction " << c_hat << "; halve the block length (schedule depth "
                << diag.depth + 1 << ")";
            diag.message = msg.str();
            break;
        }
    }
    res.u = std::move(u);
    return res;
}

/// sup over grid points of ||u - L_T(u)|| per path.
struct ResidualStats {
    std::vector<double> per_path;
    double mean = 0.0;
    double max = 0.0;
};

inline ResidualStats mild_residual(const ProcessPaths& u, const SEEProblem& prob, const MartEnsemble& ens) {
    const ProcessPaths l = mild_map(prob, ens, u);
    ResidualStats r;
    r.per_path.resize(u.size());
    for (std::size_t p = 0; p < u.size(); ++p) {
        double w = 0.0;
        for (Eigen::Index j = 0; j < u[p].cols(); ++j) w = std::max(w, (u[p].col(j) - l[p].col(j)).norm());
        r.per_path[p] = w;
        r.mean += w / static_cast<double>(u.size());
        r.max = std::max(r.max, w);
    }
    return r;
}

/// Largest ratio ||L(phi1) - L(phi2)||_{V^p} / ||phi1 - phi2||_{V^p} over a fixed panel of
/// difference shapes on the whole ensemble horizon (taken as one block).
inline double measure_contraction(const SEEProblem& prob, const MartEnsemble& ens, double p = 2.0) {
    const std::size_t k = ens.cells();
    const Eigen::Index m = prob.m;
    std::vector<Vector> shapes{Vector::Unit(m, 0), Vector::Ones(m) / std::sqrt(static_cast<double>(m))};
    double best = 0.0;
    for (int ramp = 0; ramp < 2; ++ramp) {
        for (const Vector& v : shapes) {
            ProcessPaths a(ens.n_paths()), b(ens.n_paths());
            for (std::size_t q = 0; q < a.size(); ++q) {
                a[q] = Matrix::Zero(m, static_cast<Eigen::Index>(k + 1));
                b[q] = a[q];
                for (std::size_t j = 0; j <= k; ++j)
                    b[q].col(static_cast<Eigen::Index>(j)) = ramp ? Vector(v * (1.0 + ens.grid()[j] / ens.grid().horizon())) : v;
            }
            const ProcessPaths la = mild_map(prob, ens, a), lb = mild_map(prob, ens, b);
            const double num = vp_norm(detail::difference(lb, la), ens, std::size_t{0}, k, p);
            const double den = vp_norm(detail::difference(b, a), ens, std::size_t{0}, k, p);
            if (den > 0.0) best = std::max(best, num / den);
        }
    }
    return best;
}

/// Sup gap over grid points [0, stop[p]] between two solutions, over paths.
inline double stopped_gap(const ProcessPaths& u, const ProcessPaths& v, const std::vector<std::size_t>& stop) {
    double g = 0.0;
    for (std::size_t p = 0; p < u.size(); ++p)
        for (std::size_t j = 0; j <= std::min<std::size_t>(stop[p], static_cast<std::size_t>(u[p].cols() - 1)); ++j)
            g = std::max(g, (u[p].col(static_cast<Eigen::Index>(j)) - v[p].col(static_cast<Eigen::Index>(j))).norm());
    return g;
}

/// Gaps of the two localization statements: solving with M and with M^tau agree on [0, tau];
/// solutions whose initial values agree on an F_0 event agree there.
struct LocalizationReport {
    double stopped_gap = 0.0;
    double event_gap = 0.0;
    std::size_t event_paths = 0;
    double bound = 0.0;
    bool pass = false;
};

inline LocalizationReport localization_consistency(const SEEProblem& prob, const SEEProblem& other_initial,
                                                   const std::function<bool(std::size_t)>& event,
                                                   const MartEnsemble& ens, const std::vector<std::size_t>& stop,
                                                   const PicardOptions& opt) {
    const PicardResult full = picard_solve(prob, ens, opt);
    const PicardResult stopped = picard_solve(prob, ens.stopped(stop), opt);
    const PicardResult alt = picard_solve(other_initial, ens, opt);
    LocalizationReport r;
    r.stopped_gap = stopped_gap(full.u, stopped.u, stop);
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        if (!event(p)) continue;
        ++r.event_paths;
        for (Eigen::Index j = 0; j < full.u[p].cols(); ++j)
            r.event_gap = std::max(r.event_gap, (full.u[p].col(j) - alt.u[p].col(j)).norm());
    }
    r.bound = 2.0 * opt.tol + 5.0 * ens.grid().max_width();
    r.pass = full.diagnostics.converged && stopped.diagnostics.converged && alt.diagnostics.converged &&
             r.stopped_gap <= r.bound && r.event_gap <= r.bound;
    return r;
}

/// u0 set to 0 where ||u0|| exceeds `level`.
inline std::function<Vector(std::size_t)> truncate_initial(std::function<Vector(std::size_t)> u0, double level) {
    return [u0 = std::move(u0), level](std::size_t p) {
        Vector v = u0(p);
        if (v.norm() > level) v.setZero();
        return v;
    };
}

} // namespace cylmart
