#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cylmart/mart_sim.hpp"
#include "cylmart/report.hpp"

namespace cylmart {

/// Norm used on the target space R^m: Euclidean (p = 2) or an l^p norm.
struct NormFlavor {
    double p = 2.0;

    static NormFlavor euclidean() { return {2.0}; }
    static NormFlavor lp(double p) {
        if (!(p >= 1.0)) throw InvalidArgument("l^p flavor needs p >= 1");
        return {p};
    }

    bool hilbert() const noexcept { return p == 2.0; }
    std::string name() const { return hilbert() ? "euclidean" : "l" + std::to_string(static_cast<int>(p)); }

    double operator()(const Eigen::Ref<const Vector>& v) const {
        if (p == 2.0) return v.norm();
        if (p == 1.0) return v.cwiseAbs().sum();
        double s = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v(i)), p);
        return std::pow(s, 1.0 / p);
    }
};

/// Adapted operator-valued integrand: an m x d_cyl matrix per path and cell. The value on cell
/// (t_i, t_{i+1}] may use information up to t_i only.
class IntegrandProcess {
public:
    using Fn = std::function<Matrix(std::size_t path, std::size_t cell)>;

    static IntegrandProcess deterministic(std::vector<Matrix> per_cell) {
        if (per_cell.empty()) throw InvalidArgument("integrand needs at least one cell");
        for (const auto& m : per_cell)
            if (m.rows() != per_cell.front().rows() || m.cols() != per_cell.front().cols())
                throw InvalidArgument("integrand shape varies across cells");
        IntegrandProcess out;
        out.rows_ = per_cell.front().rows();
        out.cols_ = per_cell.front().cols();
        out.cells_ = per_cell.size();
        out.table_ = std::make_shared<const std::vector<Matrix>>(std::move(per_cell));
        return out;
    }

    static IntegrandProcess constant(const Matrix& m, std::size_t cells) {
        return deterministic(std::vector<Matrix>(cells, m));
    }

    static IntegrandProcess adapted(Eigen::Index rows, Eigen::Index cols, std::size_t cells, Fn fn) {
        IntegrandProcess out;
        out.rows_ = rows;
        out.cols_ = cols;
        out.cells_ = cells;
        out.fn_ = std::move(fn);
        return out;
    }

    Eigen::Index rows() const noexcept { return rows_; }
    Eigen::Index cols() const noexcept { return cols_; }
    std::size_t cells() const noexcept { return cells_; }
    bool is_deterministic() const noexcept { return table_ != nullptr; }

    Matrix at(std::size_t path, std::size_t cell) const {
        if (table_) return (*table_)[cell];
        Matrix m = fn_(path, cell);
        if (m.rows() != rows_ || m.cols() != cols_) throw InvalidArgument("integrand returned the wrong shape");
        return m;
    }

    /// a * this + b * other.
    IntegrandProcess combined(double a, const IntegrandProcess& other, double b) const {
        check_same_shape(other);
        if (is_deterministic() && other.is_deterministic()) {
            std::vector<Matrix> out(cells_);
            for (std::size_t i = 0; i < cells_; ++i) out[i] = a * (*table_)[i] + b * (*other.table_)[i];
            return deterministic(std::move(out));
        }
        auto self = *this;
        return adapted(rows_, cols_, cells_, [self, other, a, b](std::size_t p, std::size_t i) {
            return Matrix(a * self.at(p, i) + b * other.at(p, i));
        });
    }

    /// Integrand multiplied by the indicator of cells before stop[path].
    IntegrandProcess truncated(std::vector<std::size_t> stop) const {
        auto self = *this;
        auto st = std::make_shared<const std::vector<std::size_t>>(std::move(stop));
        return adapted(rows_, cols_, cells_, [self, st](std::size_t p, std::size_t i) {
            return i < (*st)[p] ? self.at(p, i) : Matrix(Matrix::Zero(self.rows(), self.cols()));
        });
    }

    /// Left multiplication by a fixed matrix.
    IntegrandProcess left_multiplied(const Matrix& t) const {
        if (t.cols() != rows_) throw InvalidArgument("left factor has the wrong shape");
        if (is_deterministic()) {
            std::vector<Matrix> out(cells_);
            for (std::size_t i = 0; i < cells_; ++i) out[i] = t * (*table_)[i];
            return deterministic(std::move(out));
        }
        auto self = *this;
        return adapted(t.rows(), cols_, cells_, [self, t](std::size_t p, std::size_t i) { return Matrix(t * self.at(p, i)); });
    }

private:
    void check_same_shape(const IntegrandProcess& o) const {
        if (o.rows_ != rows_ || o.cols_ != cols_ || o.cells_ != cells_) throw InvalidArgument("integrand shapes differ");
    }

    Eigen::Index rows_ = 0;
    Eigen::Index cols_ = 0;
    std::size_t cells_ = 0;
    std::shared_ptr<const std::vector<Matrix>> table_;
    Fn fn_;
};

/// Paths of an R^m-valued integral on the grid, one column per grid point, starting at 0.
struct IntegralPaths {
    TimeGrid grid;
    NormFlavor flavor;
    std::vector<Matrix> paths;

    std::size_t n_paths() const noexcept { return paths.size(); }
    Vector terminal(std::size_t p) const { return paths[p].col(paths[p].cols() - 1); }
    double terminal_norm(std::size_t p) const { return flavor(paths[p].col(paths[p].cols() - 1)); }
    /// max over grid points of the path norm.
    double sup_norm(std::size_t p) const {
        double s = 0.0;
        for (Eigen::Index j = 0; j < paths[p].cols(); ++j) s = std::max(s, flavor(paths[p].col(j)));
        return s;
    }
};

namespace detail {

inline void check_integrand(const IntegrandProcess& phi, const MartEnsemble& ens) {
    if (phi.cols() != static_cast<Eigen::Index>(ens.spec().d_cyl)) throw InvalidArgument("integrand width differs from the cylinder dimension");
    if (phi.cells() != ens.cells()) throw InvalidArgument("integrand and ensemble grids differ");
}

} // namespace detail

/// zeta(t_j) = sum_{i<j} Phi(t_i) sigma(t_i) dW_i, accumulated cell by cell through the driver.
inline IntegralPaths integrate(const IntegrandProcess& phi, const MartEnsemble& ens,
                               NormFlavor flavor = NormFlavor::euclidean()) {
    detail::check_integrand(phi, ens);
    IntegralPaths out{ens.grid(), flavor, std::vector<Matrix>(ens.n_paths())};
    const Eigen::Index k = static_cast<Eigen::Index>(ens.cells());
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        Matrix z = Matrix::Zero(phi.rows(), k + 1);
        const Matrix& dm = ens.increments(p);
        for (Eigen::Index i = 0; i < k; ++i) z.col(i + 1) = z.col(i) + phi.at(p, static_cast<std::size_t>(i)) * dm.col(i);
        out.paths[p] = std::move(z);
    });
    return out;
}

/// Same sum with increments taken as differences of accumulated M-values, for ensembles known
/// only through their evaluations. Agrees with integrate up to round-off.
inline IntegralPaths integrate_from_values(const IntegrandProcess& phi, const MartEnsemble& ens,
                                           NormFlavor flavor = NormFlavor::euclidean()) {
    detail::check_integrand(phi, ens);
    IntegralPaths out{ens.grid(), flavor, std::vector<Matrix>(ens.n_paths())};
    const Eigen::Index k = static_cast<Eigen::Index>(ens.cells());
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        const Matrix m = ens.values(p);
        Matrix z = Matrix::Zero(phi.rows(), k + 1);
        for (Eigen::Index i = 0; i < k; ++i)
            z.col(i + 1) = z.col(i) + phi.at(p, static_cast<std::size_t>(i)) * (m.col(i + 1) - m.col(i));
        out.paths[p] = std::move(z);
    });
    return out;
}

/// One term sum_k 1_B (M_{b ^ t} h_k - M_{a ^ t} h_k) x_k of an elementary integral, with
/// a = t_first, b = t_last and B decided by information at time a.
struct ElementaryTerm {
    std::size_t first = 0;
    std::size_t last = 0;
    std::function<bool(std::size_t path)> event;
    std::vector<Vector> h;
    std::vector<Vector> x;
};

/// Elementary progressive integrand with values in R^m.
struct ElementaryIntegrand {
    Eigen::Index m = 1;
    std::vector<ElementaryTerm> terms;

    void validate(std::size_t cells, std::size_t d_cyl) const {
        for (const auto& t : terms) {
            if (t.first > t.last || t.last > cells) throw InvalidArgument("elementary term has a bad time interval");
            if (t.h.size() != t.x.size()) throw InvalidArgument("elementary term needs one x per h");
            for (std::size_t a = 0; a < t.h.size(); ++a) {
                if (t.h[a].size() != static_cast<Eigen::Index>(d_cyl) || t.x[a].size() != m)
                    throw InvalidArgument("elementary term vectors have the wrong dimension");
                for (std::size_t b = 0; b < a; ++b) {
                    const double tol = 1e-12 * t.h[a].norm() * t.h[b].norm();
                    if (std::abs(t.h[a].dot(t.h[b])) > tol) throw InvalidArgument("elementary term h panel is not orthogonal");
                }
            }
        }
    }

    /// The same integrand as a cell-by-cell matrix process.
    IntegrandProcess as_process(std::size_t cells, std::size_t d_cyl) const {
        validate(cells, d_cyl);
        auto self = *this;
        const auto dc = static_cast<Eigen::Index>(d_cyl);
        return IntegrandProcess::adapted(m, dc, cells, [self, dc](std::size_t p, std::size_t i) {
            Matrix out = Matrix::Zero(self.m, dc);
            for (const auto& t : self.terms) {
                if (i < t.first || i >= t.last || (t.event && !t.event(p))) continue;
                for (std::size_t a = 0; a < t.h.size(); ++a) out += t.x[a] * t.h[a].transpose();
            }
            return out;
        });
    }
};

/// Direct evaluation of the elementary integral from the martingale's evaluations M_t h.
inline IntegralPaths elementary_integral(const ElementaryIntegrand& phi, const MartEnsemble& ens,
                                         NormFlavor flavor = NormFlavor::euclidean()) {
    phi.validate(ens.cells(), ens.spec().d_cyl);
    const std::size_t k = ens.cells();
    IntegralPaths out{ens.grid(), flavor, std::vector<Matrix>(ens.n_paths())};
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        Matrix z = Matrix::Zero(phi.m, static_cast<Eigen::Index>(k + 1));
        const Matrix& dm = ens.increments(p);
        for (const auto& t : phi.terms) {
            if (t.event && !t.event(p)) continue;
            for (std::size_t a = 0; a < t.h.size(); ++a) {
                double c = 0.0;
                for (std::size_t j = t.first + 1; j <= k; ++j) {
                    if (j <= t.last) c += t.h[a].dot(dm.col(static_cast<Eigen::Index>(j - 1)));
                    z.col(static_cast<Eigen::Index>(j)) += c * t.x[a];
                }
            }
        }
        out.paths[p] = std::move(z);
    });
    return out;
}

/// Bracket of the scalar integral int phi dM along a path: increments phi Q_M phi^T d[[M]].
inline GridMeasure bracket_of_integral(const IntegrandProcess& phi, const MartEnsemble& ens, std::size_t path) {
    detail::check_integrand(phi, ens);
    if (phi.rows() != 1) throw InvalidArgument("bracket_of_integral needs a row integrand");
    const auto& qv = ens.bracket(path);
    std::vector<double> inc(ens.cells());
    for (std::size_t i = 0; i < inc.size(); ++i) {
        const Matrix row = phi.at(path, i);
        const Matrix qm = normalized_density(ens.covariance(path, i));
        inc[i] = std::max(0.0, (row * qm * row.transpose())(0, 0)) * qv[i];
    }
    return GridMeasure(ens.grid(), std::move(inc));
}

/// A_{M1,M2}(t_j) = sum over cells of sigma1 Q sigma2^T dt for two noises on one driver.
inline OperatorProcess covariation_operator(const NoiseSpec& a, const NoiseSpec& b, const TimeGrid& grid) {
    if (a.path_dependent || b.path_dependent) throw InvalidArgument("covariation_operator needs driver-independent coefficients");
    if (a.d_drive != b.d_drive || a.q_drive != b.q_drive) throw InvalidArgument("noises do not share a driver");
    OperatorProcess out{grid, OperatorProcess::Sampling::Points,
                        {Matrix::Zero(static_cast<Eigen::Index>(a.d_cyl), static_cast<Eigen::Index>(b.d_cyl))}};
    for (std::size_t i = 0; i < grid.cells(); ++i)
        out.matrices.push_back(out.matrices.back() +
                               a.sigma_at(grid[i], i) * a.q_drive * b.sigma_at(grid[i], i).transpose() * grid.width(i));
    return out;
}

namespace detail {

inline void require_shared_driver(const MartEnsemble& a, const MartEnsemble& b) {
    if (a.n_paths() != b.n_paths() || !(a.grid() == b.grid()) || a.seed() != b.seed() ||
        a.spec().d_drive != b.spec().d_drive || a.spec().q_drive != b.spec().q_drive)
        throw InvalidArgument("ensembles do not share a driver");
}

} // namespace detail

/// Kunita-Watanabe inequality per path for covector fields f (against M1) and g (against M2):
/// |int f dA_{M1,M2} g|^2 <= int f dA_{M1} f * int g dA_{M2} g. Slack is normalized by the
/// right-hand side.
inline CheckReport kunita_watanabe_check(const IntegrandProcess& f, const IntegrandProcess& g, const MartEnsemble& m1,
                                         const MartEnsemble& m2, double tolerance = 1e-9) {
    detail::require_shared_driver(m1, m2);
    detail::check_integrand(f, m1);
    detail::check_integrand(g, m2);
    if (f.rows() != 1 || g.rows() != 1) throw InvalidArgument("Kunita-Watanabe check needs row integrands");
    const Matrix& q = m1.spec().q_drive;
    std::vector<double> slack(m1.n_paths());
    parallel_for(m1.n_paths(), [&](std::size_t p) {
        double lhs = 0.0, r1 = 0.0, r2 = 0.0;
        for (std::size_t i = 0; i < m1.cells(); ++i) {
            const double dt = m1.grid().width(i);
            const Matrix fi = f.at(p, i), gi = g.at(p, i);
            const Matrix a = fi * m1.sigma(p, i);
            const Matrix b = gi * m2.sigma(p, i);
            lhs += (a * q * b.transpose())(0, 0) * dt;
            r1 += (a * q * a.transpose())(0, 0) * dt;
            r2 += (b * q * b.transpose())(0, 0) * dt;
        }
        const double rhs = r1 * r2;
        const double scale = std::max(rhs, lhs * lhs);
        slack[p] = scale > 0.0 ? (rhs - lhs * lhs) / scale : 0.0;
    });
    CheckReport r{"kunita_watanabe", m1.n_paths(), *std::min_element(slack.begin(), slack.end()), tolerance, false};
    r.pass = r.worst_slack >= -tolerance;
    return r;
}

/// The three forms of a stopped integral.
struct StoppedIntegrals {
    IntegralPaths stopped;
    IntegralPaths truncated_integrand;
    IntegralPaths stopped_martingale;
    /// True when the three agree bit for bit on every path.
    bool identical = false;
};

/// (int phi dM)^{t ^ tau}, int 1_{s <= tau} phi dM and int phi dM^tau for a grid stopping time
/// given as the stopping grid index of each path.
inline StoppedIntegrals stop_integral(const IntegrandProcess& phi, const MartEnsemble& ens,
                                      const std::vector<std::size_t>& stop, NormFlavor flavor = NormFlavor::euclidean()) {
    if (stop.size() != ens.n_paths()) throw InvalidArgument("one stopping index per path required");
    IntegralPaths a = integrate(phi, ens, flavor);
    for (std::size_t p = 0; p < a.n_paths(); ++p) {
        const auto s = static_cast<Eigen::Index>(std::min(stop[p], ens.cells()));
        for (Eigen::Index j = s + 1; j < a.paths[p].cols(); ++j) a.paths[p].col(j) = a.paths[p].col(s);
    }
    IntegralPaths b = integrate(phi.truncated(stop), ens, flavor);
    IntegralPaths c = integrate(phi, ens.stopped(stop), flavor);
    bool same = true;
    for (std::size_t p = 0; p < a.n_paths() && same; ++p)
        same = (a.paths[p].array() == b.paths[p].array()).all() && (a.paths[p].array() == c.paths[p].array()).all();
    return {std::move(a), std::move(b), std::move(c), same};
}

/// On paths of the event, an integrand vanishing there must give a vanishing integral.
inline CheckReport local_property_check(const IntegrandProcess& phi, const MartEnsemble& ens,
                                        const std::function<bool(std::size_t)>& event) {
    const IntegralPaths z = integrate(phi, ens);
    double worst = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < z.n_paths(); ++p) {
        if (!event(p)) continue;
        ++count;
        worst = std::max(worst, z.paths[p].cwiseAbs().maxCoeff());
    }
    return {"local_property", count, -worst, 0.0, worst == 0.0};
}

} // namespace cylmart
