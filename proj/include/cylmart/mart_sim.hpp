#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cylmart/grid_measures.hpp"
#include "cylmart/operator_core.hpp"
#include "cylmart/parallel.hpp"
#include "cylmart/rng.hpp"

namespace cylmart {

/// Read-only view of a driver path up to and including grid point `last`.
class DriverPast {
public:
    DriverPast(const Matrix& values, std::size_t last) : values_(&values), last_(last) {}

    /// Driver value W(t_j) for j <= last.
    Eigen::Ref<const Vector> at(std::size_t j) const {
        if (j > last_) throw InvalidArgument("adapted coefficient read the driver ahead of time");
        return values_->col(static_cast<Eigen::Index>(j));
    }
    std::size_t last() const noexcept { return last_; }

private:
    const Matrix* values_;
    std::size_t last_;
};

/// Coefficient on cell `cell` = (t, t_next]: a d_cyl x d_drive matrix that may read the driver
/// at grid points up to the cell's left end.
using SigmaFn = std::function<Matrix(double t, std::size_t cell, const DriverPast& past)>;

/// Driver covariance, coefficient and dimensions of M = int sigma dW.
struct NoiseSpec {
    std::size_t d_drive = 1;
    std::size_t d_cyl = 1;
    SigmaFn sigma;
    bool path_dependent = false;
    Matrix q_drive;
    std::string label;

    /// Coefficient independent of the driver path.
    static NoiseSpec deterministic(std::size_t d_cyl, std::size_t d_drive, std::function<Matrix(double)> fn,
                                   std::string label, std::optional<Matrix> q = std::nullopt) {
        NoiseSpec s;
        s.d_cyl = d_cyl;
        s.d_drive = d_drive;
        s.sigma = [fn = std::move(fn)](double t, std::size_t, const DriverPast&) { return fn(t); };
        s.q_drive = q ? *q : Matrix::Identity(static_cast<Eigen::Index>(d_drive), static_cast<Eigen::Index>(d_drive));
        s.label = std::move(label);
        s.validate();
        return s;
    }

    static NoiseSpec constant(const Matrix& sigma, std::string label, std::optional<Matrix> q = std::nullopt) {
        return deterministic(static_cast<std::size_t>(sigma.rows()), static_cast<std::size_t>(sigma.cols()),
                             [sigma](double) { return sigma; }, std::move(label), std::move(q));
    }

    /// Coefficient read from the driver history.
    static NoiseSpec adapted(std::size_t d_cyl, std::size_t d_drive, SigmaFn fn, std::string label,
                             std::optional<Matrix> q = std::nullopt) {
        NoiseSpec s;
        s.d_cyl = d_cyl;
        s.d_drive = d_drive;
        s.sigma = std::move(fn);
        s.path_dependent = true;
        s.q_drive = q ? *q : Matrix::Identity(static_cast<Eigen::Index>(d_drive), static_cast<Eigen::Index>(d_drive));
        s.label = std::move(label);
        s.validate();
        return s;
    }

    void validate() const {
        if (d_drive == 0 || d_cyl == 0) throw InvalidArgument("noise dimensions must be positive");
        if (!sigma) throw InvalidArgument("noise coefficient missing");
        if (q_drive.rows() != static_cast<Eigen::Index>(d_drive) || q_drive.cols() != q_drive.rows())
            throw InvalidArgument("driver covariance has the wrong shape");
        detail::psd_root(SymOperator(q_drive).matrix());
    }

    /// Coefficient on a cell for a coefficient that does not read the driver.
    Matrix sigma_at(double t, std::size_t cell) const {
        static const Matrix empty;
        Matrix m = sigma(t, cell, DriverPast(empty, 0));
        check_shape(m);
        return m;
    }

    void check_shape(const Matrix& m) const {
        if (m.rows() != static_cast<Eigen::Index>(d_cyl) || m.cols() != static_cast<Eigen::Index>(d_drive))
            throw InvalidArgument("coefficient has the wrong shape");
    }
};

/// sigma Q sigma^T for one cell.
inline Matrix cell_covariance(const Matrix& sigma, const Matrix& q) {
    Matrix c = sigma * q * sigma.transpose();
    return 0.5 * (c + c.transpose());
}

/// [[M]]-increment of one cell: ||sigma Q_N sigma^T|| times the driver's [[N]]-increment,
/// with [[N]]_t = t ||Q|| and Q_N = Q / ||Q||.
inline double qv_increment(const Matrix& sigma, const Matrix& q, double q_norm, double dt) {
    if (q_norm == 0.0) return 0.0;
    return detail::sym_norm(cell_covariance(sigma, q / q_norm)) * (q_norm * dt);
}

/// M = sigma stacked from two independent noises: the sum, and each summand, all on the joint driver.
struct JointNoise {
    NoiseSpec first;
    NoiseSpec second;
    NoiseSpec sum;
};

/// Places two noises with the same cylinder dimension on a block-diagonal joint driver.
inline JointNoise joint_independent(const NoiseSpec& a, const NoiseSpec& b) {
    if (a.d_cyl != b.d_cyl) throw InvalidArgument("noises must share the cylinder dimension");
    const auto da = static_cast<Eigen::Index>(a.d_drive), db = static_cast<Eigen::Index>(b.d_drive);
    const auto dc = static_cast<Eigen::Index>(a.d_cyl);
    Matrix q = Matrix::Zero(da + db, da + db);
    q.topLeftCorner(da, da) = a.q_drive;
    q.bottomRightCorner(db, db) = b.q_drive;

    auto split = [da, db](const DriverPast& past, std::size_t which, Matrix& store) {
        const std::size_t n = past.last() + 1;
        store.resize(which == 0 ? da : db, static_cast<Eigen::Index>(n));
        for (std::size_t j = 0; j < n; ++j)
            store.col(static_cast<Eigen::Index>(j)) = which == 0 ? past.at(j).head(da) : past.at(j).tail(db);
    };
    auto make = [&](bool use_a, bool use_b, std::string label) {
        SigmaFn fn = [=](double t, std::size_t cell, const DriverPast& past) {
            Matrix out = Matrix::Zero(dc, da + db);
            Matrix store;
            if (use_a) {
                if (a.path_dependent) split(past, 0, store);
                out.leftCols(da) = a.sigma(t, cell, DriverPast(store, a.path_dependent ? past.last() : 0));
            }
            if (use_b) {
                if (b.path_dependent) split(past, 1, store);
                out.rightCols(db) = b.sigma(t, cell, DriverPast(store, b.path_dependent ? past.last() : 0));
            }
            return out;
        };
        NoiseSpec s;
        s.d_cyl = a.d_cyl;
        s.d_drive = static_cast<std::size_t>(da + db);
        s.sigma = std::move(fn);
        s.path_dependent = (use_a && a.path_dependent) || (use_b && b.path_dependent);
        s.q_drive = q;
        s.label = std::move(label);
        return s;
    };
    return {make(true, false, a.label + "|0"), make(false, true, "0|" + b.label),
            make(true, true, a.label + "+" + b.label)};
}

/// Operator-valued process on a grid: one matrix per grid point or one per cell.
struct OperatorProcess {
    enum class Sampling { Points, Cells };
    TimeGrid grid;
    Sampling sampling;
    std::vector<Matrix> matrices;
};

/// Simulated paths of M = int sigma dW on a grid, with per-cell coefficients and brackets.
class MartEnsemble {
public:
    const NoiseSpec& spec() const noexcept { return *spec_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return d_w_.size(); }
    std::size_t cells() const noexcept { return grid_.cells(); }
    std::uint64_t seed() const noexcept { return seed_; }
    bool path_dependent() const noexcept { return spec_->path_dependent; }
    const Matrix& panel() const noexcept { return panel_; }

    /// Driver increments of a path, one column per cell.
    const Matrix& driver_increments(std::size_t path) const { return d_w_[path]; }
    /// Increments sigma dW of a path, one column per cell.
    const Matrix& increments(std::size_t path) const { return d_m_[path]; }
    /// Coefficient of a path on a cell.
    const Matrix& sigma(std::size_t path, std::size_t cell) const {
        return path_dependent() ? sigma_[path * cells() + cell] : sigma_[cell];
    }
    /// sigma Q sigma^T of a path on a cell.
    const Matrix& covariance(std::size_t path, std::size_t cell) const {
        return path_dependent() ? cov_[path * cells() + cell] : cov_[cell];
    }
    /// [[M]] of a path.
    const GridMeasure& bracket(std::size_t path) const {
        return path_dependent() ? brackets_[path] : brackets_.front();
    }
    /// Cell at which the path is stopped (cells() when it runs to the horizon).
    std::size_t stop_cell(std::size_t path) const { return stops_.empty() ? cells() : stops_[path]; }

    /// M_{t_j} as a vector of the cylinder space.
    Vector value(std::size_t path, std::size_t j) const {
        Vector v = Vector::Zero(d_m_[path].rows());
        for (std::size_t i = 0; i < j; ++i) v += d_m_[path].col(static_cast<Eigen::Index>(i));
        return v;
    }
    /// Whole path M_{t_0..t_K}, one column per grid point.
    Matrix values(std::size_t path) const {
        const auto& inc = d_m_[path];
        Matrix out = Matrix::Zero(inc.rows(), inc.cols() + 1);
        for (Eigen::Index i = 0; i < inc.cols(); ++i) out.col(i + 1) = out.col(i) + inc.col(i);
        return out;
    }
    /// Evaluation M_{t_j} h.
    double eval(std::size_t path, std::size_t j, const Vector& h) const {
        double s = 0.0;
        for (std::size_t i = 0; i < j; ++i) s += h.dot(d_m_[path].col(static_cast<Eigen::Index>(i)));
        return s;
    }

    /// Exact bracket [Mx]_{t_j} = sum over cells of x^T sigma Q sigma^T x dt.
    double direction_bracket(std::size_t path, std::size_t j, const Vector& x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < j; ++i) s += x.dot(covariance(path, i) * x) * grid_.width(i);
        return s;
    }
    /// Realized variation sum over cells of <x, dM>^2 up to t_j.
    double realized_bracket(std::size_t path, std::size_t j, const Vector& x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < j; ++i) {
            const double v = x.dot(d_m_[path].col(static_cast<Eigen::Index>(i)));
            s += v * v;
        }
        return s;
    }

    /// Ensemble with every path stopped at the grid point stop[path]: increments and
    /// coefficients vanish from that cell on.
    MartEnsemble stopped(const std::vector<std::size_t>& stop) const {
        if (stop.size() != n_paths()) throw InvalidArgument("one stopping index per path required");
        MartEnsemble out = *this;
        auto spec = std::make_shared<NoiseSpec>(*spec_);
        spec->path_dependent = true;
        out.spec_ = spec;
        const std::size_t k = cells();
        const auto dc = static_cast<Eigen::Index>(spec_->d_cyl);
        const auto dd = static_cast<Eigen::Index>(spec_->d_drive);
        out.sigma_.assign(n_paths() * k, Matrix());
        out.cov_.assign(n_paths() * k, Matrix());
        out.brackets_.clear();
        out.stops_.resize(n_paths());
        for (std::size_t p = 0; p < n_paths(); ++p) {
            const std::size_t s = std::min({stop[p], k, stop_cell(p)});
            out.stops_[p] = s;
            std::vector<double> inc(k, 0.0);
            const auto& qv = bracket(p);
            for (std::size_t i = 0; i < k; ++i) {
                if (i < s) {
                    out.sigma_[p * k + i] = sigma(p, i);
                    out.cov_[p * k + i] = covariance(p, i);
                    inc[i] = qv[i];
                } else {
                    out.sigma_[p * k + i] = Matrix::Zero(dc, dd);
                    out.cov_[p * k + i] = Matrix::Zero(dc, dc);
                    out.d_m_[p].col(static_cast<Eigen::Index>(i)).setZero();
                }
            }
            out.brackets_.emplace_back(grid_, std::move(inc));
        }
        return out;
    }

    friend MartEnsemble simulate(const NoiseSpec& spec, const TimeGrid& grid, std::size_t n_paths,
                                 std::uint64_t seed, Eigen::Index panel_size);

private:
    MartEnsemble(std::shared_ptr<const NoiseSpec> spec, TimeGrid grid, std::uint64_t seed)
        : spec_(std::move(spec)), grid_(std::move(grid)), seed_(seed) {}

    std::shared_ptr<const NoiseSpec> spec_;
    TimeGrid grid_;
    std::uint64_t seed_;
    std::vector<Matrix> d_w_;
    std::vector<Matrix> d_m_;
    std::vector<Matrix> sigma_;
    std::vector<Matrix> cov_;
    std::vector<GridMeasure> brackets_;
    std::vector<std::size_t> stops_;
    Matrix panel_;
};

/// Simulates n_paths paths by left-point sums M_{t_j} = sum_{i<j} sigma(t_i) dW_i.
///
/// Path p draws from the substream (seed, p) only, so results do not depend on the worker count.
/// The stored test panel holds `panel_size` unit directions of the cylinder space.
inline MartEnsemble simulate(const NoiseSpec& spec, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                             Eigen::Index panel_size = 0) {
    spec.validate();
    if (n_paths < 1) throw InvalidArgument("n_paths must be at least 1");
    MartEnsemble ens(std::make_shared<NoiseSpec>(spec), grid, seed);
    const std::size_t k = grid.cells();
    const auto dd = static_cast<Eigen::Index>(spec.d_drive);
    const auto dc = static_cast<Eigen::Index>(spec.d_cyl);
    const Matrix q_root = detail::psd_root(SymOperator(spec.q_drive).matrix());
    const double q_norm = detail::sym_norm(spec.q_drive);
    ens.panel_ = sphere_panel(dc, panel_size > 0 ? panel_size : dc, seed);

    auto bracket_of = [&](const std::vector<Matrix>& sig, std::size_t offset) {
        std::vector<double> inc(k);
        for (std::size_t i = 0; i < k; ++i) inc[i] = qv_increment(sig[offset + i], spec.q_drive, q_norm, grid.width(i));
        return GridMeasure(grid, std::move(inc));
    };

    ens.d_w_.resize(n_paths);
    ens.d_m_.resize(n_paths);
    if (!spec.path_dependent) {
        ens.sigma_.resize(k);
        ens.cov_.resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            ens.sigma_[i] = spec.sigma_at(grid[i], i);
            ens.cov_[i] = cell_covariance(ens.sigma_[i], spec.q_drive);
        }
        ens.brackets_.push_back(bracket_of(ens.sigma_, 0));
    } else {
        ens.sigma_.resize(n_paths * k);
        ens.cov_.resize(n_paths * k);
    }

    parallel_for(n_paths, [&](std::size_t p) {
        auto rng = substream(seed, p);
        const Matrix z = gaussian_matrix(rng, dd, static_cast<Eigen::Index>(k));
        Matrix dw(dd, static_cast<Eigen::Index>(k));
        Matrix dm(dc, static_cast<Eigen::Index>(k));
        Matrix w = spec.path_dependent ? Matrix::Zero(dd, static_cast<Eigen::Index>(k + 1)) : Matrix();
        for (std::size_t i = 0; i < k; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            dw.col(col) = std::sqrt(grid.width(i)) * (q_root * z.col(col));
            if (spec.path_dependent) {
                Matrix s = spec.sigma(grid[i], i, DriverPast(w, i));
                spec.check_shape(s);
                ens.cov_[p * k + i] = cell_covariance(s, spec.q_drive);
                ens.sigma_[p * k + i] = std::move(s);
                w.col(col + 1) = w.col(col) + dw.col(col);
                dm.col(col) = ens.sigma_[p * k + i] * dw.col(col);
            } else {
                dm.col(col) = ens.sigma_[i] * dw.col(col);
            }
        }
        ens.d_w_[p] = std::move(dw);
        ens.d_m_[p] = std::move(dm);
    });
    if (spec.path_dependent) {
        ens.brackets_.reserve(n_paths);
        for (std::size_t p = 0; p < n_paths; ++p) ens.brackets_.push_back(bracket_of(ens.sigma_, p * k));
    }
    return ens;
}

/// [[M]] for a coefficient that does not read the driver.
inline GridMeasure qv_exact(const NoiseSpec& spec, const TimeGrid& grid) {
    if (spec.path_dependent) throw InvalidArgument("qv_exact needs a driver-independent coefficient; use the ensemble");
    const double q_norm = detail::sym_norm(spec.q_drive);
    std::vector<double> inc(grid.cells());
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = qv_increment(spec.sigma_at(grid[i], i), spec.q_drive, q_norm, grid.width(i));
    return GridMeasure(grid, std::move(inc));
}

/// [[M]] along one simulated path.
inline const GridMeasure& qv_exact(const MartEnsemble& ens, std::size_t path) { return ens.bracket(path); }

/// Scalar quadratic variation int tr(sigma Q sigma^T) dt of the cylinder-space vector process.
inline GridMeasure scalar_qv_exact(const MartEnsemble& ens, std::size_t path) {
    std::vector<double> inc(ens.cells());
    for (std::size_t i = 0; i < inc.size(); ++i)
        inc[i] = std::max(0.0, ens.covariance(path, i).trace()) * ens.grid().width(i);
    return GridMeasure(ens.grid(), std::move(inc));
}

namespace detail {

/// Dyadic block boundaries of a K-cell grid at a given depth, as cell indices.
inline std::vector<std::size_t> dyadic_blocks(std::size_t cells, unsigned depth) {
    const std::size_t blocks = std::size_t{1} << std::min(depth, 62u);
    std::vector<std::size_t> b{0};
    for (std::size_t j = 1; j <= blocks; ++j) {
        const auto edge = static_cast<std::size_t>((static_cast<unsigned __int128>(j) * cells) / blocks);
        if (edge > b.back()) b.push_back(edge);
        if (edge == cells) break;
    }
    if (b.back() != cells) b.push_back(cells);
    return b;
}

inline std::vector<double> partition_sup_path(const MartEnsemble& ens, std::size_t path, const Matrix& sample,
                                              unsigned depth) {
    const std::size_t k = ens.cells();
    const auto blocks = dyadic_blocks(k, depth);
    const Eigen::Index d = ens.panel().rows();
    std::vector<double> out(k + 1, 0.0);
    double closed = 0.0;
    for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
        Matrix acc = Matrix::Zero(d, d);
        for (std::size_t i = blocks[b]; i < blocks[b + 1]; ++i) {
            acc += ens.covariance(path, i) * ens.grid().width(i);
            const double sup = (sample.transpose() * acc * sample).diagonal().maxCoeff();
            out[i + 1] = std::max(out[i], closed + std::max(0.0, sup));
        }
        closed = out[blocks[b + 1]];
    }
    return out;
}

} // namespace detail

/// Partition-supremum estimate of [[M]]: for each depth, the sum over 2^depth dyadic blocks of
/// the largest bracket increment among the first `sphere_samples` panel directions.
///
/// Result[path][d] is the estimated path at every grid point for depth_schedule[d]; between
/// block edges the partial block ending at the grid point is used.
inline std::vector<std::vector<IncreasingPath>> qv_partition_estimate(const MartEnsemble& ens,
                                                                      Eigen::Index sphere_samples,
                                                                      const std::vector<unsigned>& depth_schedule,
                                                                      std::uint64_t panel_seed = 0) {
    if (sphere_samples < 1) throw InvalidArgument("empty sphere sample");
    const Matrix sample = sphere_panel(static_cast<Eigen::Index>(ens.spec().d_cyl), sphere_samples, panel_seed);
    const std::size_t shared = ens.path_dependent() ? ens.n_paths() : 1;
    std::vector<std::vector<IncreasingPath>> computed(shared);
    parallel_for(shared, [&](std::size_t p) {
        for (unsigned depth : depth_schedule)
            computed[p].emplace_back(ens.grid(), detail::partition_sup_path(ens, p, sample, depth));
    });
    if (shared == ens.n_paths()) return computed;
    return std::vector<std::vector<IncreasingPath>>(ens.n_paths(), computed.front());
}

/// A_M(t_j) = sum over cells before t_j of sigma Q sigma^T dt.
inline OperatorProcess am_operator(const NoiseSpec& spec, const TimeGrid& grid) {
    if (spec.path_dependent) throw InvalidArgument("am_operator needs a driver-independent coefficient");
    const auto dc = static_cast<Eigen::Index>(spec.d_cyl);
    OperatorProcess out{grid, OperatorProcess::Sampling::Points, {Matrix::Zero(dc, dc)}};
    for (std::size_t i = 0; i < grid.cells(); ++i)
        out.matrices.push_back(out.matrices.back() + cell_covariance(spec.sigma_at(grid[i], i), spec.q_drive) * grid.width(i));
    return out;
}

/// A_M along one simulated path.
inline OperatorProcess am_operator(const MartEnsemble& ens, std::size_t path) {
    const auto dc = static_cast<Eigen::Index>(ens.spec().d_cyl);
    OperatorProcess out{ens.grid(), OperatorProcess::Sampling::Points, {Matrix::Zero(dc, dc)}};
    for (std::size_t i = 0; i < ens.cells(); ++i)
        out.matrices.push_back(out.matrices.back() + ens.covariance(path, i) * ens.grid().width(i));
    return out;
}

/// Normalized density sigma Q sigma^T / ||sigma Q sigma^T|| of one cell, 0 where it vanishes.
inline Matrix normalized_density(const Matrix& cov) {
    const double n = detail::sym_norm(cov);
    return n > 0.0 ? Matrix(cov / n) : Matrix::Zero(cov.rows(), cov.cols());
}

/// Q_M per cell for a coefficient that does not read the driver.
inline OperatorProcess qm_operator(const NoiseSpec& spec, const TimeGrid& grid) {
    if (spec.path_dependent) throw InvalidArgument("qm_operator needs a driver-independent coefficient");
    OperatorProcess out{grid, OperatorProcess::Sampling::Cells, {}};
    for (std::size_t i = 0; i < grid.cells(); ++i)
        out.matrices.push_back(normalized_density(cell_covariance(spec.sigma_at(grid[i], i), spec.q_drive)));
    return out;
}

/// Q_M per cell along one simulated path.
inline OperatorProcess qm_operator(const MartEnsemble& ens, std::size_t path) {
    OperatorProcess out{ens.grid(), OperatorProcess::Sampling::Cells, {}};
    for (std::size_t i = 0; i < ens.cells(); ++i) out.matrices.push_back(normalized_density(ens.covariance(path, i)));
    return out;
}

/// Q_M recovered entry-wise as the backward-window derivative of A_M against [[M]].
inline OperatorProcess qm_empirical(const OperatorProcess& am, const GridMeasure& qv, std::size_t window) {
    if (am.sampling != OperatorProcess::Sampling::Points) throw InvalidArgument("A_M must be sampled at grid points");
    if (!(am.grid == qv.grid())) throw InvalidArgument("A_M and [[M]] live on different grids");
    const std::size_t k = qv.cells();
    const Eigen::Index r = am.matrices.front().rows(), c = am.matrices.front().cols();
    OperatorProcess out{qv.grid(), OperatorProcess::Sampling::Cells, std::vector<Matrix>(k, Matrix::Zero(r, c))};
    std::vector<double> num(k);
    for (Eigen::Index a = 0; a < r; ++a) {
        for (Eigen::Index b = 0; b < c; ++b) {
            for (std::size_t i = 0; i < k; ++i) num[i] = am.matrices[i + 1](a, b) - am.matrices[i](a, b);
            const auto q = window_quotient(num, qv.increments(), window);
            for (std::size_t i = 0; i < k; ++i) out.matrices[i](a, b) = q[i];
        }
    }
    return out;
}

/// First grid index at which [[M]] of the path exceeds `level`, or cells() if it never does.
inline std::size_t qv_crossing(const GridMeasure& qv, double level) {
    double f = 0.0;
    for (std::size_t i = 0; i < qv.cells(); ++i) {
        f += qv[i];
        if (f > level) return i + 1;
    }
    return qv.cells();
}

/// First grid index at which |M_t h| exceeds `level`, or cells() if it never does.
inline std::size_t exit_index(const MartEnsemble& ens, std::size_t path, const Vector& h, double level) {
    double v = 0.0;
    for (std::size_t i = 0; i < ens.cells(); ++i) {
        v += h.dot(ens.increments(path).col(static_cast<Eigen::Index>(i)));
        if (std::abs(v) > level) return i + 1;
    }
    return ens.cells();
}

/// Truncation of the non-summable family: on n equal cells of [0, 1] the coefficient is the
/// k-th basis vector on cell k, driven by a scalar Brownian motion of variance n per unit time.
inline NoiseSpec countex_spec(std::size_t n) {
    if (n == 0) throw InvalidArgument("truncation order must be positive");
    const auto dn = static_cast<Eigen::Index>(n);
    return NoiseSpec::deterministic(
        n, 1,
        [n, dn](double t) {
            Matrix s = Matrix::Zero(dn, 1);
            const auto k = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::floor(t * static_cast<double>(n) + 1e-9)));
            s(static_cast<Eigen::Index>(k), 0) = 1.0;
            return s;
        },
        "countex:" + std::to_string(n), Matrix::Constant(1, 1, static_cast<double>(n)));
}

} // namespace cylmart
