#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "cylmart/gamma_norms.hpp"
#include "cylmart/mart_sim.hpp"
#include "cylmart/stoch_integral.hpp"

namespace cylmart {

/// Cell masses below this fraction of the total count as plateaus.
inline constexpr double kPlateauTol = 1e-14;

/// Grid inverse of a bracket on a uniform s-grid: tau_s is the left end of the cell in which
/// [[M]] first exceeds s, so [[M]]_{tau_s} <= s < [[M]]_{tau_s} + cell mass.
struct TimeChange {
    static constexpr std::size_t never = std::numeric_limits<std::size_t>::max();

    GridMeasure qv;
    TimeGrid s_grid;
    /// Source grid index of tau at each s-grid point, or `never` from the total mass on.
    std::vector<std::size_t> tau;

    const TimeGrid& source() const { return qv.grid(); }
    double tau_time(std::size_t i) const {
        return tau[i] == never ? std::numeric_limits<double>::infinity() : source()[tau[i]];
    }
    /// Source cell whose coefficient drives the s-cell starting at s_i, or `never`.
    std::size_t driving_cell(std::size_t i) const { return tau[i]; }
};

namespace detail {

/// First grid index j with F_j - s > tol, or `never`.
inline std::size_t first_passage(std::span<const double> f, double s, double tol) {
    auto it = std::upper_bound(f.begin(), f.end(), s + tol);
    return it == f.end() ? TimeChange::never : static_cast<std::size_t>(it - f.begin());
}

/// Cell in which F first exceeds s + tol, or `never`.
inline std::size_t crossing_cell(std::span<const double> f, double s, double tol) {
    const std::size_t j = first_passage(f, s, tol);
    return j == TimeChange::never ? j : j - 1;
}

} // namespace detail

/// Builds tau on a uniform s-grid over [0, s_horizon] (default: the total mass) with s_cells
/// cells (default: the source cell count).
inline TimeChange build_time_change(const GridMeasure& qv, std::optional<double> s_horizon = std::nullopt,
                                    std::optional<std::size_t> s_cells = std::nullopt) {
    const double total = qv.total();
    const double horizon = s_horizon ? *s_horizon : (total > 0.0 ? total : 1.0);
    TimeChange tc{qv, TimeGrid::uniform(horizon, s_cells ? *s_cells : qv.cells()), {}};
    const IncreasingPath f = qv.cumulative();
    const double tol = kPlateauTol * total;
    tc.tau.resize(tc.s_grid.points().size());
    for (std::size_t i = 0; i < tc.tau.size(); ++i) tc.tau[i] = detail::crossing_cell(f.values(), tc.s_grid[i], tol);
    return tc;
}

/// N_s = M_{tau_s} on the s-grid (frozen at M_T beyond the total mass), with transported
/// bracket [[N]]_s = [[M]]_{tau_s} and Q_N = Q_M o tau on each s-cell.
struct TimeChangedEnsemble {
    std::vector<TimeChange> changes;
    std::vector<Matrix> values;
    std::vector<std::vector<double>> bracket;
    std::vector<std::vector<Matrix>> qn;

    const TimeChange& change(std::size_t path) const { return changes.size() == 1 ? changes.front() : changes[path]; }
};

/// One time change per path (a single shared one when [[M]] does not depend on the path).
inline std::vector<TimeChange> build_time_changes(const MartEnsemble& ens, std::optional<double> s_horizon = std::nullopt,
                                                  std::optional<std::size_t> s_cells = std::nullopt) {
    std::vector<TimeChange> out;
    const std::size_t n = ens.path_dependent() ? ens.n_paths() : 1;
    out.reserve(n);
    for (std::size_t p = 0; p < n; ++p) out.push_back(build_time_change(ens.bracket(p), s_horizon, s_cells));
    return out;
}

inline TimeChangedEnsemble apply_time_change(const MartEnsemble& ens, std::vector<TimeChange> changes) {
    if (changes.size() != 1 && changes.size() != ens.n_paths()) throw InvalidArgument("need one time change or one per path");
    TimeChangedEnsemble out{std::move(changes), std::vector<Matrix>(ens.n_paths()),
                            std::vector<std::vector<double>>(ens.n_paths()), std::vector<std::vector<Matrix>>(ens.n_paths())};
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        const TimeChange& tc = out.change(p);
        if (!(tc.source() == ens.grid())) throw InvalidArgument("time change built on another grid");
        const Matrix m = ens.values(p);
        const IncreasingPath f = ens.bracket(p).cumulative();
        const std::size_t ns = tc.s_grid.points().size();
        Matrix n(m.rows(), static_cast<Eigen::Index>(ns));
        std::vector<double> br(ns);
        std::vector<Matrix> qn(ns - 1);
        for (std::size_t i = 0; i < ns; ++i) {
            const std::size_t j = tc.tau[i] == TimeChange::never ? ens.cells() : tc.tau[i];
            n.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(j));
            br[i] = f[j];
            if (i + 1 < ns) {
                const std::size_t c = tc.driving_cell(i);
                qn[i] = c == TimeChange::never ? Matrix::Zero(m.rows(), m.rows()) : normalized_density(ens.covariance(p, c));
            }
        }
        out.values[p] = std::move(n);
        out.bracket[p] = std::move(br);
        out.qn[p] = std::move(qn);
    });
    return out;
}

/// int f d[[M]] on the source grid and int_{[0,S)} f(tau(s)) ds on the s-grid.
struct Substitution {
    double source_side = 0.0;
    double transported_side = 0.0;
};

/// f holds one value per source cell. The transported side uses the midpoint of each s-cell and
/// the source cell in which [[M]] crosses it.
inline Substitution substitute(std::span<const double> f, const GridMeasure& qv,
                               std::optional<std::size_t> s_cells = std::nullopt) {
    if (f.size() != qv.cells()) throw InvalidArgument("f needs one value per cell");
    Substitution out;
    for (std::size_t i = 0; i < f.size(); ++i) out.source_side += f[i] * qv[i];
    const double total = qv.total();
    if (total == 0.0) return out;
    const TimeGrid s = TimeGrid::uniform(total, s_cells ? *s_cells : qv.cells());
    const IncreasingPath cum = qv.cumulative();
    for (std::size_t i = 0; i < s.cells(); ++i) {
        const double mid = 0.5 * (s[i] + s[i + 1]);
        const std::size_t c = detail::crossing_cell(cum.values(), mid, 0.0);
        if (c != TimeChange::never) out.transported_side += f[c] * s.width(i);
    }
    return out;
}

/// Pathwise gap between int_0^t Phi dM and int_0^{[[M]]_t} Phi o tau dN on the source grid.
struct DdsReport {
    std::vector<double> gap;
    double mean_gap = 0.0;
    double max_gap = 0.0;
    double max_cell_mass = 0.0;
};

inline DdsReport dds_integral_check(const IntegrandProcess& phi, const MartEnsemble& ens,
                                    const TimeChangedEnsemble& n) {
    const IntegralPaths z = integrate(phi, ens);
    DdsReport r;
    r.gap.assign(ens.n_paths(), 0.0);
    std::vector<double> cell_mass(ens.n_paths(), 0.0);
    parallel_for(ens.n_paths(), [&](std::size_t p) {
        const TimeChange& tc = n.change(p);
        const std::size_t ns = tc.s_grid.points().size();
        Matrix rhs = Matrix::Zero(phi.rows(), static_cast<Eigen::Index>(ns));
        for (std::size_t i = 0; i + 1 < ns; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            const std::size_t c = tc.driving_cell(i);
            rhs.col(col + 1) = rhs.col(col);
            if (c != TimeChange::never) rhs.col(col + 1) += phi.at(p, c) * (n.values[p].col(col + 1) - n.values[p].col(col));
        }
        const IncreasingPath f = ens.bracket(p).cumulative();
        const auto sp = tc.s_grid.points();
        const double tol = kPlateauTol * f.terminal();
        double gap = 0.0;
        for (std::size_t j = 0; j < f.values().size(); ++j) {
            auto it = std::upper_bound(sp.begin(), sp.end(), f[j] + tol);
            const auto i = static_cast<Eigen::Index>(std::max<std::ptrdiff_t>(0, (it - sp.begin()) - 1));
            gap = std::max(gap, (z.paths[p].col(static_cast<Eigen::Index>(j)) - rhs.col(i)).norm());
        }
        r.gap[p] = gap;
        cell_mass[p] = ens.bracket(p).max_increment();
    });
    for (std::size_t p = 0; p < r.gap.size(); ++p) {
        r.mean_gap += r.gap[p] / static_cast<double>(r.gap.size());
        r.max_gap = std::max(r.max_gap, r.gap[p]);
        r.max_cell_mass = std::max(r.max_cell_mass, cell_mass[p]);
    }
    return r;
}

/// gamma norms of Phi against mu = [[M]] and of Psi = Phi o tau against Lebesgue measure on
/// the s-grid (midpoint transport).
struct GammaTimeChangeReport {
    GammaEstimate source;
    GammaEstimate transported;
};

inline GammaTimeChangeReport gamma_timechange_check(const std::vector<Matrix>& phi, const GridMeasure& qv,
                                                    NormFlavor flavor, std::size_t s_cells, std::size_t n_samples,
                                                    std::uint64_t seed) {
    if (phi.size() != qv.cells()) throw InvalidArgument("kernel needs one matrix per cell");
    GammaTimeChangeReport r;
    r.source = gamma_norm(GammaKernel{qv, phi, flavor}, n_samples, seed);
    const double total = qv.total();
    if (total == 0.0) return r;
    const TimeGrid s = TimeGrid::uniform(total, s_cells);
    const IncreasingPath cum = qv.cumulative();
    std::vector<Matrix> psi(s.cells());
    for (std::size_t i = 0; i < s.cells(); ++i) {
        const std::size_t c = detail::crossing_cell(cum.values(), 0.5 * (s[i] + s[i + 1]), 0.0);
        psi[i] = c == TimeChange::never ? Matrix::Zero(phi.front().rows(), phi.front().cols()) : phi[c];
    }
    r.transported = gamma_norm(GammaKernel{GridMeasure::lebesgue(s), std::move(psi), flavor}, n_samples, seed + 1);
    return r;
}

} // namespace cylmart
