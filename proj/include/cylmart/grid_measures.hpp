#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cylmart/errors.hpp"

namespace cylmart {

/// Strictly increasing time grid 0 = t_0 < t_1 < ... < t_K = T with K >= 1.
///
/// Cell i (0-based) is the half-open interval (t_i, t_{i+1}].
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw InvalidArgument("time grid needs at least one cell");
        if (points_.front() != 0.0) throw InvalidArgument("time grid must start at 0");
        for (std::size_t i = 1; i < points_.size(); ++i) {
            if (!(points_[i] > points_[i - 1]) || !std::isfinite(points_[i]))
                throw InvalidArgument("time grid not strictly increasing at index " + std::to_string(i));
        }
    }

    /// Uniform grid of `cells` cells on [0, horizon].
    static TimeGrid uniform(double horizon, std::size_t cells) {
        if (cells == 0 || !(horizon > 0.0)) throw InvalidArgument("uniform grid needs cells >= 1 and horizon > 0");
        std::vector<double> pts(cells + 1);
        for (std::size_t i = 0; i <= cells; ++i) pts[i] = horizon * static_cast<double>(i) / static_cast<double>(cells);
        pts.back() = horizon;
        return TimeGrid(std::move(pts));
    }

    std::size_t cells() const noexcept { return points_.size() - 1; }
    double horizon() const noexcept { return points_.back(); }
    double operator[](std::size_t i) const { return points_[i]; }
    double width(std::size_t cell) const { return points_[cell + 1] - points_[cell]; }
    std::span<const double> points() const noexcept { return points_; }

    double max_width() const {
        double w = 0.0;
        for (std::size_t i = 0; i < cells(); ++i) w = std::max(w, width(i));
        return w;
    }

    /// Each cell split into 2^depth equal sub-cells.
    TimeGrid refined(unsigned depth) const {
        const std::size_t parts = std::size_t{1} << depth;
        std::vector<double> pts;
        pts.reserve(cells() * parts + 1);
        pts.push_back(0.0);
        for (std::size_t i = 0; i < cells(); ++i) {
            for (std::size_t j = 1; j < parts; ++j)
                pts.push_back(points_[i] + width(i) * static_cast<double>(j) / static_cast<double>(parts));
            pts.push_back(points_[i + 1]);
        }
        return TimeGrid(std::move(pts));
    }

    /// Index of the cell containing t, with t in (t_i, t_{i+1}] mapping to i and t = 0 to cell 0.
    std::size_t cell_of(double t) const {
        auto it = std::lower_bound(points_.begin() + 1, points_.end(), t);
        if (it == points_.end()) return cells() - 1;
        return static_cast<std::size_t>(it - points_.begin()) - 1;
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    std::vector<double> points_;
};

class GridMeasure;

/// Nondecreasing path F sampled at the grid points, with F(0) >= 0.
class IncreasingPath {
public:
    IncreasingPath(TimeGrid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.size() != grid_.points().size()) throw InvalidArgument("path length does not match grid");
        if (values_.front() < 0.0) throw InvalidArgument("path must start nonnegative");
        for (std::size_t i = 1; i < values_.size(); ++i)
            if (values_[i] < values_[i - 1]) throw MonotonicityError(i, "path decreases");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double terminal() const { return values_.back(); }

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

/// Nonnegative measure on (0, T] given by its mass on each grid cell; no atom at 0.
class GridMeasure {
public:
    GridMeasure(TimeGrid grid, std::vector<double> increments)
        : grid_(std::move(grid)), increments_(std::move(increments)) {
        if (increments_.size() != grid_.cells()) throw InvalidArgument("increment count does not match grid cells");
        for (std::size_t i = 0; i < increments_.size(); ++i)
            if (!(increments_[i] >= 0.0) || !std::isfinite(increments_[i]))
                throw InvalidArgument("negative or non-finite increment at cell " + std::to_string(i));
    }

    static GridMeasure zero(const TimeGrid& grid) { return GridMeasure(grid, std::vector<double>(grid.cells(), 0.0)); }

    /// Lebesgue measure on the grid, scaled by `density`.
    static GridMeasure lebesgue(const TimeGrid& grid, double density = 1.0) {
        std::vector<double> inc(grid.cells());
        for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = density * grid.width(i);
        return GridMeasure(grid, std::move(inc));
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::span<const double> increments() const noexcept { return increments_; }
    double operator[](std::size_t cell) const { return increments_[cell]; }
    std::size_t cells() const noexcept { return increments_.size(); }

    double total() const { return std::accumulate(increments_.begin(), increments_.end(), 0.0); }
    double max_increment() const { return *std::max_element(increments_.begin(), increments_.end()); }

    /// Distribution function F(t_j) = mu((0, t_j]) at every grid point.
    IncreasingPath cumulative() const {
        std::vector<double> v(grid_.points().size(), 0.0);
        for (std::size_t i = 0; i < increments_.size(); ++i) v[i + 1] = v[i] + increments_[i];
        return IncreasingPath(grid_, std::move(v));
    }

    /// Mass of cells [first, last) in grid index terms.
    double mass(std::size_t first, std::size_t last) const {
        double s = 0.0;
        for (std::size_t i = first; i < last; ++i) s += increments_[i];
        return s;
    }

    /// Mass spread uniformly over 2^depth sub-cells of each cell.
    GridMeasure refined(unsigned depth) const {
        const std::size_t parts = std::size_t{1} << depth;
        const double scale = std::ldexp(1.0, -static_cast<int>(depth));
        std::vector<double> inc;
        inc.reserve(cells() * parts);
        for (double m : increments_) inc.insert(inc.end(), parts, m * scale);
        return GridMeasure(grid_.refined(depth), std::move(inc));
    }

    friend bool operator==(const GridMeasure&, const GridMeasure&) = default;

private:
    TimeGrid grid_;
    std::vector<double> increments_;
};

/// Absolute-continuity violation: nu charges cells that mu does not.
class AbsoluteContinuityError : public Error {
public:
    explicit AbsoluteContinuityError(std::vector<std::size_t> cells)
        : Error(describe(cells)), cells_(std::move(cells)) {}
    const std::vector<std::size_t>& cells() const noexcept { return cells_; }

private:
    static std::string describe(const std::vector<std::size_t>& cells) {
        std::string s = "numerator charges cells of zero denominator mass:";
        for (auto c : cells) s += " " + std::to_string(c);
        return s;
    }
    std::vector<std::size_t> cells_;
};

/// Cell increments F(t_{i+1}) - F(t_i) of a nondecreasing path.
inline GridMeasure measure_from_increasing(const IncreasingPath& path) {
    const auto v = path.values();
    std::vector<double> inc(v.size() - 1);
    for (std::size_t i = 0; i + 1 < v.size(); ++i) inc[i] = v[i + 1] - v[i];
    return GridMeasure(path.grid(), std::move(inc));
}

/// Same as above for raw samples; throws MonotonicityError naming the first decrease.
inline GridMeasure measure_from_increasing(const TimeGrid& grid, std::span<const double> values) {
    return measure_from_increasing(IncreasingPath(grid, std::vector<double>(values.begin(), values.end())));
}

namespace detail {

inline void require_common_grid(std::span<const GridMeasure> ms) {
    if (ms.empty()) throw InvalidArgument("empty measure family");
    for (const auto& m : ms)
        if (!(m.grid() == ms.front().grid())) throw InvalidArgument("measures live on different grids");
}

/// Sum of 2^k equal-width blocks by pairwise reduction, exact for equal summands.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() == 1) return xs[0];
    const std::size_t h = xs.size() / 2;
    return pairwise_sum(xs.first(h)) + pairwise_sum(xs.subspan(h));
}

} // namespace detail

/// Least measure dominating every input on the partition obtained by splitting each cell
/// into 2^refine sub-cells, reported on the original grid.
///
/// On a finite partition the least dominating measure is the atom-wise maximum; the
/// supremum over sub-partitions of a set is attained at the finest partition.
inline GridMeasure sup_measures(std::span<const GridMeasure> ms, unsigned refine = 0) {
    detail::require_common_grid(ms);
    const TimeGrid& grid = ms.front().grid();
    const std::size_t parts = std::size_t{1} << refine;
    std::vector<GridMeasure> fine;
    fine.reserve(ms.size());
    for (const auto& m : ms) fine.push_back(m.refined(refine));

    std::vector<double> atom(parts);
    std::vector<double> out(grid.cells());
    for (std::size_t i = 0; i < grid.cells(); ++i) {
        for (std::size_t j = 0; j < parts; ++j) {
            double best = 0.0;
            for (const auto& f : fine) best = std::max(best, f[i * parts + j]);
            atom[j] = best;
        }
        out[i] = detail::pairwise_sum(atom);
    }
    return GridMeasure(grid, std::move(out));
}

inline GridMeasure sup_measures(const std::vector<GridMeasure>& ms, unsigned refine = 0) {
    return sup_measures(std::span<const GridMeasure>(ms), refine);
}

/// Measure with density max_j f_j against `base`; each density is cell-constant.
inline GridMeasure sup_density_measures(const std::vector<std::vector<double>>& densities, const GridMeasure& base) {
    if (densities.empty()) throw InvalidArgument("empty density family");
    for (const auto& f : densities) {
        if (f.size() != base.cells()) throw InvalidArgument("density length does not match grid cells");
        for (std::size_t i = 0; i < f.size(); ++i)
            if (!(f[i] >= 0.0)) throw InvalidArgument("negative density at cell " + std::to_string(i));
    }
    std::vector<double> out(base.cells());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double best = 0.0;
        for (const auto& f : densities) best = std::max(best, f[i]);
        out[i] = best * base[i];
    }
    return GridMeasure(base.grid(), std::move(out));
}

/// Supremum of the first n measures of the family.
inline GridMeasure partial_sup(std::span<const GridMeasure> ms, std::size_t n, unsigned refine = 0) {
    if (n < 1 || n > ms.size()) throw InvalidArgument("partial_sup: n out of range");
    return sup_measures(ms.first(n), refine);
}

inline GridMeasure partial_sup(const std::vector<GridMeasure>& ms, std::size_t n, unsigned refine = 0) {
    return partial_sup(std::span<const GridMeasure>(ms), n, refine);
}

/// Backward window quotient num((t-e, t]) / den((t-e, t]) with 0/0 = 0.
///
/// Entry i is the quotient at grid point t_{i+1}, i.e. over the `window` cells ending with
/// cell i (clipped at 0). Numerator increments may be signed.
inline std::vector<double> window_quotient(std::span<const double> num, std::span<const double> den,
                                           std::size_t window) {
    if (window < 1) throw InvalidArgument("window must be at least one cell");
    if (num.size() != den.size()) throw InvalidArgument("window_quotient: length mismatch");
    std::vector<double> out(num.size());
    for (std::size_t i = 0; i < num.size(); ++i) {
        const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
        double a = 0.0, b = 0.0;
        for (std::size_t j = first; j <= i; ++j) {
            a += num[j];
            b += den[j];
        }
        out[i] = b > 0.0 ? a / b : 0.0;
    }
    return out;
}

/// Discrete Radon-Nikodym derivative d nu / d mu by backward windows of `window` cells.
inline std::vector<double> radon_nikodym(const GridMeasure& nu, const GridMeasure& mu, std::size_t window) {
    if (!(nu.grid() == mu.grid())) throw InvalidArgument("measures live on different grids");
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < mu.cells(); ++i)
        if (mu[i] == 0.0 && nu[i] > 0.0) bad.push_back(i);
    if (!bad.empty()) throw AbsoluteContinuityError(std::move(bad));
    return window_quotient(nu.increments(), mu.increments(), window);
}

} // namespace cylmart
