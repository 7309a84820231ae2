#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cylmart/errors.hpp"
#include "cylmart/gamma_norms.hpp"
#include "cylmart/grid_measures.hpp"
#include "cylmart/harness.hpp"
#include "cylmart/ito_bdg.hpp"
#include "cylmart/mart_sim.hpp"
#include "cylmart/operator_core.hpp"
#include "cylmart/report.hpp"
#include "cylmart/rng.hpp"
#include "cylmart/see_solver.hpp"
#include "cylmart/stoch_integral.hpp"
#include "cylmart/time_change.hpp"

namespace cylmart {

/// One registered experiment: config defaults ({n_paths, grid, params}) and the body that
/// fills a report.
struct Experiment {
    std::string name;
    std::string summary;
    std::vector<std::string> criteria;
    json defaults;
    std::function<void(const RunConfig&, Recorder&)> body;
};

namespace experiments {

template <class T>
T param(const RunConfig& c, const char* key) {
    try {
        return c.params.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("parameter '") + key + "' is missing or has the wrong type");
    }
}

inline std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double draw_real(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Eigen::Index draw_dim(std::mt19937_64& rng, std::size_t hi) { return static_cast<Eigen::Index>(draw(rng, 1, hi)); }

inline Matrix random_psd(std::mt19937_64& rng, Eigen::Index d, Eigen::Index rank) {
    if (rank == 0) return Matrix::Zero(d, d);
    const Matrix a = gaussian_matrix(rng, d, rank);
    return a * a.transpose();
}

inline Matrix random_orthonormal(std::mt19937_64& rng, Eigen::Index d, Eigen::Index k) {
    if (k == 0) return Matrix::Zero(d, 0);
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, d, k));
    return qr.householderQ() * Matrix::Identity(d, k);
}

/// Coefficient scaled by 1 + tanh(driver sum) / 2 on each cell.
inline NoiseSpec adapted_scaling(const Matrix& s, const std::string& label, std::optional<Matrix> q = std::nullopt) {
    return NoiseSpec::adapted(
        static_cast<std::size_t>(s.rows()), static_cast<std::size_t>(s.cols()),
        [s](double, std::size_t cell, const DriverPast& past) { return Matrix((1.0 + 0.5 * std::tanh(past.at(cell).sum())) * s); },
        label, std::move(q));
}

/// Brute-force supremum over every segmentation of the atoms [first, last).
inline double best_split(const std::vector<GridMeasure>& ms, std::size_t first, std::size_t last) {
    if (first == last) return 0.0;
    double best = 0.0;
    for (std::size_t cut = first + 1; cut <= last; ++cut) {
        double seg = 0.0;
        for (const auto& m : ms) seg = std::max(seg, m.mass(first, cut));
        best = std::max(best, seg + best_split(ms, cut, last));
    }
    return best;
}

/// Grid with cell widths k / 8, k in 1..8.
inline TimeGrid dyadic_grid(std::mt19937_64& rng, std::size_t cells) {
    std::vector<double> pts{0.0};
    for (std::size_t i = 0; i < cells; ++i) pts.push_back(pts.back() + static_cast<double>(draw(rng, 1, 8)) / 8.0);
    return TimeGrid(pts);
}

inline std::vector<double> dyadic_values(std::mt19937_64& rng, std::size_t n, std::size_t lo, std::size_t hi, double unit) {
    std::vector<double> out(n);
    for (auto& x : out) x = static_cast<double>(draw(rng, lo, hi)) / unit;
    return out;
}

inline void supmeas(const RunConfig& c, Recorder& r) {
    const std::size_t max_cells = c.grid;
    const auto trials = param<std::size_t>(c, "trials");
    const auto max_family = param<std::size_t>(c, "max_family");
    const auto brute_refine = param<unsigned>(c, "brute_refine");

    r.start();
    auto rng = substream(c.seed, 0, 0x5a9);
    std::size_t instances = 0, mismatches = 0;
    double worst = 0.0;
    Series& s1 = r.series("supmeas_oracle", {"cells", "instances", "mismatches"});
    for (std::size_t cells = 1; cells <= max_cells; ++cells) {
        std::size_t row_instances = 0, row_mismatches = 0;
        for (std::size_t fam_size = 1; fam_size <= max_family; ++fam_size) {
            for (std::size_t t = 0; t < trials; ++t) {
                const TimeGrid grid = dyadic_grid(rng, cells);
                std::vector<GridMeasure> fam;
                for (std::size_t j = 0; j < fam_size; ++j) fam.emplace_back(grid, dyadic_values(rng, cells, 0, 64, 64.0));
                bool ok = true;
                const GridMeasure coarse = sup_measures(fam, 0);
                for (unsigned depth = 0; depth <= brute_refine + 1; ++depth) {
                    const GridMeasure s = sup_measures(fam, depth);
                    for (std::size_t i = 0; i < cells; ++i) {
                        worst = std::max(worst, std::abs(s[i] - coarse[i]));
                        ok = ok && s[i] == coarse[i];
                    }
                    if (depth > brute_refine) continue;
                    std::vector<GridMeasure> fine;
                    for (const auto& m : fam) fine.push_back(m.refined(depth));
                    const std::size_t parts = std::size_t{1} << depth;
                    for (std::size_t a = 0; a < cells; ++a) {
                        for (std::size_t b = a + 1; b <= cells; ++b) {
                            const double brute = best_split(fine, a * parts, b * parts);
                            const double got = s.mass(a, b);
                            worst = std::max(worst, std::abs(brute - got));
                            ok = ok && brute == got;
                        }
                    }
                }
                ++instances;
                ++row_instances;
                if (!ok) {
                    ++mismatches;
                    ++row_mismatches;
                }
            }
        }
        s1.rows.push_back({static_cast<double>(cells), static_cast<double>(row_instances), static_cast<double>(row_mismatches)});
    }
    r.metric("supmeas.oracle_instances", static_cast<double>(instances));
    r.metric("supmeas.oracle_mismatches", static_cast<double>(mismatches));
    r.metric("supmeas.oracle_max_abs_diff", worst);
    r.criterion("C1", "sup_measures equals brute-force segmentation supremum", mismatches == 0,
                std::to_string(instances) + " families, " + std::to_string(mismatches) + " mismatches, max |diff| " + fmt(worst));
    r.stop("C1");

    r.start();
    const auto n_density = param<std::size_t>(c, "density_instances");
    auto rng2 = substream(c.seed, 1, 0x5a9);
    std::size_t bad = 0;
    double worst2 = 0.0;
    for (std::size_t inst = 0; inst < n_density; ++inst) {
        const std::size_t cells = draw(rng2, 1, max_cells);
        const TimeGrid grid = dyadic_grid(rng2, cells);
        const GridMeasure base(grid, dyadic_values(rng2, cells, 0, 64, 64.0));
        const std::size_t nf = draw(rng2, 1, max_family);
        std::vector<std::vector<double>> dens;
        std::vector<GridMeasure> integrated;
        for (std::size_t j = 0; j < nf; ++j) {
            dens.push_back(dyadic_values(rng2, cells, 0, 16, 4.0));
            std::vector<double> inc(cells);
            for (std::size_t i = 0; i < cells; ++i) inc[i] = dens.back()[i] * base[i];
            integrated.emplace_back(grid, std::move(inc));
        }
        const GridMeasure lhs = sup_density_measures(dens, base);
        bool ok = true;
        for (unsigned depth : {0u, 2u}) {
            const GridMeasure rhs = sup_measures(integrated, depth);
            for (std::size_t i = 0; i < cells; ++i) {
                worst2 = std::max(worst2, std::abs(lhs[i] - rhs[i]));
                ok = ok && lhs[i] == rhs[i];
            }
        }
        if (!ok) ++bad;
    }
    r.metric("supmeas.density_instances", static_cast<double>(n_density));
    r.metric("supmeas.density_mismatches", static_cast<double>(bad));
    r.metric("supmeas.density_max_abs_diff", worst2);
    r.criterion("C2", "density supremum equals supremum of integrated measures", bad == 0 && n_density > 0,
                std::to_string(n_density) + " instances, " + std::to_string(bad) + " mismatches");
    r.stop("C2");
}

/// Constant coefficient by name: identity, diagonal (1 down to 1/2) or random.
inline Matrix named_sigma(const std::string& name, Eigen::Index d, std::uint64_t seed) {
    if (name == "identity") return Matrix::Identity(d, d);
    if (name == "diagonal") {
        Vector v(d);
        for (Eigen::Index i = 0; i < d; ++i) v(i) = 1.0 - 0.5 * static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(1, d - 1));
        return v.asDiagonal();
    }
    if (name == "random") {
        auto rng = substream(seed, 0, 0x516);
        return gaussian_matrix(rng, d, d) / std::sqrt(static_cast<double>(d));
    }
    throw InvalidArgument("unknown sigma '" + name + "' (identity, diagonal, random)");
}

inline void qv(const RunConfig& c, Recorder& r) {
    const auto d = static_cast<Eigen::Index>(param<std::size_t>(c, "d"));
    const auto horizon = param<double>(c, "horizon");
    const auto sigma_name = param<std::string>(c, "sigma");
    const auto samples = static_cast<Eigen::Index>(param<std::size_t>(c, "sphere_samples"));
    const auto depth = param<unsigned>(c, "depth");
    const TimeGrid grid = TimeGrid::uniform(horizon, c.grid);

    r.start();
    const GridMeasure unit = qv_exact(NoiseSpec::constant(Matrix::Identity(d, d), "I"), grid);
    const IncreasingPath cum = unit.cumulative();
    double grid_err = 0.0;
    for (std::size_t j = 0; j <= grid.cells(); ++j) grid_err = std::max(grid_err, std::abs(cum[j] - grid[j]));
    for (std::size_t i = 0; i < grid.cells(); ++i) grid_err = std::max(grid_err, std::abs(unit[i] - grid.width(i)));
    r.metric("qv.identity_terminal", cum.terminal());
    r.metric("qv.identity_max_error", grid_err);

    const Matrix sigma = named_sigma(sigma_name, d, c.seed);
    const MartEnsemble ens = simulate(NoiseSpec::constant(sigma, sigma_name), grid, c.n_paths, c.seed);
    const double exact = ens.bracket(0).total();
    std::vector<unsigned> depths;
    for (unsigned k = depth >= 2 ? depth - 2 : 0; k <= depth; ++k) depths.push_back(k);
    const auto est = qv_partition_estimate(ens, samples, depths, c.seed);
    Series& ladder = r.series("partition_ladder", {"depth", "estimate", "exact", "rel_error"});
    double rel = 0.0;
    for (std::size_t k = 0; k < depths.size(); ++k) {
        const double e = est[0][k].terminal();
        rel = std::abs(e - exact) / exact;
        ladder.rows.push_back({static_cast<double>(depths[k]), e, exact, rel});
    }
    r.metric("qv.terminal", exact);
    r.metric("qv.partition_estimate", est[0].back().terminal());
    r.metric("qv.partition_rel_error", rel);
    r.criterion("C3", "Brownian quadratic variation and partition estimate", grid_err == 0.0 && rel <= 0.02,
                "[[M]]_T = " + fmt(cum.terminal(), 17) + " (T = " + fmt(horizon) + "), grid error " + fmt(grid_err) +
                    "; sigma " + sigma_name + " estimate rel error " + fmt(rel) + " at depth " + std::to_string(depth));
    r.stop("C3");

    r.start();
    const auto instances = param<std::size_t>(c, "instances");
    const auto window = param<std::size_t>(c, "window");
    double norm_dev = 0.0, emp_dev = 0.0;
    std::size_t off_support = 0, support_cells = 0, emp_instances = 0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        auto rng = substream(c.seed, inst, 0x9e1);
        const Eigen::Index dc = draw_dim(rng, 5), dd = draw_dim(rng, 5);
        Matrix s0 = gaussian_matrix(rng, dc, dd);
        if (inst % 3 == 0) s0 = gaussian_matrix(rng, dc, 1) * gaussian_matrix(rng, 1, dd);
        const Matrix s1 = gaussian_matrix(rng, dc, dd);
        const Matrix q = random_psd(rng, dd, draw_dim(rng, static_cast<std::size_t>(dd)));
        const std::size_t kind = inst % 4;
        std::vector<std::pair<OperatorProcess, GridMeasure>> cases;
        if (kind == 3) {
            const MartEnsemble e = simulate(adapted_scaling(s0, "adapted", q), grid, 4, substream(c.seed, inst, 0x9e2)());
            for (std::size_t p = 0; p < e.n_paths(); ++p) cases.emplace_back(qm_operator(e, p), e.bracket(p));
        } else {
            NoiseSpec spec = kind == 0 ? NoiseSpec::constant(s0, "const", q)
                             : kind == 1
                                 ? NoiseSpec::deterministic(static_cast<std::size_t>(dc), static_cast<std::size_t>(dd),
                                                            [s0, s1, horizon](double t) {
                                                                return t < 0.25 * horizon ? Matrix(Matrix::Zero(s0.rows(), s0.cols()))
                                                                                          : Matrix(s0 + t * s1);
                                                            },
                                                            "gap", q)
                                 : NoiseSpec::deterministic(static_cast<std::size_t>(dc), static_cast<std::size_t>(dd),
                                                            [s0](double t) { return Matrix((1.0 + t) * s0); }, "ramp", q);
            const GridMeasure qvm = qv_exact(spec, grid);
            cases.emplace_back(qm_operator(spec, grid), qvm);
            if (kind == 0) {
                ++emp_instances;
                const OperatorProcess emp = qm_empirical(am_operator(spec, grid), qvm, window);
                for (std::size_t i = 0; i < grid.cells(); ++i)
                    if (qvm[i] > 0.0) emp_dev = std::max(emp_dev, (emp.matrices[i] - cases.back().first.matrices[i]).cwiseAbs().maxCoeff());
            }
        }
        for (const auto& [qm, qvm] : cases) {
            for (std::size_t i = 0; i < grid.cells(); ++i) {
                if (qvm[i] > 0.0) {
                    ++support_cells;
                    norm_dev = std::max(norm_dev, std::abs(detail::sym_norm(qm.matrices[i]) - 1.0));
                } else if (qm.matrices[i].cwiseAbs().maxCoeff() != 0.0) {
                    ++off_support;
                }
            }
        }
    }
    r.metric("qm.norm_max_deviation", norm_dev);
    r.metric("qm.support_cells", static_cast<double>(support_cells));
    r.metric("qm.nonzero_off_support", static_cast<double>(off_support));
    r.metric("qm.empirical_max_deviation", emp_dev);
    r.criterion("C5", "Q_M has unit norm on the support of [[M]]", norm_dev <= 1e-9 && off_support == 0 && emp_dev <= 1e-8,
                std::to_string(instances) + " instances, max | ||Q_M|| - 1 | " + fmt(norm_dev) + " over " +
                    std::to_string(support_cells) + " cells; empirical deviation " + fmt(emp_dev) + " on " +
                    std::to_string(emp_instances) + " constant instances");
    r.stop("C5");
}

inline void countex(const RunConfig& c, Recorder& r) {
    r.start();
    const auto n_param = param<std::size_t>(c, "n");
    const auto panel = static_cast<Eigen::Index>(param<std::size_t>(c, "panel"));
    const std::vector<std::size_t> ns = n_param == 0 ? std::vector<std::size_t>{4, 8, 16, 32} : std::vector<std::size_t>{n_param};
    Series& s = r.series("countex", {"n", "qv_terminal", "max_panel_bracket"});
    bool ok = true;
    std::string detail;
    for (std::size_t n : ns) {
        const MartEnsemble ens = simulate(countex_spec(n), TimeGrid::uniform(1.0, c.grid * n), c.n_paths, c.seed, panel);
        const double total = ens.bracket(0).total();
        double top = 0.0;
        for (Eigen::Index j = 0; j < ens.panel().cols(); ++j)
            top = std::max(top, ens.direction_bracket(0, ens.cells(), ens.panel().col(j)));
        const auto dn = static_cast<Eigen::Index>(n);
        for (Eigen::Index k = 0; k < dn; ++k) top = std::max(top, ens.direction_bracket(0, ens.cells(), Vector::Unit(dn, k)));
        ok = ok && total == static_cast<double>(n) && top <= 1.0 + 1e-9;
        s.rows.push_back({static_cast<double>(n), total, top});
        r.metric("countex.n" + std::to_string(n) + ".qv_terminal", total);
        r.metric("countex.n" + std::to_string(n) + ".max_panel_bracket", top);
        detail += (detail.empty() ? "" : "; ") + std::string("n=") + std::to_string(n) + ": [[M]]_1 = " + fmt(total, 17) +
                  ", max [Mh]_1 = " + fmt(top, 12);
    }
    r.criterion("C4", "truncated non-summable family diverges in [[M]]", ok, detail);
    r.stop("C4");
}

inline void ito(const RunConfig& c, Recorder& r) {
    const auto instances = param<std::size_t>(c, "instances");
    const auto max_dim = param<std::size_t>(c, "max_dim");
    const TimeGrid grid = TimeGrid::uniform(1.0, c.grid);

    r.start();
    Series& iso = r.series("isometry", {"instance", "d_drive", "d_cyl", "m", "lhs", "rhs", "z"});
    double worst_z = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        auto rng = substream(c.seed, inst, 0x170);
        const Eigen::Index dd = draw_dim(rng, max_dim), dc = draw_dim(rng, max_dim), m = draw_dim(rng, max_dim);
        const Matrix s0 = gaussian_matrix(rng, dc, dd) / std::sqrt(static_cast<double>(dd));
        const Matrix s1 = gaussian_matrix(rng, dc, dd) / std::sqrt(static_cast<double>(dd));
        const Matrix phi0 = gaussian_matrix(rng, m, dc) / std::sqrt(static_cast<double>(dc));
        const Vector h = gaussian_vector(rng, dc);
        NoiseSpec spec;
        switch (inst % 4) {
        case 0: spec = NoiseSpec::constant(s0, "const"); break;
        case 1:
            spec = NoiseSpec::deterministic(static_cast<std::size_t>(dc), static_cast<std::size_t>(dd),
                                            [s0, s1](double t) { return Matrix(s0 + t * s1); }, "linear");
            break;
        case 2: spec = adapted_scaling(s0, "adapted"); break;
        default: spec = NoiseSpec::constant(s0, "coloured", random_psd(rng, dd, dd) / static_cast<double>(dd)); break;
        }
        const MartEnsemble ens = simulate(spec, grid, c.n_paths, substream(c.seed, inst, 0x171)());
        const IntegrandProcess phi =
            inst % 2 == 0 ? IntegrandProcess::constant(phi0, grid.cells())
                          : IntegrandProcess::adapted(m, dc, grid.cells(), [&ens, phi0, h](std::size_t p, std::size_t i) {
                                return Matrix(std::cos(ens.eval(p, i, h)) * phi0);
                            });
        const IsometryReport rep = ito_isometry(phi, ens);
        worst_z = std::max(worst_z, std::abs(rep.z));
        iso.rows.push_back({static_cast<double>(inst), static_cast<double>(dd), static_cast<double>(dc), static_cast<double>(m),
                            rep.lhs.value, rep.rhs.value, rep.z});
        r.mc("ito.isometry." + std::to_string(inst) + ".lhs", rep.lhs.value, rep.lhs.stderr_);
        r.mc("ito.isometry." + std::to_string(inst) + ".z", rep.z, 1.0);
    }
    r.metric("ito.isometry_max_abs_z", worst_z, 0.0, false);
    r.criterion("C6", "Ito isometry on random Hilbert instances", worst_z <= 3.0 && instances > 0,
                std::to_string(instances) + " instances at " + std::to_string(c.n_paths) + " paths, max |z| " + fmt(worst_z));
    r.stop("C6");

    r.start();
    auto rng = substream(c.seed, 0, 0x172);
    double linear_max = 0.0;
    {
        const Matrix s = gaussian_matrix(rng, 3, 3) / std::sqrt(3.0);
        const MartEnsemble ens = simulate(NoiseSpec::constant(s, "const"), grid, c.n_paths, substream(c.seed, 1, 0x172)());
        std::vector<double> a(grid.cells() + 1);
        for (std::size_t j = 0; j <= grid.cells(); ++j) a[j] = grid[j] * grid[j];
        const IncreasingPath path(grid, a);
        const auto psi = IntegrandProcess::constant(gaussian_vector(rng, 2), grid.cells());
        const auto phi = IntegrandProcess::constant(gaussian_matrix(rng, 2, 3), grid.cells());
        const auto rep = ito_residual(TestFunction::linear(gaussian_vector(rng, 2)), gaussian_vector(rng, 2), &psi, &path, phi, ens);
        linear_max = std::max(linear_max, rep.max_abs);
    }
    {
        const MartEnsemble ens = simulate(adapted_scaling(Matrix::Ones(1, 1), "adapted"), grid, c.n_paths, substream(c.seed, 2, 0x172)());
        const auto phi = IntegrandProcess::adapted(1, 1, grid.cells(), [&ens](std::size_t p, std::size_t i) {
            const double x = ens.eval(p, i, Vector::Ones(1));
            return Matrix::Constant(1, 1, 1.0 + x * x);
        });
        const auto rep = ito_residual(TestFunction::linear(Vector::Constant(1, -1.5)), Vector::Constant(1, 0.3), nullptr, nullptr, phi, ens);
        linear_max = std::max(linear_max, rep.max_abs);
    }
    r.metric("ito.linear_max_residual", linear_max);

    struct Case {
        std::string name;
        NoiseSpec spec;
    };
    const std::vector<Case> cases{{"brownian", NoiseSpec::constant(Matrix::Ones(1, 1), "W")},
                                  {"adapted", adapted_scaling(Matrix::Ones(1, 1), "adapted")}};
    bool mean_ok = true;
    std::string mean_detail;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const MartEnsemble ens = simulate(cases[k].spec, grid, c.n_paths, substream(c.seed, 3 + k, 0x172)());
        const auto rep = ito_residual(TestFunction::squared_norm(1), Vector::Zero(1), nullptr, nullptr,
                                      IntegrandProcess::constant(Matrix::Ones(1, 1), grid.cells()), ens);
        const double z = rep.mean_terminal.stderr_ > 0.0 ? rep.mean_terminal.value / rep.mean_terminal.stderr_ : 0.0;
        mean_ok = mean_ok && std::abs(z) <= 3.0;
        r.mc("ito.square." + cases[k].name + ".mean_residual", rep.mean_terminal.value, rep.mean_terminal.stderr_);
        mean_detail += (mean_detail.empty() ? "" : ", ") + cases[k].name + " z " + fmt(z, 3);
    }

    const auto ladder = param<std::vector<std::size_t>>(c, "ladder");
    Series& lad = r.series("ito_ladder", {"cells", "dt", "max_abs", "mean_abs"});
    std::vector<double> dts, worst, mean_abs;
    for (std::size_t k : ladder) {
        const TimeGrid g = TimeGrid::uniform(1.0, k);
        const MartEnsemble ens = simulate(NoiseSpec::constant(Matrix::Ones(1, 1), "W"), g, c.n_paths, substream(c.seed, k, 0x173)());
        const auto rep = ito_residual(TestFunction::squared_norm(1), Vector::Zero(1), nullptr, nullptr,
                                      IntegrandProcess::constant(Matrix::Ones(1, 1), k), ens);
        dts.push_back(g.max_width());
        worst.push_back(rep.max_abs);
        mean_abs.push_back(rep.mean_abs);
        lad.rows.push_back({static_cast<double>(k), g.max_width(), rep.max_abs, rep.mean_abs});
    }
    const double slope = ladder.size() >= 2 ? loglog_slope(dts, worst) : 0.0;
    r.metric("ito.ladder_order", slope, 0.0, false);
    const bool ok = linear_max <= 1e-10 && mean_ok && slope >= 0.4;
    r.criterion("C10", "Ito formula residuals", ok,
                "linear max residual " + fmt(linear_max) + "; squared norm " + mean_detail + "; ladder order " + fmt(slope, 3));
    r.stop("C10");
}

inline BdgInstance bdg_instance(std::uint64_t panel_seed, std::size_t inst, std::size_t cells) {
    auto rng = substream(panel_seed, inst, 0xbd9);
    const Eigen::Index dc = draw_dim(rng, 4), dd = draw_dim(rng, 4), m = draw_dim(rng, 4);
    const double horizons[] = {0.5, 1.0, 2.0};
    const double horizon = horizons[draw(rng, 0, 2)];
    const Matrix s0 = gaussian_matrix(rng, dc, dd) / std::sqrt(static_cast<double>(dd));
    const Matrix s1 = gaussian_matrix(rng, dc, dd) / std::sqrt(static_cast<double>(dd));
    const Matrix phi0 = gaussian_matrix(rng, m, dc), phi1 = gaussian_matrix(rng, m, dc);
    const auto udc = static_cast<std::size_t>(dc), udd = static_cast<std::size_t>(dd);
    NoiseSpec spec = inst % 3 == 0   ? NoiseSpec::constant(s0, "const")
                     : inst % 3 == 1 ? NoiseSpec::deterministic(udc, udd, [s0](double t) { return Matrix((1.0 + t) * s0); }, "ramp")
                                     : NoiseSpec::deterministic(udc, udd, [s0, s1](double t) { return Matrix(s0 + 0.5 * t * s1); }, "linear");
    std::vector<Matrix> phi(cells);
    for (std::size_t i = 0; i < cells; ++i)
        phi[i] = inst % 2 == 0 ? phi0 : Matrix(phi0 + (static_cast<double>(i) / static_cast<double>(cells)) * phi1);
    return {"panel" + std::to_string(inst), std::move(spec), TimeGrid::uniform(horizon, cells), IntegrandProcess::deterministic(std::move(phi))};
}

inline void bdg(const RunConfig& c, Recorder& r) {
    r.start();
    const auto instances = param<std::size_t>(c, "instances");
    const auto ps = param<std::vector<double>>(c, "ps");
    const auto lp = param<double>(c, "lp");
    const auto gamma_samples = param<std::size_t>(c, "gamma_samples");
    const auto panel_seed = param<std::uint64_t>(c, "panel_seed");
    const auto alt_offset = param<std::uint64_t>(c, "alt_seed_offset");
    const auto max_width = param<double>(c, "max_width");
    const auto c_tol = param<double>(c, "c_tolerance");

    std::vector<BdgInstance> panel;
    for (std::size_t i = 0; i < instances; ++i) panel.push_back(bdg_instance(panel_seed, i, c.grid));
    const std::vector<NormFlavor> flavors{NormFlavor::euclidean(), NormFlavor::lp(lp)};
    const auto main = bdg_ratio_panel(panel, ps, flavors, c.n_paths, c.seed, gamma_samples);
    const auto alt = bdg_ratio_panel(panel, ps, flavors, c.n_paths, c.seed + alt_offset, gamma_samples);

    for (const auto& f : flavors) {
        Series& s = r.series("bdg_panel_" + f.name(), {"instance", "p", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "ratio"});
        for (std::size_t i = 0; i < main.size(); ++i) {
            const auto& rep = main[i];
            if (rep.flavor != f.name()) continue;
            s.rows.push_back({static_cast<double>(i / (ps.size() * flavors.size())), rep.p, rep.lhs.value, rep.lhs.stderr_,
                              rep.rhs.value, rep.rhs.stderr_, rep.ratio});
        }
    }
    const auto b_main = fit_brackets(main), b_alt = fit_brackets(alt);
    Series& bs = r.series("bdg_brackets", {"p", "flavor_p", "lo", "hi", "width", "c", "c_alt", "rel_change"});
    bool ok = !b_main.empty() && b_main.size() == b_alt.size();
    double worst_width = 0.0, worst_rel = 0.0;
    for (std::size_t k = 0; k < std::min(b_main.size(), b_alt.size()); ++k) {
        const auto& a = b_main[k];
        const auto& b = b_alt[k];
        const double rel = std::abs(b.c - a.c) / a.c;
        const double fp = a.flavor == "euclidean" ? 2.0 : lp;
        worst_width = std::max({worst_width, a.width, b.width});
        worst_rel = std::max(worst_rel, rel);
        ok = ok && a.flavor == b.flavor && a.p == b.p && a.count == instances && a.width <= max_width && b.width <= max_width && rel <= c_tol;
        bs.rows.push_back({a.p, fp, a.lo, a.hi, a.width, a.c, b.c, rel});
        const std::string key = "bdg." + a.flavor + ".p" + fmt(a.p);
        r.metric(key + ".width", a.width, 0.0, false);
        r.metric(key + ".c", a.c, 0.0, false);
        r.metric(key + ".c_alt", b.c, 0.0, false);
    }
    r.criterion("C7", "BDG ratio brackets are narrow and seed-stable", ok,
                std::to_string(b_main.size()) + " brackets over " + std::to_string(instances) + " instances, max width " +
                    fmt(worst_width) + ", max relative change of C " + fmt(worst_rel));
    r.stop("C7");
}

inline void timechange(const RunConfig& c, Recorder& r) {
    r.start();
    const auto d = static_cast<Eigen::Index>(param<std::size_t>(c, "d"));
    const auto s_horizon = param<double>(c, "s_horizon");
    const NoiseSpec spec = NoiseSpec::adapted(
        static_cast<std::size_t>(d), static_cast<std::size_t>(d),
        [d](double t, std::size_t cell, const DriverPast& past) {
            if (t >= 0.25 && t < 0.5) return Matrix(Matrix::Zero(d, d));
            return Matrix((1.0 + 0.5 * std::tanh(past.at(cell).sum())) * Matrix::Identity(d, d));
        },
        "adapted-plateau");
    const MartEnsemble ens = simulate(spec, TimeGrid::uniform(1.0, c.grid), c.n_paths, c.seed);
    const TimeChangedEnsemble n = apply_time_change(ens, build_time_changes(ens, s_horizon));
    double worst_excess = 0.0, worst_ratio = 0.0;
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        const auto& tc = n.change(p);
        const double total = ens.bracket(p).total();
        const double mass = ens.bracket(p).max_increment();
        for (std::size_t i = 0; i < tc.s_grid.points().size(); ++i) {
            const double gap = std::abs(n.bracket[p][i] - std::min(tc.s_grid[i], total));
            worst_excess = std::max(worst_excess, gap - mass);
            if (mass > 0.0) worst_ratio = std::max(worst_ratio, gap / mass);
        }
    }
    r.metric("timechange.bracket_max_gap_over_cell_mass", worst_ratio);

    const auto ladder = param<std::vector<std::size_t>>(c, "ladder");
    const auto ladder_paths = param<std::size_t>(c, "ladder_paths");
    const NoiseSpec tv = NoiseSpec::deterministic(1, 1, [](double t) { return Matrix::Constant(1, 1, 0.5 + t * t); }, "tv");
    Series& lad = r.series("dds_ladder", {"cells", "max_cell_mass", "mean_sup_gap", "max_sup_gap"});
    std::vector<double> mass, gap;
    for (std::size_t k : ladder) {
        const MartEnsemble e = simulate(tv, TimeGrid::uniform(1.0, k), ladder_paths, substream(c.seed, k, 0xdd5)());
        const auto tce = apply_time_change(e, build_time_changes(e));
        const auto rep = dds_integral_check(IntegrandProcess::constant(Matrix::Constant(1, 1, 2.0), k), e, tce);
        mass.push_back(rep.max_cell_mass);
        gap.push_back(rep.mean_gap);
        lad.rows.push_back({static_cast<double>(k), rep.max_cell_mass, rep.mean_gap, rep.max_gap});
    }
    const double slope = ladder.size() >= 2 ? loglog_slope(mass, gap) : 0.0;
    bool decreasing = true;
    for (std::size_t k = 1; k < gap.size(); ++k) decreasing = decreasing && gap[k] < gap[k - 1];
    r.metric("timechange.dds_order", slope, 0.0, false);
    r.criterion("C8", "time-change bracket identity and DDS refinement order", worst_excess <= 1e-12 && decreasing && slope >= 0.4,
                std::to_string(ens.n_paths()) + " paths, max gap / cell mass " + fmt(worst_ratio) + "; DDS sup-gap order " + fmt(slope, 3));
    r.stop("C8");
}

inline GridMeasure random_measure(std::mt19937_64& rng, const TimeGrid& grid) {
    std::vector<double> inc(grid.cells());
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = draw_real(rng, 0.0, 2.0) * grid.width(i);
    return GridMeasure(grid, std::move(inc));
}

inline GammaKernel random_kernel(std::mt19937_64& rng, const TimeGrid& grid, std::size_t max_dim, NormFlavor flavor) {
    const Eigen::Index m = draw_dim(rng, max_dim), d = draw_dim(rng, max_dim);
    GammaKernel k{random_measure(rng, grid), {}, flavor};
    for (std::size_t i = 0; i < grid.cells(); ++i) k.matrices.push_back(gaussian_matrix(rng, m, d));
    return k;
}

inline void gamma(const RunConfig& c, Recorder& r) {
    const auto samples = param<std::size_t>(c, "samples");
    const auto max_dim = param<std::size_t>(c, "max_dim");
    const TimeGrid grid = TimeGrid::uniform(1.0, c.grid);
    r.start();

    const auto instances = param<std::size_t>(c, "instances");
    Series& s = r.series("gamma_mc", {"instance", "exact", "estimate", "stderr", "z"});
    double worst_z = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        auto rng = substream(c.seed, inst, 0x6a1);
        const GammaKernel k = random_kernel(rng, grid, max_dim, NormFlavor::euclidean());
        const double exact = gamma_norm_exact_hilbert(k);
        const GammaEstimate e = gamma_norm_mc(k, samples, substream(c.seed, inst, 0x6a2)());
        const double z = e.stderr_ > 0.0 ? (e.value - exact) / e.stderr_ : 0.0;
        worst_z = std::max(worst_z, std::abs(z));
        s.rows.push_back({static_cast<double>(inst), exact, e.value, e.stderr_, z});
    }
    r.metric("gamma.mc_max_abs_z", worst_z, 0.0, false);

    const auto ideal_instances = param<std::size_t>(c, "ideal_instances");
    const std::vector<NormFlavor> flavors{NormFlavor::euclidean(), NormFlavor::lp(1), NormFlavor::lp(3), NormFlavor::lp(4)};
    std::size_t ideal_fail = 0;
    double ideal_slack = std::numeric_limits<double>::infinity();
    for (std::size_t inst = 0; inst < ideal_instances; ++inst) {
        auto rng = substream(c.seed, inst, 0x6a3);
        const NormFlavor f = flavors[inst % flavors.size()];
        const GammaKernel k = random_kernel(rng, grid, max_dim, f);
        Matrix t = gaussian_matrix(rng, draw_dim(rng, max_dim), k.rows());
        Matrix sm = gaussian_matrix(rng, k.cols(), draw_dim(rng, max_dim));
        t /= flavor_operator_norm(t, f) * draw_real(rng, 1.0, 2.0);
        sm /= flavor_operator_norm(sm, NormFlavor::euclidean()) * draw_real(rng, 1.0, 2.0);
        const IdealReport rep = ideal_check(t, k, sm, samples, substream(c.seed, inst, 0x6a4)());
        if (!rep.pass) ++ideal_fail;
        ideal_slack = std::min(ideal_slack, rep.slack / std::max(1e-300, rep.rhs.value));
    }
    r.metric("gamma.ideal_violations", static_cast<double>(ideal_fail));
    r.metric("gamma.ideal_min_relative_slack", ideal_instances ? ideal_slack : 0.0, 0.0, false);

    const auto primitive_instances = param<std::size_t>(c, "primitive_instances");
    const std::vector<NormFlavor> pflavors{NormFlavor::euclidean(), NormFlavor::lp(3), NormFlavor::lp(4)};
    std::size_t prim_fail = 0;
    double prim_ratio = 0.0;
    for (std::size_t inst = 0; inst < primitive_instances; ++inst) {
        auto rng = substream(c.seed, inst, 0x6a5);
        const Eigen::Index m = draw_dim(rng, max_dim);
        std::vector<Vector> psi;
        for (std::size_t i = 0; i < grid.cells(); ++i) psi.push_back(gaussian_vector(rng, m));
        const GridMeasure mu = random_measure(rng, grid);
        const auto rep = primitive_gamma_bound_check(psi, mu, pflavors[inst % pflavors.size()], samples, substream(c.seed, inst, 0x6a6)());
        if (!rep.pass) ++prim_fail;
        if (rep.rhs > 0.0) prim_ratio = std::max(prim_ratio, rep.lhs.value / rep.rhs);
    }
    r.metric("gamma.primitive_violations", static_cast<double>(prim_fail));
    r.metric("gamma.primitive_max_ratio", prim_ratio, 0.0, false);
    r.criterion("C9", "gamma norms: estimator, ideal property, primitive bound",
                worst_z <= 3.0 && ideal_fail == 0 && prim_fail == 0,
                std::to_string(instances) + " MC instances max |z| " + fmt(worst_z) + "; " + std::to_string(ideal_fail) + "/" +
                    std::to_string(ideal_instances) + " ideal violations; " + std::to_string(prim_fail) + "/" +
                    std::to_string(primitive_instances) + " primitive violations (max lhs/rhs " + fmt(prim_ratio) + ")");
    r.stop("C9");
}

inline void kw(const RunConfig& c, Recorder& r) {
    r.start();
    const auto instances = param<std::size_t>(c, "instances");
    const TimeGrid grid = TimeGrid::uniform(1.0, c.grid);
    double worst = std::numeric_limits<double>::infinity();
    std::size_t failures = 0;
    Series& s = r.series("kunita_watanabe", {"instance", "d_drive", "d1", "d2", "worst_slack"});
    for (std::size_t inst = 0; inst < instances; ++inst) {
        auto rng = substream(c.seed, inst, 0x4b3);
        const Eigen::Index dd = draw_dim(rng, 5), d1 = draw_dim(rng, 5), d2 = draw_dim(rng, 5);
        const Matrix q = random_psd(rng, dd, dd) / static_cast<double>(dd) + 0.1 * Matrix::Identity(dd, dd);
        auto make = [&](Eigen::Index dc, std::size_t kind) {
            const Matrix s0 = gaussian_matrix(rng, dc, dd), s1 = gaussian_matrix(rng, dc, dd);
            if (kind == 0) return NoiseSpec::constant(s0, "const", q);
            if (kind == 1)
                return NoiseSpec::deterministic(static_cast<std::size_t>(dc), static_cast<std::size_t>(dd),
                                                [s0, s1](double t) { return Matrix(s0 + t * s1); }, "linear", q);
            return adapted_scaling(s0, "adapted", q);
        };
        const NoiseSpec spec1 = make(d1, inst % 3), spec2 = make(d2, (inst / 3) % 3);
        const std::uint64_t seed = substream(c.seed, inst, 0x4b4)();
        const MartEnsemble m1 = simulate(spec1, grid, c.n_paths, seed), m2 = simulate(spec2, grid, c.n_paths, seed);
        const Matrix f0 = gaussian_matrix(rng, 1, d1), g0 = gaussian_matrix(rng, 1, d2);
        const Vector h = gaussian_vector(rng, d1);
        const IntegrandProcess f =
            inst % 2 == 0 ? IntegrandProcess::constant(f0, grid.cells())
                          : IntegrandProcess::adapted(1, d1, grid.cells(), [&m1, f0, h](std::size_t p, std::size_t i) {
                                return Matrix(std::sin(m1.eval(p, i, h)) * f0);
                            });
        const IntegrandProcess g = IntegrandProcess::constant(g0, grid.cells());
        const CheckReport rep = kunita_watanabe_check(f, g, m1, m2, 1e-9);
        if (!rep.pass) ++failures;
        worst = std::min(worst, rep.worst_slack);
        s.rows.push_back({static_cast<double>(inst), static_cast<double>(dd), static_cast<double>(d1), static_cast<double>(d2), rep.worst_slack});
    }
    r.metric("kw.worst_slack", instances ? worst : 0.0);
    r.metric("kw.failures", static_cast<double>(failures));
    r.criterion("C11", "Kunita-Watanabe inequality holds pathwise", failures == 0 && instances > 0,
                std::to_string(instances) + " instances x " + std::to_string(c.n_paths) + " paths, worst normalized slack " + fmt(worst));
    r.stop("C11");
}

inline SEEProblem see_problem(Matrix a, Drift f, Diffusion g, Vector u0) {
    const Eigen::Index m = a.rows();
    return SEEProblem{std::move(a), std::move(f), std::move(g), [u0](std::size_t) { return u0; }, m};
}

inline void see(const RunConfig& c, Recorder& r) {
    const auto preset = param<std::string>(c, "preset");
    static const std::vector<std::string> presets{"all", "zero", "ode", "ou", "contraction", "localization"};
    if (std::find(presets.begin(), presets.end(), preset) == presets.end())
        throw InvalidArgument("unknown preset '" + preset + "' (all, zero, ode, ou, contraction, localization)");
    const auto want = [&](const char* name) { return preset == "all" || preset == name; };
    PicardOptions opt;
    opt.tol = param<double>(c, "tol");
    const auto noise = [](Eigen::Index d) { return NoiseSpec::constant(Matrix::Identity(d, d), "W"); };

    if (want("zero")) {
        r.start();
        const TimeGrid grid = TimeGrid::uniform(1.0, 32);
        const MartEnsemble ens = simulate(noise(2), grid, 4, c.seed);
        const Vector u0 = (Vector(2) << 1.0, 2.0).finished();
        const auto flat = picard_solve(see_problem(Matrix::Zero(2, 2), make_drift("zero", 2, 0, 0), make_diffusion("zero", 2, 2, 0), u0), ens, opt);
        bool identical = flat.diagnostics.converged;
        for (const auto& u : flat.u)
            for (Eigen::Index j = 0; j < u.cols(); ++j) identical = identical && (u.col(j).array() == u0.array()).all();
        const Matrix a = (Vector(2) << -1.0, -0.25).finished().asDiagonal();
        const auto orbit = picard_solve(see_problem(a, make_drift("zero", 2, 0, 0), make_diffusion("zero", 2, 2, 0), u0), ens, opt);
        const Semigroup sg(a);
        double err = 0.0;
        for (const auto& u : orbit.u)
            for (std::size_t j = 0; j <= grid.cells(); ++j) err = std::max(err, (u.col(static_cast<Eigen::Index>(j)) - sg.apply(grid[j], u0)).norm());
        r.metric("see.zero.orbit_error", err);
        r.criterion("C12a", "SEE without nonlinearities is the semigroup orbit", identical && orbit.diagnostics.converged && err <= 1e-12 * (1.0 + u0.norm()),
                    std::string("A = 0 solution ") + (identical ? "bit-identical to u0" : "differs from u0") + "; orbit error " + fmt(err));
        r.stop("C12a");
    }
    if (want("ode")) {
        r.start();
        double worst = 0.0;
        bool ok = true;
        for (std::size_t k : {std::size_t{50}, c.grid}) {
            const TimeGrid grid = TimeGrid::uniform(1.0, k);
            const MartEnsemble ens = simulate(noise(1), grid, 2, c.seed);
            const auto res = picard_solve(see_problem(Matrix::Zero(1, 1), make_drift("linear", 1, -1.0, 0), make_diffusion("zero", 1, 1, 0), Vector::Ones(1)), ens, opt);
            double err = 0.0;
            for (std::size_t j = 0; j <= k; ++j) err = std::max(err, std::abs(res.u[0](0, static_cast<Eigen::Index>(j)) - std::exp(-grid[j])));
            ok = ok && res.diagnostics.converged && err <= 5.0 * grid.max_width();
            worst = std::max(worst, err / grid.max_width());
        }
        r.metric("see.ode.error_over_dt", worst);
        r.criterion("C12b", "deterministic ODE within 5 dt", ok, "max error / dt " + fmt(worst));
        r.stop("C12b");
    }
    if (want("ou")) {
        r.start();
        const TimeGrid grid = TimeGrid::uniform(1.0, c.grid);
        const MartEnsemble ens = simulate(noise(1), grid, c.n_paths, c.seed);
        const auto res = picard_solve(see_problem(-Matrix::Identity(1, 1), make_drift("zero", 1, 0, 0), make_diffusion("constant", 1, 1, 1.0), Vector::Zero(1)), ens, opt);
        std::vector<double> sq(ens.n_paths());
        for (std::size_t p = 0; p < sq.size(); ++p) sq[p] = std::pow(res.u[p](0, static_cast<Eigen::Index>(grid.cells())), 2);
        const Estimate e = mean_estimate(sq);
        const double target = (1.0 - std::exp(-2.0 * grid.horizon())) / 2.0;
        const double z = e.stderr_ > 0.0 ? (e.value - target) / e.stderr_ : 0.0;
        const ResidualStats resid = mild_residual(res.u, see_problem(-Matrix::Identity(1, 1), make_drift("zero", 1, 0, 0), make_diffusion("constant", 1, 1, 1.0), Vector::Zero(1)), ens);
        r.mc("see.ou.terminal_variance", e.value, e.stderr_);
        r.metric("see.ou.target_variance", target);
        r.metric("see.ou.max_mild_residual", resid.max);
        r.criterion("C12c", "Ornstein-Uhlenbeck terminal variance", res.diagnostics.converged && std::abs(z) <= 3.0,
                    "variance " + fmt(e.value, 6) + " +- " + fmt(e.stderr_, 3) + " vs " + fmt(target, 6) + " (z " + fmt(z, 3) +
                        "), mild residual " + fmt(resid.max));
        r.stop("C12c");
    }
    if (want("contraction")) {
        r.start();
        const auto lengths = param<std::vector<double>>(c, "ladder");
        const auto paths = param<std::size_t>(c, "contraction_paths");
        const auto prob = see_problem(-Matrix::Identity(2, 2), make_drift("linear", 2, -0.5, 0), make_diffusion("diagonal", 2, 2, 1.0), Vector::Zero(2));
        Series& s = r.series("contraction_ladder", {"block_length", "contraction"});
        std::vector<double> h, ch;
        for (double len : lengths) {
            const MartEnsemble ens = simulate(noise(2), TimeGrid::uniform(len, 32), paths, substream(c.seed, h.size(), 0xc0)());
            h.push_back(len);
            ch.push_back(measure_contraction(prob, ens));
            s.rows.push_back({len, ch.back()});
        }
        const double slope = h.size() >= 2 ? loglog_slope(h, ch) : 0.0;
        r.metric("see.contraction_exponent", slope, 0.0, false);
        r.criterion("C12d", "block contraction scales with the square root of the block length", slope >= 0.35 && slope <= 0.65,
                    "fitted exponent " + fmt(slope, 3) + " over " + std::to_string(h.size()) + " block lengths");
        r.stop("C12d");
    }
    if (want("localization")) {
        r.start();
        const auto paths = param<std::size_t>(c, "localization_paths");
        const std::size_t k = 64;
        const MartEnsemble ens = simulate(adapted_scaling(Matrix::Identity(2, 2), "adapted"), TimeGrid::uniform(1.0, k), paths, c.seed);
        SEEProblem prob = see_problem((Vector(2) << -1.0, -2.0).finished().asDiagonal(), make_drift("sine", 2, 0.5, 0.0),
                                      make_diffusion("diagonal", 2, 2, 0.5), Vector::Zero(2));
        const std::uint64_t init_seed = c.seed;
        prob.u0 = [init_seed](std::size_t p) {
            auto rng = substream(init_seed, p, 0x5);
            return Vector(1.5 * gaussian_vector(rng, 2));
        };
        SEEProblem other = prob;
        other.u0 = truncate_initial(prob.u0, 1.5);
        std::vector<std::size_t> stop(paths);
        for (std::size_t p = 0; p < paths; ++p) stop[p] = qv_crossing(ens.bracket(p), 0.5);
        const auto rep = localization_consistency(prob, other, [&](std::size_t p) { return prob.u0(p).norm() <= 1.5; }, ens, stop, opt);
        r.metric("see.localization.stopped_gap", rep.stopped_gap);
        r.metric("see.localization.event_gap", rep.event_gap);
        r.metric("see.localization.bound", rep.bound);
        r.criterion("C12e", "localization consistency", rep.pass,
                    "stopped gap " + fmt(rep.stopped_gap) + ", event gap " + fmt(rep.event_gap) + " on " + std::to_string(rep.event_paths) +
                        " paths, bound " + fmt(rep.bound));
        r.stop("C12e");
    }
}

inline void projsel(const RunConfig& c, Recorder& r) {
    r.start();
    const auto instances = param<std::size_t>(c, "instances");
    const auto max_dim = param<std::size_t>(c, "max_dim");
    double worst = 0.0;
    std::size_t deficient = 0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        auto rng = substream(c.seed, inst, 0x9e5);
        const Eigen::Index d = draw_dim(rng, max_dim);
        const auto rank = static_cast<Eigen::Index>(draw(rng, 0, static_cast<std::size_t>(d)));
        const auto k = static_cast<Eigen::Index>(draw(rng, 0, static_cast<std::size_t>(d)));
        if (rank < d) ++deficient;
        const Matrix f = std::pow(10.0, draw_real(rng, -3.0, 3.0)) * random_psd(rng, d, rank);
        const Matrix h0 = random_orthonormal(rng, d, k);
        const ProjectionTriple t = projection_selection(SymOperator(f), h0);
        const double fn = detail::sym_norm(f);
        const double scale = 1.0 + fn * fn;
        worst = std::max({worst, (t.P_tilde * f - f * t.P).norm() / scale, (t.L * f - t.P).norm() / scale,
                          (t.P_tilde * t.P_tilde - t.P_tilde).norm() / scale});
    }
    r.metric("projsel.max_relative_defect", worst);
    r.metric("projsel.rank_deficient", static_cast<double>(deficient));
    r.criterion("C13", "projection selection identities", worst <= 1e-8 && instances > 0,
                std::to_string(instances) + " instances (" + std::to_string(deficient) + " rank-deficient), max defect / (1 + ||F||^2) " + fmt(worst));
    r.stop("C13");
}

inline json defaults(std::size_t n_paths, std::size_t grid, json params) {
    return json{{"n_paths", n_paths}, {"grid", grid}, {"params", std::move(params)}};
}

} // namespace experiments

/// Every experiment the harness can run, in criterion order.
inline const std::vector<Experiment>& registry() {
    using experiments::defaults;
    static const std::vector<Experiment> reg{
        {"supmeas", "supremum of measures against brute force; density suprema", {"C1", "C2"},
         defaults(1, 6, {{"trials", 20}, {"max_family", 3}, {"brute_refine", 1}, {"density_instances", 100}}), experiments::supmeas},
        {"qv", "quadratic variation of constant noise; Q_M normalization", {"C3", "C5"},
         defaults(1000, 64, {{"sigma", "identity"}, {"d", 3}, {"horizon", 1.0}, {"sphere_samples", 64}, {"depth", 4}, {"instances", 100}, {"window", 3}}),
         experiments::qv},
        {"countex", "truncations of the non-summable family", {"C4"}, defaults(16, 4, {{"n", 0}, {"panel", 64}}), experiments::countex},
        {"ito", "Ito isometry and Ito formula residuals", {"C6", "C10"},
         defaults(10000, 32, {{"instances", 20}, {"max_dim", 8}, {"ladder", {16, 64, 256}}}), experiments::ito},
        {"bdg", "BDG ratio panel with cross-seed brackets", {"C7"},
         defaults(10000, 32,
                  {{"instances", 20}, {"ps", {1.0, 2.0, 4.0}}, {"lp", 4.0}, {"gamma_samples", 20000}, {"panel_seed", 7},
                   {"alt_seed_offset", 1000003}, {"max_width", 50.0}, {"c_tolerance", 0.1}}),
         experiments::bdg},
        {"timechange", "time-changed bracket and DDS refinement ladder", {"C8"},
         defaults(1000, 64, {{"d", 2}, {"s_horizon", 2.0}, {"ladder", {512, 2048, 8192}}, {"ladder_paths", 1000}}), experiments::timechange},
        {"gamma", "gamma-norm estimator, ideal property and primitive bound", {"C9"},
         defaults(1, 16, {{"instances", 50}, {"ideal_instances", 100}, {"primitive_instances", 50}, {"samples", 20000}, {"max_dim", 6}}),
         experiments::gamma},
        {"kw", "Kunita-Watanabe inequality", {"C11"}, defaults(1000, 32, {{"instances", 20}}), experiments::kw},
        {"see", "mild solutions of the stochastic evolution equation", {"C12a", "C12b", "C12c", "C12d", "C12e"},
         defaults(10000, 200,
                  {{"preset", "all"}, {"tol", 1e-10}, {"ladder", {0.25, 0.0625, 0.015625}}, {"contraction_paths", 500}, {"localization_paths", 200}}),
         experiments::see},
        {"projsel", "projection selection identities", {"C13"}, defaults(1, 1, {{"instances", 200}, {"max_dim", 6}}), experiments::projsel},
    };
    return reg;
}

inline const Experiment& find_experiment(const std::string& name) {
    for (const auto& e : registry())
        if (e.name == name) return e;
    std::string known;
    for (const auto& e : registry()) known += (known.empty() ? "" : ", ") + e.name;
    throw InvalidArgument("unknown experiment '" + name + "' (known: " + known + ")");
}

inline RunConfig default_config(const std::string& name) {
    return config_from_json(json{{"experiment", name}}, find_experiment(name).defaults);
}

/// Parses a config file body; the experiment named inside selects the accepted parameters.
inline RunConfig parse_config(const json& j) {
    if (!j.is_object() || !j.contains("experiment") || !j["experiment"].is_string())
        throw FormatError("config lacks a string 'experiment'");
    return config_from_json(j, find_experiment(j["experiment"].get<std::string>()).defaults);
}

/// Runs an experiment in memory.
inline RunReport run(const RunConfig& config) {
    const Experiment& exp = find_experiment(config.experiment);
    RunConfig c = config_from_json(config_to_json(config), exp.defaults);
    c.out = config.out;
    RunReport r;
    r.experiment = c.experiment;
    r.config = c;
    r.config_hash = config_hash(c);
    r.version = version_hash();
    Recorder rec(r);
    const auto t0 = std::chrono::steady_clock::now();
    exp.body(c, rec);
    r.timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline constexpr const char* kBundleSchema = "cylmart.bundle/1";

/// Writes report.json, one CSV per series under plots/ and a manifest listing every file to
/// out/<experiment>-<hash>/. Returns the report path.
inline std::filesystem::path write_bundle(const RunReport& r) {
    const auto dir = run_directory(r.config);
    std::filesystem::create_directories(dir);
    json files = json::array();
    for (const auto& f : emit_plotdata(r, dir / "plots")) files.push_back(std::filesystem::relative(f, dir).generic_string());
    const auto report = write_report(r);
    files.push_back("report.json");
    std::ofstream m(dir / "manifest.json");
    if (!m) throw FormatError("cannot write manifest in " + dir.string());
    m << json{{"schema", kBundleSchema}, {"config_hash", r.config_hash}, {"files", files}}.dump(2) << '\n';
    return report;
}

/// Reads a bundle from its report path or run directory. A missing manifest, report or
/// listed file raises FormatError.
inline RunReport read_bundle(const std::filesystem::path& path) {
    const auto dir = std::filesystem::is_directory(path) ? path : path.parent_path();
    const json manifest = read_json_file(dir / "manifest.json");
    if (!manifest.is_object() || manifest.value("schema", "") != kBundleSchema || !manifest.contains("files") ||
        !manifest["files"].is_array())
        throw FormatError("malformed manifest in " + dir.string());
    for (const auto& f : manifest["files"]) {
        if (!f.is_string()) throw FormatError("malformed manifest entry in " + dir.string());
        if (!std::filesystem::exists(dir / f.get<std::string>())) throw FormatError("partial bundle: missing " + f.get<std::string>());
    }
    const json j = read_json_file(dir / "report.json");
    const json& cfg = detail::require(j, "config", "report");
    if (!cfg.is_object() || !cfg.contains("experiment") || !cfg["experiment"].is_string()) throw FormatError("report config lacks 'experiment'");
    RunReport r = report_from_json(j, find_experiment(cfg["experiment"].get<std::string>()).defaults);
    r.config.out = dir.parent_path().string();
    return r;
}

/// Outcome of re-running a recorded bundle.
struct ReplayResult {
    RunReport recorded;
    RunReport fresh;
    std::vector<std::string> mismatches;
    bool identical() const { return mismatches.empty(); }
};

namespace detail {

inline bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

} // namespace detail

/// Re-executes the echoed config and compares bit for bit. A config that no longer matches its
/// recorded hash is reported as tampered.
inline ReplayResult replay(const std::filesystem::path& path) {
    ReplayResult out;
    out.recorded = read_bundle(path);
    const RunReport& a = out.recorded;
    const std::string actual = config_hash(a.config);
    if (actual != a.config_hash) out.mismatches.push_back("config hash " + actual + " differs from recorded " + a.config_hash + " (edited config)");
    if (a.version != version_hash()) out.mismatches.push_back("report written by another library version");
    out.fresh = run(a.config);
    const RunReport& b = out.fresh;
    for (const auto& [name, m] : a.metrics) {
        auto it = b.metrics.find(name);
        if (it == b.metrics.end()) {
            out.mismatches.push_back("metric " + name + " missing on replay");
            continue;
        }
        if (!detail::same_bits(m.value, it->second.value) || !detail::same_bits(m.stderr_, it->second.stderr_)) {
            std::string msg = "metric " + name + ": " + format_double(m.value) + " vs " + format_double(it->second.value);
            if (!m.exact) {
                const double s = std::hypot(m.stderr_, it->second.stderr_);
                msg += std::abs(m.value - it->second.value) <= 3.0 * s ? " (within 3 sigma)" : " (beyond 3 sigma)";
            }
            out.mismatches.push_back(msg);
        }
    }
    for (const auto& [name, m] : b.metrics)
        if (!a.metrics.count(name)) out.mismatches.push_back("metric " + name + " absent from the recorded report");
    if (a.criteria.size() != b.criteria.size()) out.mismatches.push_back("criterion count differs");
    for (std::size_t i = 0; i < std::min(a.criteria.size(), b.criteria.size()); ++i)
        if (a.criteria[i].id != b.criteria[i].id || a.criteria[i].pass != b.criteria[i].pass)
            out.mismatches.push_back("criterion " + a.criteria[i].id + " verdict differs");
    for (const auto& [name, s] : a.series) {
        auto it = b.series.find(name);
        bool same = it != b.series.end() && it->second.columns == s.columns && it->second.rows.size() == s.rows.size();
        for (std::size_t i = 0; same && i < s.rows.size(); ++i) {
            same = s.rows[i].size() == it->second.rows[i].size();
            for (std::size_t j = 0; same && j < s.rows[i].size(); ++j) same = detail::same_bits(s.rows[i][j], it->second.rows[i][j]);
        }
        if (!same) out.mismatches.push_back("series " + name + " differs");
    }
    return out;
}

} // namespace cylmart
