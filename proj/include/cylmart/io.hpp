#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cylmart/errors.hpp"
#include "cylmart/grid_measures.hpp"
#include "cylmart/ito_bdg.hpp"
#include "cylmart/mart_sim.hpp"
#include "cylmart/stoch_integral.hpp"
#include "cylmart/time_change.hpp"

namespace cylmart {

using nlohmann::json;

/// 64-bit FNV-1a digest.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex_digest(std::uint64_t h) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Row-major nested arrays.
inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("matrix must be an array of rows");
    const auto r = static_cast<Eigen::Index>(j.size());
    const auto c = r ? static_cast<Eigen::Index>(j.front().size()) : 0;
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) throw FormatError("ragged matrix rows");
        for (Eigen::Index k = 0; k < c; ++k) {
            if (!row[static_cast<std::size_t>(k)].is_number()) throw FormatError("matrix entry is not a number");
            m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
        }
    }
    return m;
}

inline json measure_to_json(const GridMeasure& mu) {
    return json{{"grid", std::vector<double>(mu.grid().points().begin(), mu.grid().points().end())},
                {"increments", std::vector<double>(mu.increments().begin(), mu.increments().end())}};
}

inline GridMeasure measure_from_json(const json& j) {
    try {
        return GridMeasure(TimeGrid(j.at("grid").get<std::vector<double>>()), j.at("increments").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("grid measure: ") + e.what());
    }
}

/// Minimal CSV writer: header row, then numeric rows with round-trip precision.
inline void write_csv(const std::filesystem::path& file, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows, bool append = false) {
    const bool fresh = !append || !std::filesystem::exists(file);
    std::ofstream out(file, append ? std::ios::app : std::ios::trunc);
    if (!out) throw FormatError("cannot open " + file.string() + " for writing");
    if (fresh) {
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
    }
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
        out << '\n';
    }
}

/// Header and numeric rows of a CSV file written by write_csv.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw FormatError("missing file " + file.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty CSV " + file.string());
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream rs(line);
        for (std::string cell; std::getline(rs, cell, ',');) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError("non-numeric CSV cell '" + cell + "' in " + file.string());
            }
        }
        if (row.size() != t.header.size()) throw FormatError("CSV row width differs from header in " + file.string());
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Rows (t_left, t_right, increment).
inline void write_measure_csv(const std::filesystem::path& file, const GridMeasure& mu) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < mu.cells(); ++i) rows.push_back({mu.grid()[i], mu.grid()[i + 1], mu[i]});
    write_csv(file, {"t_left", "t_right", "increment"}, rows);
}

/// Paired arrays (s, tau_s); tau is null from the total mass on.
inline json time_change_to_json(const TimeChange& tc) {
    json tau = json::array();
    for (std::size_t i = 0; i < tc.tau.size(); ++i) {
        if (tc.tau[i] == TimeChange::never) tau.push_back(nullptr);
        else tau.push_back(tc.tau_time(i));
    }
    return json{{"s", std::vector<double>(tc.s_grid.points().begin(), tc.s_grid.points().end())}, {"tau", std::move(tau)}};
}

/// Digest of a noise spec: label, dimensions, driver covariance and, for driver-independent
/// coefficients, the coefficient on every cell of the grid.
inline std::string spec_hash(const NoiseSpec& spec, const TimeGrid& grid) {
    std::ostringstream s;
    s << spec.label << '|' << spec.d_cyl << '|' << spec.d_drive << '|' << spec.path_dependent << '|';
    for (Eigen::Index i = 0; i < spec.q_drive.size(); ++i) s << format_double(spec.q_drive.data()[i]) << ',';
    if (!spec.path_dependent)
        for (std::size_t c = 0; c < grid.cells(); ++c) {
            const Matrix m = spec.sigma_at(grid[c], c);
            for (Eigen::Index i = 0; i < m.size(); ++i) s << format_double(m.data()[i]) << ',';
        }
    return hex_digest(fnv1a(s.str()));
}

inline std::string path_file_name(std::size_t p) {
    std::ostringstream s;
    s << "path_" << std::setw(6) << std::setfill('0') << p << ".csv";
    return s.str();
}

/// Writes manifest.json and one CSV per path (t, M_0..M_{d-1}, qv) into `dir`.
inline void write_ensemble_bundle(const std::filesystem::path& dir, const MartEnsemble& ens) {
    std::filesystem::create_directories(dir);
    const auto pts = ens.grid().points();
    json files = json::array();
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        const Matrix m = ens.values(p);
        const IncreasingPath f = ens.bracket(p).cumulative();
        std::vector<std::string> header{"t"};
        for (Eigen::Index r = 0; r < m.rows(); ++r) header.push_back("m" + std::to_string(r));
        header.emplace_back("qv");
        std::vector<std::vector<double>> rows;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            std::vector<double> row{pts[j]};
            for (Eigen::Index r = 0; r < m.rows(); ++r) row.push_back(m(r, static_cast<Eigen::Index>(j)));
            row.push_back(f[j]);
            rows.push_back(std::move(row));
        }
        write_csv(dir / path_file_name(p), header, rows);
        files.push_back(path_file_name(p));
    }
    const json manifest{{"schema", "cylmart.ensemble/1"},
                        {"seed", ens.seed()},
                        {"spec", ens.spec().label},
                        {"spec_hash", spec_hash(ens.spec(), ens.grid())},
                        {"grid", std::vector<double>(pts.begin(), pts.end())},
                        {"n_paths", ens.n_paths()},
                        {"d_cyl", ens.spec().d_cyl},
                        {"files", files}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

/// Paths and brackets read back from a bundle.
struct EnsembleBundle {
    json manifest;
    TimeGrid grid;
    std::vector<Matrix> values;
    std::vector<std::vector<double>> bracket;
};

inline EnsembleBundle read_ensemble_bundle(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("bundle has no manifest.json: " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
        for (const char* key : {"schema", "seed", "spec_hash", "grid", "n_paths", "d_cyl", "files"})
            if (!manifest.contains(key)) throw FormatError(std::string("manifest lacks '") + key + "'");
        if (manifest["schema"] != "cylmart.ensemble/1") throw FormatError("unknown ensemble schema");
    } catch (const json::exception& e) {
        throw FormatError(std::string("unreadable manifest: ") + e.what());
    }
    EnsembleBundle b{manifest, TimeGrid(manifest["grid"].get<std::vector<double>>()), {}, {}};
    const auto files = manifest["files"].get<std::vector<std::string>>();
    if (files.size() != manifest["n_paths"].get<std::size_t>()) throw FormatError("manifest path count mismatch");
    const auto d = manifest["d_cyl"].get<Eigen::Index>();
    for (const auto& name : files) {
        const CsvTable t = read_csv(dir / name);
        if (t.rows.size() != b.grid.points().size() || static_cast<Eigen::Index>(t.header.size()) != d + 2)
            throw FormatError("path file " + name + " does not match the manifest");
        Matrix m(d, static_cast<Eigen::Index>(t.rows.size()));
        std::vector<double> qv(t.rows.size());
        for (std::size_t j = 0; j < t.rows.size(); ++j) {
            for (Eigen::Index r = 0; r < d; ++r) m(r, static_cast<Eigen::Index>(j)) = t.rows[j][static_cast<std::size_t>(r) + 1];
            qv[j] = t.rows[j].back();
        }
        b.values.push_back(std::move(m));
        b.bracket.push_back(std::move(qv));
    }
    return b;
}

/// One CSV per integral path (t, zeta_0..zeta_{m-1}) under dir/name/.
inline void write_integral_paths(const std::filesystem::path& dir, const IntegralPaths& z) {
    std::filesystem::create_directories(dir);
    const auto pts = z.grid.points();
    for (std::size_t p = 0; p < z.n_paths(); ++p) {
        std::vector<std::string> header{"t"};
        for (Eigen::Index r = 0; r < z.paths[p].rows(); ++r) header.push_back("z" + std::to_string(r));
        std::vector<std::vector<double>> rows;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            std::vector<double> row{pts[j]};
            for (Eigen::Index r = 0; r < z.paths[p].rows(); ++r) row.push_back(z.paths[p](r, static_cast<Eigen::Index>(j)));
            rows.push_back(std::move(row));
        }
        write_csv(dir / path_file_name(p), header, rows);
    }
}

/// Appends BDG rows (p, lhs, lhs_se, rhs, rhs_se, ratio, excluded) to a panel CSV; the
/// instance and flavor names go to a sidecar column file of the same stem.
inline void append_bdg_rows(const std::filesystem::path& file, const std::vector<BdgReport>& reports) {
    std::vector<std::vector<double>> rows;
    std::ofstream labels(std::filesystem::path(file).replace_extension(".labels"), std::ios::app);
    for (const auto& r : reports) {
        rows.push_back({r.p, static_cast<double>(r.n_paths), r.lhs.value, r.lhs.stderr_, r.rhs.value, r.rhs.stderr_, r.ratio,
                        r.excluded ? 1.0 : 0.0});
        labels << r.instance << ',' << r.flavor << '\n';
    }
    write_csv(file, {"p", "n_paths", "lhs", "lhs_se", "rhs", "rhs_se", "ratio", "excluded"}, rows, true);
}

} // namespace cylmart
