#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cylmart/errors.hpp"
#include "cylmart/io.hpp"

namespace cylmart {

inline constexpr const char* kConfigSchema = "cylmart.run/1";
inline constexpr const char* kReportSchema = "cylmart.report/1";
inline constexpr const char* kVersion = "cylmart 1.0.0";

/// Hash identifying the library version that produced a report.
inline std::string version_hash() { return hex_digest(fnv1a(std::string(kVersion) + "|" + kReportSchema)); }

/// Everything that determines a run. The output directory is not part of the hash.
struct RunConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    std::size_t n_paths = 0;
    std::size_t grid = 0;
    json params = json::object();
    std::string out = "runs";
};

/// Canonical JSON echo of a config (no output directory).
inline json config_to_json(const RunConfig& c) {
    return json{{"schema", kConfigSchema}, {"experiment", c.experiment}, {"seed", c.seed},
                {"n_paths", c.n_paths},   {"grid", c.grid},             {"params", c.params}};
}

inline std::string config_hash(const RunConfig& c) { return hex_digest(fnv1a(config_to_json(c).dump())); }

/// One scalar result. `exact` marks values that do not carry Monte-Carlo error.
struct Metric {
    double value = 0.0;
    double stderr_ = 0.0;
    bool exact = true;
};

/// Pass/fail of one acceptance criterion with a one-line explanation.
struct Criterion {
    std::string id;
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Table for plotting: named columns, numeric rows.
struct Series {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct RunReport {
    std::string experiment;
    RunConfig config;
    std::string config_hash;
    std::string version;
    std::vector<Criterion> criteria;
    std::map<std::string, Metric> metrics;
    std::map<std::string, Series> series;
    std::map<std::string, double> timings;

    bool pass() const {
        for (const auto& c : criteria)
            if (!c.pass) return false;
        return true;
    }
};

inline void to_json(json& j, const Metric& m) { j = json{{"value", m.value}, {"stderr", m.stderr_}, {"exact", m.exact}}; }
inline void to_json(json& j, const Criterion& c) { j = json{{"id", c.id}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}}; }
inline void to_json(json& j, const Series& s) { j = json{{"columns", s.columns}, {"rows", s.rows}}; }

inline json report_to_json(const RunReport& r) {
    return json{{"schema", kReportSchema},
                {"experiment", r.experiment},
                {"config", config_to_json(r.config)},
                {"config_hash", r.config_hash},
                {"version", r.version},
                {"pass", r.pass()},
                {"criteria", r.criteria},
                {"metrics", r.metrics},
                {"series", r.series},
                {"timings", r.timings}};
}

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(where + " lacks '" + key + "'");
    return j.at(key);
}

} // namespace detail

/// Parses a config object. Unknown keys are errors; `defaults` supplies the accepted params
/// with their types and default values.
inline RunConfig config_from_json(const json& j, const json& defaults) {
    if (!j.is_object()) throw FormatError("config must be a JSON object");
    static const std::vector<std::string> known{"schema", "experiment", "seed", "n_paths", "grid", "params", "out"};
    std::vector<std::string> bad;
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) bad.push_back(k);
    if (!bad.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : bad) msg += " '" + k + "'";
        throw FormatError(msg);
    }
    if (j.contains("schema") && j["schema"] != kConfigSchema) throw FormatError("unsupported config schema " + j["schema"].dump());
    RunConfig c;
    try {
        c.experiment = detail::require(j, "experiment", "config").get<std::string>();
        c.seed = j.value("seed", std::uint64_t{1});
        c.n_paths = j.value("n_paths", defaults.at("n_paths").get<std::size_t>());
        c.grid = j.value("grid", defaults.at("grid").get<std::size_t>());
        c.out = j.value("out", std::string("runs"));
    } catch (const json::type_error& e) {
        throw FormatError(std::string("config field has the wrong type: ") + e.what());
    }
    c.params = defaults.at("params");
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw FormatError("params must be an object");
        for (const auto& [k, v] : j["params"].items()) {
            if (!c.params.contains(k)) throw FormatError("unknown parameter '" + k + "' for experiment " + c.experiment);
            const json& d = c.params[k];
            const bool same = (d.is_number() && v.is_number()) || (d.is_string() && v.is_string()) ||
                              (d.is_array() && v.is_array()) || (d.is_boolean() && v.is_boolean());
            if (!same) throw FormatError("parameter '" + k + "' has the wrong type");
            c.params[k] = v;
        }
    }
    if (c.n_paths == 0 || c.grid == 0) throw FormatError("n_paths and grid must be positive");
    return c;
}

/// Parses a report written by write_report; missing fields raise FormatError.
inline RunReport report_from_json(const json& j, const json& defaults) {
    RunReport r;
    try {
        if (detail::require(j, "schema", "report") != kReportSchema) throw FormatError("unsupported report schema");
        r.experiment = detail::require(j, "experiment", "report").get<std::string>();
        r.config = config_from_json(detail::require(j, "config", "report"), defaults);
        r.config_hash = detail::require(j, "config_hash", "report").get<std::string>();
        r.version = detail::require(j, "version", "report").get<std::string>();
        for (const auto& c : detail::require(j, "criteria", "report"))
            r.criteria.push_back({detail::require(c, "id", "criterion").get<std::string>(),
                                  detail::require(c, "name", "criterion").get<std::string>(),
                                  detail::require(c, "pass", "criterion").get<bool>(),
                                  detail::require(c, "detail", "criterion").get<std::string>()});
        for (const auto& [k, m] : detail::require(j, "metrics", "report").items())
            r.metrics[k] = {detail::require(m, "value", "metric").get<double>(), detail::require(m, "stderr", "metric").get<double>(),
                            detail::require(m, "exact", "metric").get<bool>()};
        for (const auto& [k, s] : detail::require(j, "series", "report").items())
            r.series[k] = {detail::require(s, "columns", "series").get<std::vector<std::string>>(),
                           detail::require(s, "rows", "series").get<std::vector<std::vector<double>>>()};
        if (j.contains("timings")) r.timings = j["timings"].get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    }
    return r;
}

/// Run directory out/<experiment>-<config hash>.
inline std::filesystem::path run_directory(const RunConfig& c) {
    return std::filesystem::path(c.out) / (c.experiment + "-" + config_hash(c));
}

inline std::filesystem::path write_report(const RunReport& r) {
    const auto dir = run_directory(r.config);
    std::filesystem::create_directories(dir);
    const auto file = dir / "report.json";
    std::ofstream out(file);
    if (!out) throw FormatError("cannot write " + file.string());
    out << report_to_json(r).dump(2) << '\n';
    return file;
}

inline json read_json_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw FormatError("missing file " + file.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("unparsable JSON in " + file.string() + ": " + e.what());
    }
}

/// One CSV per series under dir; an empty series yields a header-only file.
inline std::vector<std::filesystem::path> emit_plotdata(const RunReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    for (const auto& [name, s] : r.series) {
        const auto file = dir / (name + ".csv");
        write_csv(file, s.columns, s.rows);
        files.push_back(file);
    }
    return files;
}

/// Collects metrics, criteria, series and per-criterion timings while an experiment runs.
class Recorder {
public:
    explicit Recorder(RunReport& r) : r_(r) {}

    void metric(const std::string& name, double value, double stderr_ = 0.0, bool exact = true) {
        r_.metrics[name] = {value, stderr_, exact};
    }
    void mc(const std::string& name, double value, double stderr_) { metric(name, value, stderr_, false); }
    void criterion(const std::string& id, const std::string& name, bool pass, const std::string& detail) {
        r_.criteria.push_back({id, name, pass, detail});
    }
    Series& series(const std::string& name, std::vector<std::string> columns) {
        Series& s = r_.series[name];
        s.columns = std::move(columns);
        s.rows.clear();
        return s;
    }

    /// Restarts the clock for a timed section.
    void start() { t0_ = std::chrono::steady_clock::now(); }
    /// Adds the time since start() to the named section.
    void stop(const std::string& section) {
        r_.timings[section] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    RunReport& r_;
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

/// Fixed-width number formatting for criterion details.
inline std::string fmt(double x, int precision = 4) {
    std::ostringstream s;
    s << std::setprecision(precision) << x;
    return s.str();
}

} // namespace cylmart
