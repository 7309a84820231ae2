#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cylmart/experiments.hpp"

using cylmart::json;

namespace {

/// Flags shared by `run <experiment>` and the per-experiment shortcuts.
struct RunFlags {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> grid;
    std::string out = "runs";
    std::optional<std::string> sigma;
    std::optional<std::size_t> n;
    std::optional<std::string> preset;
    std::vector<std::string> params;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--config", f.config_file, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", f.seed, "master seed");
    app->add_option("--paths", f.paths, "number of Monte-Carlo paths");
    app->add_option("--grid", f.grid, "grid cells (experiment-specific meaning)");
    app->add_option("--out", f.out, "output root; runs go to <out>/<experiment>-<config hash>");
    app->add_option("--sigma", f.sigma, "qv: constant coefficient (identity, diagonal, random)");
    app->add_option("--n", f.n, "countex: truncation order (0 runs 4, 8, 16, 32)");
    app->add_option("--preset", f.preset, "see: all, zero, ode, ou, contraction, localization");
    app->add_option("--param", f.params, "experiment parameter key=value, value as JSON")->take_all();
}

cylmart::RunConfig build_config(const std::string& experiment, const RunFlags& f) {
    json j = json::object();
    if (!f.config_file.empty()) {
        j = cylmart::read_json_file(f.config_file);
        if (!j.is_object()) throw cylmart::FormatError("config file must hold a JSON object");
        if (j.contains("experiment") && j["experiment"] != experiment)
            throw cylmart::FormatError("config file is for experiment " + j["experiment"].dump());
    }
    j["experiment"] = experiment;
    if (f.seed) j["seed"] = *f.seed;
    if (f.paths) j["n_paths"] = *f.paths;
    if (f.grid) j["grid"] = *f.grid;
    if (!j.contains("params")) j["params"] = json::object();
    if (f.sigma) j["params"]["sigma"] = *f.sigma;
    if (f.n) j["params"]["n"] = *f.n;
    if (f.preset) j["params"]["preset"] = *f.preset;
    for (const auto& kv : f.params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw cylmart::FormatError("--param expects key=value, got '" + kv + "'");
        const std::string value = kv.substr(eq + 1);
        json v;
        try {
            v = json::parse(value);
        } catch (const json::parse_error&) {
            v = value;
        }
        j["params"][kv.substr(0, eq)] = v;
    }
    cylmart::RunConfig c = cylmart::parse_config(j);
    c.out = f.out;
    return c;
}

int run_experiment(const std::string& experiment, const RunFlags& f) {
    const cylmart::RunConfig config = build_config(experiment, f);
    const cylmart::RunReport report = cylmart::run(config);
    const auto path = cylmart::write_bundle(report);
    for (const auto& c : report.criteria) {
        const auto t = report.timings.find(c.id);
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.id << "  " << c.name << ": " << c.detail;
        if (t != report.timings.end()) std::cout << "  [" << cylmart::fmt(t->second, 3) << " s]";
        std::cout << '\n';
    }
    std::cout << "report: " << path.string() << '\n';
    return report.pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cylindrical martingale verification experiments"};
    app.require_subcommand(1);

    RunFlags run_flags;
    std::string run_name;
    auto* run_cmd = app.add_subcommand("run", "run an experiment");
    run_cmd->add_option("experiment", run_name, "experiment name")->required();
    add_run_flags(run_cmd, run_flags);

    std::vector<RunFlags> shortcut_flags(cylmart::registry().size());
    std::vector<CLI::App*> shortcuts;
    for (std::size_t i = 0; i < cylmart::registry().size(); ++i) {
        const auto& e = cylmart::registry()[i];
        auto* sub = app.add_subcommand(e.name, e.summary);
        add_run_flags(sub, shortcut_flags[i]);
        shortcuts.push_back(sub);
    }

    std::string replay_path;
    auto* replay_cmd = app.add_subcommand("replay", "re-run a recorded report and compare bit for bit");
    replay_cmd->add_option("report", replay_path, "report.json or run directory")->required();

    std::string plot_path, plot_dir;
    auto* plot_cmd = app.add_subcommand("plotdata", "write one CSV per report series");
    plot_cmd->add_option("report", plot_path, "report.json or run directory")->required();
    plot_cmd->add_option("--dir", plot_dir, "output directory (default: <run>/plots)");

    auto* list_cmd = app.add_subcommand("list", "list experiments and their defaults");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return run_experiment(run_name, run_flags);
        for (std::size_t i = 0; i < shortcuts.size(); ++i)
            if (shortcuts[i]->parsed()) return run_experiment(cylmart::registry()[i].name, shortcut_flags[i]);
        if (replay_cmd->parsed()) {
            const auto r = cylmart::replay(replay_path);
            for (const auto& m : r.mismatches) std::cout << "MISMATCH " << m << '\n';
            std::cout << (r.identical() ? "identical" : "differs") << ": " << r.recorded.experiment << " " << r.recorded.config_hash << '\n';
            return r.identical() ? 0 : 1;
        }
        if (plot_cmd->parsed()) {
            const auto report = cylmart::read_bundle(plot_path);
            const std::filesystem::path dir = plot_dir.empty() ? cylmart::run_directory(report.config) / "plots" : std::filesystem::path(plot_dir);
            for (const auto& f : cylmart::emit_plotdata(report, dir)) std::cout << f.string() << '\n';
            return 0;
        }
        if (list_cmd->parsed()) {
            for (const auto& e : cylmart::registry()) {
                std::string ids;
                for (const auto& c : e.criteria) ids += (ids.empty() ? "" : ",") + c;
                std::cout << e.name << " [" << ids << "] " << e.summary << "\n  defaults " << e.defaults.dump() << '\n';
            }
            return 0;
        }
    } catch (const cylmart::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
