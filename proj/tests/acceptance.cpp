#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cylmart/experiments.hpp"

using namespace cylmart;

namespace {

/// Runtime budget in seconds per criterion.
const std::map<std::string, double> kBudget{
    {"C1", 10.0},  {"C2", 5.0},    {"C3", 30.0},  {"C4", 10.0},  {"C5", 10.0},  {"C6", 120.0}, {"C7", 900.0},
    {"C8", 300.0}, {"C9", 300.0},  {"C10", 300.0}, {"C11", 120.0}, {"C12", 600.0}, {"C13", 10.0},
};

struct Line {
    bool pass = true;
    std::string detail;
    double seconds = 0.0;
};

std::string criterion_group(const std::string& id) { return id.rfind("C12", 0) == 0 ? "C12" : id; }

double budget_of(const Experiment& e) {
    double total = 0.0;
    std::string last;
    for (const auto& id : e.criteria) {
        const std::string g = criterion_group(id);
        if (g != last) total += kBudget.at(g);
        last = g;
    }
    return total;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run: every experiment at its default config, then replay"};
    std::string out = "acceptance-runs";
    std::vector<std::string> only;
    app.add_option("--out", out, "output root for run bundles");
    app.add_option("--only", only, "restrict to these experiments");
    CLI11_PARSE(app, argc, argv);

    std::map<std::string, Line> lines;
    std::vector<std::string> order;
    auto line = [&](const std::string& id) -> Line& {
        if (!lines.count(id)) order.push_back(id);
        return lines[id];
    };

    Line determinism;
    std::string replay_notes;
    for (const auto& e : registry()) {
        if (!only.empty() && std::find(only.begin(), only.end(), e.name) == only.end()) continue;
        RunConfig c = default_config(e.name);
        c.out = out;
        RunReport r;
        try {
            r = run(c);
        } catch (const std::exception& ex) {
            for (const auto& id : e.criteria) {
                Line& l = line(criterion_group(id));
                l.pass = false;
                l.detail += " " + id + " threw: " + ex.what();
            }
            determinism.pass = false;
            continue;
        }
        for (const auto& crit : r.criteria) {
            Line& l = line(criterion_group(crit.id));
            l.pass = l.pass && crit.pass;
            l.detail += (l.detail.empty() ? "" : " | ") + (crit.id == criterion_group(crit.id) ? "" : crit.id + ": ") + crit.detail;
            const auto t = r.timings.find(crit.id);
            if (t != r.timings.end()) l.seconds += t->second;
        }
        const auto path = write_bundle(r);
        const ReplayResult rep = replay(path);
        const double replay_seconds = rep.fresh.timings.at("total");
        const bool in_budget = replay_seconds <= budget_of(e);
        determinism.seconds += replay_seconds;
        if (!rep.identical() || !in_budget) {
            determinism.pass = false;
            replay_notes += " " + e.name + (rep.identical() ? " over budget" : " differs: " + rep.mismatches.front()) + ";";
        }
    }

    bool all = true;
    for (const auto& id : order) {
        Line& l = lines[id];
        const bool fast = l.seconds <= kBudget.at(id);
        if (!fast) l.detail += " | over runtime budget " + fmt(kBudget.at(id), 4) + " s";
        const bool pass = l.pass && fast;
        all = all && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << id << "  " << l.detail << "  [" << fmt(l.seconds, 3) << " s]\n";
    }
    all = all && determinism.pass;
    std::cout << (determinism.pass ? "PASS " : "FAIL ") << "C14  replay of every experiment bit-identical within the original budgets"
              << (replay_notes.empty() ? "" : ":" + replay_notes) << "  [" << fmt(determinism.seconds, 3) << " s]\n";
    std::cout << (all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << '\n';
    return all ? 0 : 1;
}
