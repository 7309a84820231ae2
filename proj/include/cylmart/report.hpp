#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cylmart/errors.hpp"

namespace cylmart {

/// Outcome of a pathwise check: the worst normalized slack over all paths and the tolerance it
/// was held to. Negative slack beyond the tolerance fails.
struct CheckReport {
    std::string check;
    std::size_t n_paths = 0;
    double worst_slack = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline void to_json(nlohmann::json& j, const CheckReport& r) {
    j = nlohmann::json{{"check", r.check},
                       {"n_paths", r.n_paths},
                       {"worst_slack", r.worst_slack},
                       {"tolerance", r.tolerance},
                       {"pass", r.pass}};
}

inline void from_json(const nlohmann::json& j, CheckReport& r) {
    j.at("check").get_to(r.check);
    j.at("n_paths").get_to(r.n_paths);
    j.at("worst_slack").get_to(r.worst_slack);
    j.at("tolerance").get_to(r.tolerance);
    j.at("pass").get_to(r.pass);
}

/// Sample mean with its standard error.
struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

inline Estimate mean_estimate(std::span<const double> xs) {
    if (xs.empty()) throw InvalidArgument("mean of an empty sample");
    const double n = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    if (xs.size() < 2) return {m, 0.0};
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v /= (n - 1.0);
    return {m, std::sqrt(v / n)};
}

/// Least-squares slope of log(ys) against log(xs).
inline double loglog_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw InvalidArgument("slope fit needs at least two points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw InvalidArgument("slope fit needs positive data");
        const double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw InvalidArgument("slope fit needs distinct abscissae");
    return (n * sxy - sx * sy) / den;
}

} // namespace cylmart
