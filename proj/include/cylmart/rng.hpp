#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "cylmart/operator_core.hpp"

namespace cylmart {

/// Independent generator for (seed, stream, salt); the same triple always yields the same sequence.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
}

/// Vector of independent standard normals. Hot loops draw whole blocks with one call.
inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

/// Matrix of independent standard normals.
inline Matrix gaussian_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> g;
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = g(rng);
    return m;
}

namespace detail {

inline std::uint64_t nth_prime(std::size_t n) {
    std::uint64_t count = 0;
    for (std::uint64_t p = 2;; ++p) {
        bool prime = true;
        for (std::uint64_t q = 2; q * q <= p; ++q)
            if (p % q == 0) {
                prime = false;
                break;
            }
        if (prime && count++ == n) return p;
    }
}

inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

} // namespace detail

/// Deterministic sample of the unit sphere in R^d, one unit vector per column.
///
/// The first d columns are the coordinate directions; the rest are a randomly shifted Halton
/// sequence pushed through the normal quantile and normalized. A panel of n columns is a prefix
/// of the panel of n + 1 columns for the same seed. Signs are omitted since only quadratic
/// forms are evaluated on the panel.
inline Matrix sphere_panel(Eigen::Index d, Eigen::Index n, std::uint64_t seed) {
    Matrix out(d, n);
    auto rng = substream(seed, 0x5ea1, 0x5);
    std::uniform_real_distribution<double> u01;
    std::vector<double> shift(static_cast<std::size_t>(d));
    std::vector<std::uint64_t> primes(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k) {
        shift[k] = u01(rng);
        primes[k] = detail::nth_prime(static_cast<std::size_t>(k));
    }
    const boost::math::normal standard;
    for (Eigen::Index j = 0; j < n; ++j) {
        Vector v = Vector::Zero(d);
        if (j < d) {
            v(j) = 1.0;
        } else {
            const auto idx = static_cast<std::uint64_t>(j - d + 1);
            for (Eigen::Index k = 0; k < d; ++k) {
                double u = detail::radical_inverse(idx, primes[k]) + shift[k];
                u -= std::floor(u);
                u = std::clamp(u, 1e-12, 1.0 - 1e-12);
                v(k) = boost::math::quantile(standard, u);
            }
            const double nv = v.norm();
            if (nv > 0.0) {
                v /= nv;
            } else {
                v(0) = 1.0;
            }
        }
        out.col(j) = v;
    }
    return out;
}

} // namespace cylmart
