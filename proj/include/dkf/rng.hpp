#pragma once

#include "dkf/linalg.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dkf {

using Rng = std::mt19937_64;

/// Stream tags keep independent consumers of one master seed apart.
enum class StreamTag : std::uint32_t {
    truth = 1,
    dither = 2,
    validation = 3,
    battery = 4,
};

/// Deterministic generator for a (seed, tag, key...) tuple. Two calls with the
/// same key always yield the same sequence regardless of thread or call order.
inline Rng keyed_stream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    words.reserve(4 + 2 * key.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    words.push_back(static_cast<std::uint32_t>(tag));
    words.push_back(static_cast<std::uint32_t>(key.size()));
    for (auto v : key) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline Vec standard_normal(Eigen::Index dim, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec z(dim);
    for (Eigen::Index s = 0; s < dim; ++s) {
        z(s) = nd(rng);
    }
    return z;
}

/// Zero-mean Gaussian sample with covariance `cov` (positive semidefinite).
inline Vec gaussian(const Mat& cov, Rng& rng) {
    const Vec z = standard_normal(cov.rows(), rng);
    if (cov.size() == 0) {
        return z;
    }
    Eigen::LDLT<Mat> ldlt(symmetrize(cov));
    if (ldlt.info() != Eigen::Success) {
        throw NumericalError("gaussian: covariance factorization failed");
    }
    // cov = P^T L D L^T P
    Vec d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    Vec y = ldlt.matrixL() * (d.asDiagonal() * z);
    return ldlt.transpositionsP().transpose() * y;
}

inline double uniform(double low, double high, Rng& rng) {
    std::uniform_real_distribution<double> ud(low, high);
    return ud(rng);
}

}  // namespace dkf
