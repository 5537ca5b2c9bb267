#pragma once

// Interval quantizer g(z) = m*delta for (m - 1/2) delta <= z < (m + 1/2) delta,
// its dithered vector form, and the covariance compensation that keeps
// quantized neighbor messages consistent.

#include "dkf/linalg.hpp"
#include "dkf/rng.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace dkf {

/// Per-sensor quantization steps; delta == 0 disables quantization for that sensor.
struct QuantizerSpec {
    std::vector<double> delta;
    bool dither = true;

    [[nodiscard]] double step(int sensor) const {
        return delta.empty() ? 0.0 : delta[static_cast<std::size_t>(sensor)];
    }
};

/// Grid index m of z.
inline std::int64_t quantize_index(double z, double delta) {
    if (!std::isfinite(z)) {
        throw ValidationError("quantize: non-finite input");
    }
    if (!(delta > 0.0)) {
        throw ValidationError("quantize: step must be positive");
    }
    return static_cast<std::int64_t>(std::floor(z / delta + 0.5));
}

inline double quantize(double z, double delta) {
    return static_cast<double>(quantize_index(z, delta)) * delta;
}

struct DitheredVector {
    Vec value;
    Vec dither;
};

/// g(x(s) + xi(s)) elementwise with xi uniform on [-delta/2, delta/2).
/// Returns the dither used alongside the output so the pure quantization error
/// g(x+xi) - (x+xi) can be inspected.
inline DitheredVector dither_quantize_detailed(const Vec& x, double delta, Rng& rng) {
    if (delta < 0.0) {
        throw ValidationError("quantization step must be nonnegative");
    }
    if (delta == 0.0) {
        return {x, Vec::Zero(x.size())};
    }
    std::uniform_real_distribution<double> ud(-0.5 * delta, 0.5 * delta);
    DitheredVector out{Vec(x.size()), Vec(x.size())};
    for (Eigen::Index s = 0; s < x.size(); ++s) {
        const double xi = ud(rng);
        out.dither(s) = xi;
        out.value(s) = quantize(x(s) + xi, delta);
    }
    return out;
}

inline Vec dither_quantize_vector(const Vec& x, double delta, Rng& rng) {
    return dither_quantize_detailed(x, delta, rng).value;
}

/// Elementwise g without dither. Symmetric input gives symmetric output.
inline Mat quantize_matrix_plain(const Mat& P, double delta) {
    if (delta < 0.0) {
        throw ValidationError("quantization step must be nonnegative");
    }
    if (delta == 0.0) {
        return P;
    }
    return P.unaryExpr([delta](double v) { return quantize(v, delta); });
}

/// Scalar added to the diagonal of a received covariance: nbar * delta * (2 delta + 1) / 2.
inline double compensation_scalar(double delta, int nbar) {
    return static_cast<double>(nbar) * delta * (2.0 * delta + 1.0) / 2.0;
}

inline Mat compensate_covariance(const Mat& P_check, double delta, int nbar) {
    if (delta == 0.0) {
        return P_check;
    }
    Mat out = P_check;
    out.diagonal().array() += compensation_scalar(delta, nbar);
    return out;
}

/// What a sensor transmits to its out-neighbors after the update stage.
struct Message {
    int sender = 0;
    Vec X_check;
    Mat P_check;
    double delta = 0.0;
};

namespace detail {

inline std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
        throw ValidationError("malformed number '" + tok + "'");
    }
    return v;
}

}  // namespace detail

/// One line: `sender delta dim` then dim + dim*dim values, row-major.
/// With delta > 0 the values are the integers m (value / delta); with delta == 0
/// they are shortest round-trip decimals.
inline std::string encode_message(const Message& msg) {
    const auto dim = msg.X_check.size();
    if (msg.P_check.rows() != dim || msg.P_check.cols() != dim) {
        throw ValidationError("message covariance shape " + shape_of(msg.P_check) + " does not match estimate");
    }
    std::ostringstream os;
    os << msg.sender << ' ' << detail::shortest(msg.delta) << ' ' << dim;
    auto put = [&](double v) {
        if (msg.delta > 0.0) {
            os << ' ' << quantize_index(v, msg.delta);
        } else {
            os << ' ' << detail::shortest(v);
        }
    };
    for (Eigen::Index s = 0; s < dim; ++s) {
        put(msg.X_check(s));
    }
    for (Eigen::Index r = 0; r < dim; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            put(msg.P_check(r, c));
        }
    }
    return os.str();
}

inline Message decode_message(const std::string& line) {
    std::istringstream is(line);
    std::string tok;
    std::vector<std::string> toks;
    while (is >> tok) {
        toks.push_back(tok);
    }
    if (toks.size() < 3) {
        throw ValidationError("message line too short");
    }
    Message msg;
    msg.sender = static_cast<int>(detail::parse_double(toks[0]));
    msg.delta = detail::parse_double(toks[1]);
    const auto dim = static_cast<Eigen::Index>(detail::parse_double(toks[2]));
    if (dim < 0 || toks.size() != static_cast<std::size_t>(3 + dim + dim * dim)) {
        throw ValidationError("message line has " + std::to_string(toks.size()) + " fields for dimension " +
                              std::to_string(dim));
    }
    std::size_t t = 3;
    auto get = [&]() {
        const std::string& s = toks[t++];
        if (msg.delta > 0.0) {
            std::int64_t m = 0;
            auto res = std::from_chars(s.data(), s.data() + s.size(), m);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
                throw ValidationError("malformed grid index '" + s + "'");
            }
            return static_cast<double>(m) * msg.delta;
        }
        return detail::parse_double(s);
    };
    msg.X_check.resize(dim);
    for (Eigen::Index s = 0; s < dim; ++s) {
        msg.X_check(s) = get();
    }
    msg.P_check.resize(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            msg.P_check(r, c) = get();
        }
    }
    return msg;
}

}  // namespace dkf
