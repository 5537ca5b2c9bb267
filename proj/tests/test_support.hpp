#pragma once

// Random instances and independent oracles shared by the unit tests and the
// acceptance binary.

#include "dkf/linalg.hpp"
#include "dkf/rng.hpp"

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

namespace testing_support {

using dkf::Mat;
using dkf::Rng;
using dkf::Vec;

inline int uniform_int(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline Mat random_matrix(Rng& rng, int rows, int cols) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m(r, c) = dkf::uniform(-1.0, 1.0, rng);
        }
    }
    return m;
}

inline Mat random_orthogonal(Rng& rng, int n) {
    Eigen::HouseholderQR<Mat> qr(random_matrix(rng, n, n) + 0.1 * Mat::Identity(n, n));
    return qr.householderQ() * Mat::Identity(n, n);
}

/// Symmetric matrix with eigenvalues drawn log-uniformly from [lo, hi].
inline Mat random_spd(Rng& rng, int n, double lo, double hi) {
    const Mat u = random_orthogonal(rng, n);
    Vec d(n);
    for (int i = 0; i < n; ++i) {
        d(i) = std::exp(dkf::uniform(std::log(lo), std::log(hi), rng));
    }
    return dkf::symmetrize(u * d.asDiagonal() * u.transpose());
}

/// Positive semidefinite matrix of random rank 0..n.
inline Mat random_psd(Rng& rng, int n, double hi) {
    const int rank = uniform_int(rng, 0, n);
    const Mat u = random_orthogonal(rng, n);
    Vec d = Vec::Zero(n);
    for (int i = 0; i < rank; ++i) {
        d(i) = dkf::uniform(0.1, hi, rng);
    }
    return dkf::symmetrize(u * d.asDiagonal() * u.transpose());
}

struct UpdateInstance {
    Mat P_bar;
    Mat H;
    Mat R;
    Mat B;
    double mu = 0.3;
    double tau = 0.0;
};

/// Extended dimension 1..max_dim, 1..3 observation rows, SPD P_bar and R, PSD B.
inline UpdateInstance random_update_instance(Rng& rng, int max_dim) {
    UpdateInstance u;
    const int dim = uniform_int(rng, 1, max_dim);
    const int m = uniform_int(rng, 1, 3);
    u.P_bar = random_spd(rng, dim, 0.1, 10.0);
    u.H = random_matrix(rng, m, dim);
    u.R = random_spd(rng, m, 0.5, 5.0);
    u.B = random_psd(rng, m, 5.0);
    u.mu = dkf::uniform(0.05, 3.0, rng);
    u.tau = dkf::uniform(0.0, 1.0, rng);
    return u;
}

/// tr(P_tilde(mu)) from the information form
/// P_tilde^{-1} = P_bar^{-1}/(1+mu) + H^T (R + ((1+mu)/mu) B)^{-1} H.
inline double information_form_trace(const UpdateInstance& u, double mu) {
    const Mat info = u.P_bar.inverse() / (1.0 + mu) + u.H.transpose() * (u.R + ((1.0 + mu) / mu) * u.B).inverse() * u.H;
    return info.inverse().trace();
}

/// Golden-section minimization of f over log x on [lo, hi].
inline double golden_min_log(const std::function<double(double)>& f, double lo, double hi) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(lo);
    double b = std::log(hi);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = f(std::exp(c));
    double fd = f(std::exp(d));
    for (int it = 0; it < 300 && b - a > 1e-13; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(std::exp(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(std::exp(d));
        }
    }
    return std::exp(0.5 * (a + b));
}

/// Loads tests/golden/<name>.json. With DKF_UPDATE_GOLDEN set, `current` is
/// written first so the file can be regenerated deliberately.
inline nlohmann::json golden(const std::string& name, const nlohmann::json& current) {
    const std::filesystem::path path = std::filesystem::path(DKF_GOLDEN_DIR) / (name + ".json");
    if (std::getenv("DKF_UPDATE_GOLDEN") != nullptr) {
        std::ofstream(path) << current.dump(1) << '\n';
    }
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("missing golden file " + path.string());
    }
    return nlohmann::json::parse(in);
}

inline nlohmann::json to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(row);
    }
    return rows;
}

/// Largest elementwise relative difference between two JSON number trees.
inline double json_gap(const nlohmann::json& a, const nlohmann::json& b) {
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>();
        const double y = b.get<double>();
        return std::abs(x - y) / std::max(1.0, std::abs(y));
    }
    if (a.is_array() && b.is_array() && a.size() == b.size()) {
        double g = 0.0;
        for (std::size_t s = 0; s < a.size(); ++s) {
            g = std::max(g, json_gap(a[s], b[s]));
        }
        return g;
    }
    if (a.is_object() && b.is_object() && a.size() == b.size()) {
        double g = 0.0;
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) {
                return std::numeric_limits<double>::infinity();
            }
            g = std::max(g, json_gap(it.value(), b.at(it.key())));
        }
        return g;
    }
    return a == b ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace testing_support
