#pragma once

// Original and extended state-space models, transition products,
// collective-observability grammians and supporting-sequence detection.

#include "dkf/linalg.hpp"
#include "dkf/rng.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dkf {

using MatrixFn = std::function<Mat(int k)>;
using SensorMatrixFn = std::function<Mat(int k, int sensor)>;

/// x_{k+1} = A_bar x_k + G_bar f(x_k, k) + w_k
/// y_{k,i} = H_bar_i x_k + b_{k,i} + v_{k,i}
///
/// Sensors are indexed from 0. `bias` receives the per-run initial bias b_{0,i}
/// drawn by `initial_bias`.
struct SystemModel {
    int n = 0;
    int p = 0;
    std::vector<int> m;

    MatrixFn A_bar;
    MatrixFn G_bar;
    SensorMatrixFn H_bar;
    MatrixFn Q;
    SensorMatrixFn R;
    SensorMatrixFn B;
    MatrixFn Q_hat;

    std::function<Vec(const Vec& x, int k)> f;
    std::function<Vec(const Vec& x, int k, int sensor, const Vec& b0)> bias;
    std::function<Vec(int sensor, Rng& rng)> initial_bias;

    std::function<Vec(int k, Rng& rng)> process_noise;
    std::function<Vec(int k, int sensor, Rng& rng)> observation_noise;

    [[nodiscard]] int sensors() const { return static_cast<int>(m.size()); }
};

namespace detail {

inline void expect_shape(const Mat& mat, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
    if (mat.rows() != rows || mat.cols() != cols) {
        throw ValidationError(name + " has shape " + shape_of(mat) + ", expected " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
}

}  // namespace detail

/// Checks every matrix function of `model` at time k against the declared dimensions.
inline void validate_dimensions(const SystemModel& model, int k) {
    using detail::expect_shape;
    const std::string at = " at k=" + std::to_string(k);
    if (model.n <= 0) {
        throw ValidationError("state dimension n must be positive");
    }
    if (model.p < 0) {
        throw ValidationError("uncertainty dimension p must be nonnegative");
    }
    expect_shape(model.A_bar(k), model.n, model.n, "A_bar" + at);
    if (model.p > 0) {
        expect_shape(model.G_bar(k), model.n, model.p, "G_bar" + at);
        expect_shape(model.Q_hat(k), model.p, model.p, "Q_hat" + at);
    }
    expect_shape(model.Q(k), model.n, model.n, "Q" + at);
    for (int i = 0; i < model.sensors(); ++i) {
        const int mi = model.m[static_cast<std::size_t>(i)];
        const std::string s = " of sensor " + std::to_string(i + 1) + at;
        expect_shape(model.H_bar(k, i), mi, model.n, "H_bar" + s);
        expect_shape(model.R(k, i), mi, mi, "R" + s);
        expect_shape(model.B(k, i), mi, mi, "B" + s);
    }
}

inline void validate_dimensions(const SystemModel& model, int k_begin, int k_end) {
    for (int k = k_begin; k <= k_end; ++k) {
        validate_dimensions(model, k);
    }
}

/// X_{k+1} = A_k X_k + D u_k + w_k,  y_{k,i} = H_{k,i} X_k + b_{k,i} + v_{k,i}
/// with X = [x; f].
class ExtendedModel {
public:
    explicit ExtendedModel(SystemModel model) : model_(std::move(model)) {}

    [[nodiscard]] const SystemModel& original() const { return model_; }
    [[nodiscard]] int n() const { return model_.n; }
    [[nodiscard]] int p() const { return model_.p; }
    [[nodiscard]] int dim() const { return model_.n + model_.p; }
    [[nodiscard]] int sensors() const { return model_.sensors(); }

    [[nodiscard]] Mat A(int k) const {
        const int n = model_.n;
        const int p = model_.p;
        if (p == 0) {
            return model_.A_bar(k);
        }
        Mat a = Mat::Zero(n + p, n + p);
        a.topLeftCorner(n, n) = model_.A_bar(k);
        a.topRightCorner(n, p) = model_.G_bar(k);
        a.bottomRightCorner(p, p).setIdentity();
        return a;
    }

    [[nodiscard]] Mat H(int k, int sensor) const {
        const Mat hb = model_.H_bar(k, sensor);
        Mat h = Mat::Zero(hb.rows(), dim());
        h.leftCols(model_.n) = hb;
        return h;
    }

    [[nodiscard]] Mat D() const {
        Mat d = Mat::Zero(dim(), model_.p);
        d.bottomRows(model_.p).setIdentity();
        return d;
    }

    [[nodiscard]] Mat Q_tilde(int k) const {
        return block_diag(model_.Q(k), Mat::Zero(model_.p, model_.p));
    }

    [[nodiscard]] Mat Q_bar(int k) const {
        if (model_.p == 0) {
            return Mat::Zero(dim(), dim());
        }
        const Mat d = D();
        return d * model_.Q_hat(k) * d.transpose();
    }

    [[nodiscard]] Mat R(int k, int sensor) const { return model_.R(k, sensor); }
    [[nodiscard]] Mat B(int k, int sensor) const { return model_.B(k, sensor); }

    /// X_k = [x_k; f(x_k, k)].
    [[nodiscard]] Vec extend(const Vec& x, int k) const {
        Vec X(dim());
        X.head(model_.n) = x;
        if (model_.p > 0) {
            X.tail(model_.p) = model_.f(x, k);
        }
        return X;
    }

private:
    SystemModel model_;
};

inline ExtendedModel build_extended_model(const SystemModel& model) {
    validate_dimensions(model, 0);
    return ExtendedModel(model);
}

/// Phi_{j,k} of the extended system: A_{j-1} ... A_k, identity when j == k.
inline Mat transition(const ExtendedModel& model, int j, int k) {
    Mat phi = Mat::Identity(model.dim(), model.dim());
    for (int t = k; t < j; ++t) {
        phi = model.A(t) * phi;
    }
    return phi;
}

/// Phi_bar_{j,k} of the original system.
inline Mat transition_bar(const SystemModel& model, int j, int k) {
    Mat phi = Mat::Identity(model.n, model.n);
    for (int t = k; t < j; ++t) {
        phi = model.A_bar(t) * phi;
    }
    return phi;
}

/// Phi_tilde_{j,k+1} = sum_{i=k+1}^{j} Phi_bar_{j,i} G_bar_{i-1}, the coupling block of Phi_{j,k}.
inline Mat transition_coupling(const SystemModel& model, int j, int k) {
    Mat acc = Mat::Zero(model.n, model.p);
    for (int i = k + 1; i <= j; ++i) {
        acc += transition_bar(model, j, i) * model.G_bar(i - 1);
    }
    return acc;
}

struct ObservabilityGrammian {
    Mat theta11;
    Mat theta12;
    Mat theta22;

    [[nodiscard]] Mat assembled() const {
        const auto n = theta11.rows();
        const auto p = theta22.rows();
        Mat g(n + p, n + p);
        g.topLeftCorner(n, n) = theta11;
        g.topRightCorner(n, p) = theta12;
        g.bottomLeftCorner(p, n) = theta12.transpose();
        g.bottomRightCorner(p, p) = theta22;
        return g;
    }
};

/// Grammian blocks over j = k..k+window, summed over all sensors, weighted by (R+B)^{-1}.
inline ObservabilityGrammian observability_grammian(const ExtendedModel& model, int k, int window) {
    const SystemModel& sys = model.original();
    const int n = sys.n;
    const int p = sys.p;
    ObservabilityGrammian g{Mat::Zero(n, n), Mat::Zero(n, p), Mat::Zero(p, p)};

    Mat phi_bar = Mat::Identity(n, n);
    Mat phi_tilde = Mat::Zero(n, p);
    for (int j = k; j <= k + window; ++j) {
        if (j > k) {
            // Phi_{j,k} = A_{j-1} Phi_{j-1,k} blockwise
            phi_tilde = sys.A_bar(j - 1) * phi_tilde + (p > 0 ? sys.G_bar(j - 1) : Mat::Zero(n, 0));
            phi_bar = sys.A_bar(j - 1) * phi_bar;
        }
        for (int i = 0; i < sys.sensors(); ++i) {
            const Mat h = sys.H_bar(j, i);
            const Mat w = sys.R(j, i) + sys.B(j, i);
            Mat w_inv;
            try {
                w_inv = spd_inverse(w, "R+B");
            } catch (const NumericalError&) {
                throw NumericalError("R+B of sensor " + std::to_string(i + 1) + " at k=" + std::to_string(j) +
                                     " is singular");
            }
            const Mat hp = h * phi_bar;
            const Mat ht = h * phi_tilde;
            g.theta11 += hp.transpose() * w_inv * hp;
            g.theta12 += hp.transpose() * w_inv * ht;
            g.theta22 += ht.transpose() * w_inv * ht;
        }
    }
    g.theta11 = symmetrize(g.theta11);
    g.theta22 = symmetrize(g.theta22);
    return g;
}

struct ObservabilityReport {
    bool holds = false;
    /// lambda_min(Theta11 - alpha I)
    double margin1 = 0.0;
    /// lambda_min(Theta22 - Theta12^T (Theta11 - alpha I)^{-1} Theta12 - alpha I); +inf when p == 0,
    /// -inf when the first block is not positive definite.
    double margin2 = 0.0;
    ObservabilityGrammian grammian;
};

inline constexpr double kDefiniteTol = 1e-9;

inline ObservabilityReport check_collective_observability(const ExtendedModel& model, int k, int window,
                                                          double alpha) {
    if (!(alpha > 0.0)) {
        throw ValidationError("alpha must be positive");
    }
    if (window < 0) {
        throw ValidationError("window must be nonnegative");
    }
    ObservabilityReport rep;
    rep.grammian = observability_grammian(model, k, window);
    const auto& g = rep.grammian;
    const Mat shifted = g.theta11 - alpha * Mat::Identity(g.theta11.rows(), g.theta11.cols());
    rep.margin1 = lambda_min(shifted);
    if (model.p() == 0) {
        rep.margin2 = std::numeric_limits<double>::infinity();
    } else if (rep.margin1 > kDefiniteTol) {
        const Mat schur = g.theta22 - g.theta12.transpose() * spd_inverse(shifted, "Theta11 - alpha I") * g.theta12 -
                          alpha * Mat::Identity(model.p(), model.p());
        rep.margin2 = lambda_min(schur);
    } else {
        rep.margin2 = -std::numeric_limits<double>::infinity();
    }
    rep.holds = rep.margin1 > kDefiniteTol && rep.margin2 > kDefiniteTol;
    return rep;
}

struct RankReport {
    int rank = 0;
    bool holds = false;
};

/// rank([[I - A_bar, -G_bar], [H_stack, 0]]) == n + p
inline RankReport check_rank_condition(const Mat& A_bar, const Mat& G_bar, const Mat& H_stack) {
    const auto n = A_bar.rows();
    if (A_bar.cols() != n) {
        throw ValidationError("A_bar must be square, got " + shape_of(A_bar));
    }
    const auto p = G_bar.cols();
    if (p > 0 && G_bar.rows() != n) {
        throw ValidationError("G_bar has shape " + shape_of(G_bar) + ", expected " + std::to_string(n) + " rows");
    }
    if (H_stack.cols() != n) {
        throw ValidationError("H_stack has shape " + shape_of(H_stack) + ", expected " + std::to_string(n) +
                              " columns");
    }
    Mat m = Mat::Zero(n + H_stack.rows(), n + p);
    m.topLeftCorner(n, n) = Mat::Identity(n, n) - A_bar;
    if (p > 0) {
        m.topRightCorner(n, p) = -G_bar;
    }
    m.bottomLeftCorner(H_stack.rows(), n) = H_stack;
    Eigen::FullPivLU<Mat> lu(m);
    lu.setThreshold(1e-10);
    RankReport rep;
    rep.rank = static_cast<int>(lu.rank());
    rep.holds = rep.rank == n + p;
    return rep;
}

struct LssResult {
    std::vector<int> times;
    /// Largest gap T_{l+1} - T_l; nullopt with fewer than two entries.
    std::optional<int> sup_gap;
    std::string diagnostic;

    [[nodiscard]] bool found() const { return !times.empty(); }
};

inline constexpr double kDefaultLssBeta = 1e-8;

/// Greedy L-step supporting sequence on a finite horizon: every window
/// [T_l, T_l + L) has lambda_min(A A^T) >= beta and T_{l+1} >= T_l + L.
inline LssResult find_lss(const std::vector<Mat>& seq, int L, double beta = kDefaultLssBeta) {
    if (L < 1) {
        throw ValidationError("L must be at least 1");
    }
    if (!(beta > 0.0)) {
        throw ValidationError("beta must be positive");
    }
    const int horizon = static_cast<int>(seq.size());
    std::vector<char> good(seq.size());
    for (int k = 0; k < horizon; ++k) {
        const Mat& a = seq[static_cast<std::size_t>(k)];
        good[static_cast<std::size_t>(k)] = lambda_min(a * a.transpose()) >= beta ? 1 : 0;
    }
    LssResult res;
    int k = 0;
    while (k + L <= horizon) {
        bool window_ok = true;
        for (int s = 0; s < L; ++s) {
            if (!good[static_cast<std::size_t>(k + s)]) {
                window_ok = false;
                break;
            }
        }
        if (window_ok) {
            res.times.push_back(k);
            k += L;
        } else {
            ++k;
        }
    }
    for (std::size_t l = 1; l < res.times.size(); ++l) {
        const int gap = res.times[l] - res.times[l - 1];
        res.sup_gap = std::max(res.sup_gap.value_or(0), gap);
    }
    if (res.times.empty()) {
        res.diagnostic = "no L-SS found on horizon [0," + std::to_string(horizon) + ")";
    }
    return res;
}

inline LssResult find_lss(const MatrixFn& a, int horizon, int L, double beta = kDefaultLssBeta) {
    std::vector<Mat> seq;
    seq.reserve(static_cast<std::size_t>(std::max(horizon, 0)));
    for (int k = 0; k < horizon; ++k) {
        seq.push_back(a(k));
    }
    return find_lss(seq, L, beta);
}

}  // namespace dkf
