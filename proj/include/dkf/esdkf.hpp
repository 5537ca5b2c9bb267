#pragma once

// Extended-state distributed Kalman filter with quantized neighbor messages,
// in time-driven and event-triggered update variants.
//
// One sensor's cycle at time k:
//   predict   X_bar = A_{k-1} X_hat,  P_bar = (1+theta) A P A^T + ((1+theta)/theta) Q_bar + Q_tilde
//   update    K = P_bar H^T (H P_bar H^T + R/(1+mu) + B/mu)^{-1}
//             X_tilde = X_bar + K (y - H X_bar),  P_tilde = (1+mu)(I - K H) P_bar
//   quantize  X_check = G1(X_tilde) (dithered),  P_check = G2(P_tilde)
//   fuse      P = (sum_j a_ij Pc_j^{-1})^{-1},  X_hat = P sum_j a_ij Pc_j^{-1} Xc_j
// where (Xc_i, Pc_i) = (X_tilde_i, P_tilde_i) and neighbors contribute
// (X_check_j, P_check_j + nbar delta_j (2 delta_j + 1)/2 I).

#include "dkf/core_model.hpp"
#include "dkf/quantization.hpp"
#include "dkf/rng.hpp"
#include "dkf/topology.hpp"

#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace dkf {

enum class UpdateScheme { time_driven, event_triggered };

struct FilterParams {
    enum class ThetaMode { closed_form, fixed };
    enum class MuMode { fixed, optimized };

    ThetaMode theta_mode = ThetaMode::closed_form;
    double theta = 1.0;
    double theta_lo = 1e-6;
    double theta_hi = 1e6;

    MuMode mu_mode = MuMode::fixed;
    double mu = 0.3;
    double mu_lo = 1e-3;
    double mu_hi = 1e3;

    double tau = 0.001;
    UpdateScheme scheme = UpdateScheme::time_driven;

    void validate() const {
        if (!(theta_lo > 0.0 && theta_lo < theta_hi)) {
            throw ValidationError("theta bounds must satisfy 0 < lo < hi");
        }
        if (!(mu_lo > 0.0 && mu_lo < mu_hi)) {
            throw ValidationError("mu bounds must satisfy 0 < lo < hi");
        }
        if (theta_mode == ThetaMode::fixed && !(theta > theta_lo && theta < theta_hi)) {
            throw ValidationError("fixed theta must lie inside its bounds");
        }
        if (mu_mode == MuMode::fixed && !(mu > mu_lo && mu < mu_hi)) {
            throw ValidationError("fixed mu must lie inside its bounds");
        }
        if (!(tau >= 0.0)) {
            throw ValidationError("trigger threshold tau must be nonnegative");
        }
    }
};

struct NodeState {
    int id = 0;
    Vec X_hat;
    Mat P;
    Vec X_bar;
    Mat P_bar;
    Vec X_tilde;
    Mat P_tilde;
    Mat K;
    double theta = 0.0;
    double mu = 0.0;
    bool triggered = false;
    std::vector<int> trigger_log;
};

// ---------------------------------------------------------------- parameters

/// theta* = sqrt(tr(Q_bar) / tr(A P A^T)) clamped into [lo, hi].
inline double design_theta(const Mat& A, const Mat& P, const Mat& Q_bar, double lo = 1e-6, double hi = 1e6) {
    const double pred = (A * P * A.transpose()).trace();
    if (!(pred > 0.0)) {
        throw NumericalError("degenerate prediction trace");
    }
    const double q = Q_bar.trace();
    return std::clamp(std::sqrt(std::max(q, 0.0) / pred), lo, hi);
}

inline Mat innovation_matrix(const Mat& P_bar, const Mat& H, const Mat& R, const Mat& B, double mu) {
    return H * P_bar * H.transpose() + R / (1.0 + mu) + B / mu;
}

/// K = P_bar H^T (H P_bar H^T + R/(1+mu) + B/mu)^{-1}
inline Mat gain(const Mat& P_bar, const Mat& H, const Mat& R, const Mat& B, double mu) {
    const Mat s = innovation_matrix(P_bar, H, R, B, mu);
    Eigen::LDLT<Mat> ldlt(symmetrize(s));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (s.size() > 0 && ldlt.vectorD().minCoeff() <= 1e-300)) {
        throw NumericalError("singular innovation matrix");
    }
    const Mat ph = P_bar * H.transpose();
    return ldlt.solve(ph.transpose()).transpose();
}

/// tr((1+mu)(I - K*(mu) H) P_bar), the quantity minimized over mu.
inline double update_objective(const Mat& P_bar, const Mat& H, const Mat& R, const Mat& B, double mu) {
    const Mat k = gain(P_bar, H, R, B, mu);
    const auto n = P_bar.rows();
    return (1.0 + mu) * ((Mat::Identity(n, n) - k * H) * P_bar).trace();
}

/// Minimizes tr(P_tilde(mu)) on [lo, hi]: a log-spaced scan locates the best
/// bracket, then Brent refines inside it.
inline double design_mu(const Mat& P_bar, const Mat& H, const Mat& R, const Mat& B, double lo, double hi) {
    if (!(lo > 0.0 && lo < hi)) {
        throw ValidationError("mu bounds must satisfy 0 < lo < hi");
    }
    auto objective = [&](double mu) {
        const double v = update_objective(P_bar, H, R, B, mu);
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite mu objective at mu=" + std::to_string(mu));
        }
        return v;
    };
    constexpr int kScan = 400;
    const double llo = std::log(lo);
    const double lhi = std::log(hi);
    auto at = [&](int s) { return s == 0 ? lo : (s == kScan ? hi : std::exp(llo + (lhi - llo) * s / kScan)); };
    int best = 0;
    double best_v = objective(lo);
    for (int s = 1; s <= kScan; ++s) {
        const double v = objective(at(s));
        if (v < best_v) {
            best_v = v;
            best = s;
        }
    }
    const double a = at(std::max(best - 1, 0));
    const double b = at(std::min(best + 1, kScan));
    const auto [mu_star, v_star] = boost::math::tools::brent_find_minima(objective, a, b, 52);
    return v_star <= best_v ? mu_star : at(best);
}

// ---------------------------------------------------------------- stages

struct Prediction {
    Vec X_bar;
    Mat P_bar;
};

inline Prediction predict(const Vec& X_hat, const Mat& P, const Mat& A, const Mat& Q_bar, const Mat& Q_tilde,
                          double theta) {
    if (!(theta > 0.0)) {
        throw ValidationError("theta must be positive");
    }
    Prediction out;
    out.X_bar = A * X_hat;
    out.P_bar = symmetrize((1.0 + theta) * A * P * A.transpose() + ((1.0 + theta) / theta) * Q_bar + Q_tilde);
    return out;
}

struct Update {
    Vec X_tilde;
    Mat P_tilde;
    Mat K;
};

inline Update update(const Vec& X_bar, const Mat& P_bar, const Vec& y, const Mat& H, const Mat& R, const Mat& B,
                     double mu) {
    Update out;
    out.K = gain(P_bar, H, R, B, mu);
    out.X_tilde = X_bar + out.K * (y - H * X_bar);
    const auto n = P_bar.rows();
    out.P_tilde = symmetrize((1.0 + mu) * (Mat::Identity(n, n) - out.K * H) * P_bar);
    return out;
}

/// S = H^T (R + ((1+mu)/mu) B)^{-1} H
inline Mat information_metric(const Mat& H, const Mat& R, const Mat& B, double mu) {
    const Mat delta_r = R + ((1.0 + mu) / mu) * B;
    return symmetrize(H.transpose() * spd_inverse(delta_r, "R + ((1+mu)/mu) B") * H);
}

/// lambda_max(S - (mu/(1+mu)) P_bar^{-1}); the update fires when this exceeds tau.
inline double trigger_value(const Mat& P_bar, const Mat& H, const Mat& R, const Mat& B, double mu) {
    const Mat s = information_metric(H, R, B, mu);
    return lambda_max(s - (mu / (1.0 + mu)) * spd_inverse(P_bar, "P_bar"));
}

inline bool trigger_decision(const Mat& P_bar, const Mat& H, const Mat& R, const Mat& B, double mu, double tau) {
    if (!(tau >= 0.0)) {
        throw ValidationError("trigger threshold tau must be nonnegative");
    }
    return trigger_value(P_bar, H, R, B, mu) > tau;
}

/// lambda_max(P_tilde^{-1} - P_bar^{-1}) > tau, with P_tilde from the triggered branch.
inline bool trigger_decision_equivalent(const Mat& P_tilde, const Mat& P_bar, double tau) {
    return lambda_max(spd_inverse(P_tilde, "P_tilde") - spd_inverse(P_bar, "P_bar")) > tau;
}

struct Fused {
    Vec X_hat;
    Mat P;
};

/// Covariance-intersection fusion over the in-neighborhood of `self`.
/// `weights` is row `self` of the adjacency in force; `messages` holds what the
/// neighbors j != self transmitted (others are ignored).
inline Fused fuse(int self, const Vec& X_tilde, const Mat& P_tilde, const std::vector<Message>& messages,
                  const Eigen::Ref<const Eigen::RowVectorXd>& weights) {
    const auto dim = X_tilde.size();
    const int nbar = static_cast<int>(dim);
    const double wsum = weights.sum();
    if (std::abs(wsum - 1.0) > kRowSumTol) {
        throw ValidationError("fusion weights of node " + std::to_string(self + 1) + " sum to " +
                              std::to_string(wsum));
    }
    Mat info = Mat::Zero(dim, dim);
    Vec info_state = Vec::Zero(dim);

    const double own_w = weights(self);
    if (own_w > 0.0) {
        const Mat inv = spd_inverse(P_tilde, "own P_tilde of node " + std::to_string(self + 1));
        info += own_w * inv;
        info_state += own_w * (inv * X_tilde);
    }
    std::vector<char> used(static_cast<std::size_t>(weights.size()), 0);
    for (const Message& msg : messages) {
        if (msg.sender == self || msg.sender < 0 || msg.sender >= weights.size()) {
            continue;
        }
        const double w = weights(msg.sender);
        if (!(w > 0.0) || used[static_cast<std::size_t>(msg.sender)]) {
            continue;
        }
        used[static_cast<std::size_t>(msg.sender)] = 1;
        const Mat pc = compensate_covariance(msg.P_check, msg.delta, nbar);
        const Mat inv = spd_inverse(pc, "compensated covariance from node " + std::to_string(msg.sender + 1));
        info += w * inv;
        info_state += w * (inv * msg.X_check);
    }
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
        if (j != self && weights(j) > 0.0 && !used[static_cast<std::size_t>(j)]) {
            throw ValidationError("node " + std::to_string(self + 1) + " is missing the message of neighbor " +
                                  std::to_string(j + 1));
        }
    }
    Fused out;
    out.P = spd_inverse(info, "fused information of node " + std::to_string(self + 1));
    out.X_hat = out.P * info_state;
    return out;
}

// ---------------------------------------------------------------- single node phases

/// Everything a node needs from its own sensor at time k.
struct LocalInputs {
    Mat A_prev;
    Mat Q_bar_prev;
    Mat Q_tilde_prev;
    Vec y;
    Mat H;
    Mat R;
    Mat B;
};

/// Prediction plus (possibly skipped) observation update; fills X_bar/P_bar,
/// X_tilde/P_tilde, K, theta, mu, triggered and the trigger log.
inline void local_step(NodeState& node, int k, const FilterParams& params, const LocalInputs& in) {
    node.theta = params.theta_mode == FilterParams::ThetaMode::closed_form
                     ? design_theta(in.A_prev, node.P, in.Q_bar_prev, params.theta_lo, params.theta_hi)
                     : params.theta;
    auto pred = predict(node.X_hat, node.P, in.A_prev, in.Q_bar_prev, in.Q_tilde_prev, node.theta);
    node.X_bar = std::move(pred.X_bar);
    node.P_bar = std::move(pred.P_bar);

    node.mu = params.mu_mode == FilterParams::MuMode::optimized
                  ? design_mu(node.P_bar, in.H, in.R, in.B, params.mu_lo, params.mu_hi)
                  : params.mu;

    bool use_observation = true;
    if (params.scheme == UpdateScheme::event_triggered) {
        use_observation = trigger_decision(node.P_bar, in.H, in.R, in.B, node.mu, params.tau);
    }
    node.triggered = use_observation;
    if (use_observation) {
        auto upd = update(node.X_bar, node.P_bar, in.y, in.H, in.R, in.B, node.mu);
        node.X_tilde = std::move(upd.X_tilde);
        node.P_tilde = std::move(upd.P_tilde);
        node.K = std::move(upd.K);
        node.trigger_log.push_back(k);
    } else {
        node.X_tilde = node.X_bar;
        node.P_tilde = node.P_bar;
        node.K = Mat::Zero(node.X_bar.size(), in.H.rows());
    }
}

inline Message encode(const NodeState& node, double delta, Rng& dither_rng) {
    Message msg;
    msg.sender = node.id;
    msg.delta = delta;
    msg.X_check = dither_quantize_vector(node.X_tilde, delta, dither_rng);
    msg.P_check = quantize_matrix_plain(node.P_tilde, delta);
    return msg;
}

// ---------------------------------------------------------------- network

/// Runs all sensors in synchronous rounds: every node finishes its local step
/// and encodes its message before any node fuses.
class EsdkfNetwork {
public:
    EsdkfNetwork(const ExtendedModel& model, const TopologySchedule& topology, QuantizerSpec quantizer,
                 FilterParams params, std::uint64_t seed = 0, std::uint64_t run = 0)
        : model_(&model),
          topology_(&topology),
          quantizer_(std::move(quantizer)),
          params_(params),
          seed_(seed),
          run_(run) {
        params_.validate();
        if (topology.nodes() != model.sensors()) {
            throw ValidationError("topology has " + std::to_string(topology.nodes()) + " nodes but the model has " +
                                  std::to_string(model.sensors()) + " sensors");
        }
        if (!quantizer_.delta.empty() && static_cast<int>(quantizer_.delta.size()) != model.sensors()) {
            throw ValidationError("quantizer needs one step per sensor");
        }
    }

    void initialize(const std::vector<Vec>& X0, const std::vector<Mat>& P0) {
        const int n = model_->sensors();
        if (static_cast<int>(X0.size()) != n || static_cast<int>(P0.size()) != n) {
            throw ValidationError("initial estimates must be given for every sensor");
        }
        nodes_.assign(static_cast<std::size_t>(n), NodeState{});
        for (int i = 0; i < n; ++i) {
            auto& node = nodes_[static_cast<std::size_t>(i)];
            node.id = i;
            node.X_hat = X0[static_cast<std::size_t>(i)];
            node.P = symmetrize(P0[static_cast<std::size_t>(i)]);
            if (node.X_hat.size() != model_->dim() || node.P.rows() != model_->dim() ||
                node.P.cols() != model_->dim()) {
                throw ValidationError("initial estimate of sensor " + std::to_string(i + 1) +
                                      " does not match the extended dimension");
            }
        }
    }

    /// One synchronous round at time k >= 1 with observations y[i] = y_{k,i}.
    void step(int k, const std::vector<Vec>& y) {
        const int n = model_->sensors();
        if (static_cast<int>(y.size()) != n) {
            throw ValidationError("expected one observation per sensor");
        }
        LocalInputs in;
        in.A_prev = model_->A(k - 1);
        in.Q_bar_prev = model_->Q_bar(k - 1);
        in.Q_tilde_prev = model_->Q_tilde(k - 1);

        messages_.clear();
        messages_.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            auto& node = nodes_[static_cast<std::size_t>(i)];
            in.y = y[static_cast<std::size_t>(i)];
            in.H = model_->H(k, i);
            in.R = model_->R(k, i);
            in.B = model_->B(k, i);
            try {
                local_step(node, k, params_, in);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " (sensor " + std::to_string(i + 1) + ", k=" +
                                     std::to_string(k) + ")");
            }
            Rng dither = keyed_stream(seed_, StreamTag::dither,
                                      {run_, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k)});
            messages_.push_back(encode(node, quantizer_.step(i), dither));
        }

        const Digraph& g = topology_->adjacency_at(k);
        for (int i = 0; i < n; ++i) {
            auto& node = nodes_[static_cast<std::size_t>(i)];
            auto fused = fuse(i, node.X_tilde, node.P_tilde, messages_, g.adjacency().row(i));
            node.X_hat = std::move(fused.X_hat);
            node.P = std::move(fused.P);
        }
    }

    [[nodiscard]] const std::vector<NodeState>& nodes() const { return nodes_; }
    [[nodiscard]] const NodeState& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    [[nodiscard]] const std::vector<Message>& last_messages() const { return messages_; }
    [[nodiscard]] const FilterParams& params() const { return params_; }

private:
    const ExtendedModel* model_;
    const TopologySchedule* topology_;
    QuantizerSpec quantizer_;
    FilterParams params_;
    std::uint64_t seed_;
    std::uint64_t run_;
    std::vector<NodeState> nodes_;
    std::vector<Message> messages_;
};

}  // namespace dkf
