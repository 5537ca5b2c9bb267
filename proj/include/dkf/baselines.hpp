#pragma once

// Comparison filters: a centralized Kalman filter on the nominal model (CKF),
// its extended-state counterpart (CESKF), and a consensus-on-posteriors
// distributed filter (DSEA-CP). None of them model the observation bias, and
// CKF and DSEA-CP also ignore the uncertain dynamics.

#include "dkf/core_model.hpp"
#include "dkf/topology.hpp"

#include <vector>

namespace dkf {

struct CentralizedState {
    Vec x_hat;
    Mat P;
};

/// Rows of all sensors stacked in sensor order.
struct StackedObservation {
    Vec y;
    Mat H;
    Mat R;
};

inline StackedObservation stack_observations(const std::vector<Vec>& ys, const std::vector<Mat>& Hs,
                                             const std::vector<Mat>& Rs) {
    Eigen::Index rows = 0;
    for (const auto& h : Hs) {
        rows += h.rows();
    }
    const Eigen::Index cols = Hs.empty() ? 0 : Hs.front().cols();
    StackedObservation out{Vec(rows), Mat(rows, cols), Mat::Zero(rows, rows)};
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < Hs.size(); ++i) {
        const auto m = Hs[i].rows();
        out.y.segment(r, m) = ys[i];
        out.H.middleRows(r, m) = Hs[i];
        out.R.block(r, r, m, m) = Rs[i];
        r += m;
    }
    return out;
}

/// Textbook predict/update. Shared by CKF and CESKF.
inline CentralizedState kalman_step(const CentralizedState& s, const Mat& A, const Mat& Q, const StackedObservation& obs) {
    const Vec x_bar = A * s.x_hat;
    const Mat P_bar = symmetrize(A * s.P * A.transpose() + Q);
    const Mat S = symmetrize(obs.H * P_bar * obs.H.transpose() + obs.R);
    Eigen::LDLT<Mat> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (S.size() > 0 && ldlt.vectorD().minCoeff() <= 0.0)) {
        throw NumericalError("singular innovation matrix");
    }
    const Mat K = ldlt.solve(obs.H * P_bar).transpose();
    CentralizedState out;
    out.x_hat = x_bar + K * (obs.y - obs.H * x_bar);
    const auto n = P_bar.rows();
    out.P = symmetrize((Mat::Identity(n, n) - K * obs.H) * P_bar);
    return out;
}

/// Nominal model: x_bar = A_bar x, P_bar = A_bar P A_bar^T + Q, stacked H_bar and block-diagonal R.
inline CentralizedState ckf_step(const CentralizedState& s, const std::vector<Vec>& ys, const SystemModel& model,
                                 int k) {
    std::vector<Mat> Hs;
    std::vector<Mat> Rs;
    for (int i = 0; i < model.sensors(); ++i) {
        Hs.push_back(model.H_bar(k, i));
        Rs.push_back(model.R(k, i));
    }
    return kalman_step(s, model.A_bar(k - 1), model.Q(k - 1), stack_observations(ys, Hs, Rs));
}

/// Extended model with process covariance Q_tilde + D Q_hat D^T, where Q_hat is
/// supplied separately so the centralized filter can be tuned apart from the
/// distributed one.
inline CentralizedState ceskf_step(const CentralizedState& s, const std::vector<Vec>& ys, const ExtendedModel& model,
                                   int k, const Mat& Q_hat) {
    std::vector<Mat> Hs;
    std::vector<Mat> Rs;
    for (int i = 0; i < model.sensors(); ++i) {
        Hs.push_back(model.H(k, i));
        Rs.push_back(model.R(k, i));
    }
    Mat Q = model.Q_tilde(k - 1);
    if (model.p() > 0) {
        const Mat d = model.D();
        Q += d * Q_hat * d.transpose();
    }
    return kalman_step(s, model.A(k - 1), Q, stack_observations(ys, Hs, Rs));
}

/// Information pair (Omega = P^{-1}, q = P^{-1} x_hat).
struct ConsensusNodeState {
    Mat Omega;
    Vec q;

    static ConsensusNodeState from_moments(const Vec& x_hat, const Mat& P) {
        ConsensusNodeState s;
        s.Omega = spd_inverse(P, "DSEA-CP initial covariance");
        s.q = s.Omega * x_hat;
        return s;
    }
    [[nodiscard]] Mat covariance() const { return spd_inverse(Omega, "DSEA-CP information"); }
    [[nodiscard]] Vec estimate() const { return covariance() * q; }
};

/// Local information-form KF on the nominal model followed by `iterations`
/// consensus sweeps Omega_i <- sum_j a_ij Omega_j, q_i <- sum_j a_ij q_j.
inline std::vector<ConsensusNodeState> dsea_cp_step(const std::vector<ConsensusNodeState>& nodes,
                                                    const std::vector<Vec>& ys, const SystemModel& model,
                                                    const Digraph& graph, int k, int iterations = 1) {
    const int n = static_cast<int>(nodes.size());
    if (graph.size() != n) {
        throw ValidationError("DSEA-CP graph size does not match node count");
    }
    if (auto err = Digraph::check(graph.adjacency())) {
        throw ValidationError("DSEA-CP weights: " + *err);
    }
    const Mat A = model.A_bar(k - 1);
    const Mat Q = model.Q(k - 1);
    std::vector<ConsensusNodeState> local(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& s = nodes[static_cast<std::size_t>(i)];
        const Mat P = s.covariance();
        const Vec x = P * s.q;
        const Mat P_bar = symmetrize(A * P * A.transpose() + Q);
        const Mat Omega_bar = spd_inverse(P_bar, "DSEA-CP prediction of node " + std::to_string(i + 1));
        const Mat H = model.H_bar(k, i);
        const Mat R_inv = spd_inverse(model.R(k, i), "R of node " + std::to_string(i + 1));
        auto& out = local[static_cast<std::size_t>(i)];
        out.Omega = symmetrize(Omega_bar + H.transpose() * R_inv * H);
        out.q = Omega_bar * (A * x) + H.transpose() * R_inv * ys[static_cast<std::size_t>(i)];
    }
    for (int it = 0; it < iterations; ++it) {
        std::vector<ConsensusNodeState> mixed(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            auto& out = mixed[static_cast<std::size_t>(i)];
            out.Omega = Mat::Zero(local.front().Omega.rows(), local.front().Omega.cols());
            out.q = Vec::Zero(local.front().q.size());
            for (int j = 0; j < n; ++j) {
                const double w = graph.weight(i, j);
                if (w > 0.0) {
                    out.Omega += w * local[static_cast<std::size_t>(j)].Omega;
                    out.q += w * local[static_cast<std::size_t>(j)].q;
                }
            }
            out.Omega = symmetrize(out.Omega);
        }
        local = std::move(mixed);
    }
    return local;
}

}  // namespace dkf
