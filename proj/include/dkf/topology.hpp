#pragma once

// Switching weighted digraphs. a_{i,j} > 0 means node i receives from node j.

#include "dkf/linalg.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dkf {

inline constexpr double kRowSumTol = 1e-12;

class Digraph {
public:
    Digraph() = default;

    /// Throws ValidationError unless `adjacency` is square, nonnegative,
    /// row stochastic and has a positive diagonal.
    explicit Digraph(Mat adjacency) : adj_(std::move(adjacency)) {
        if (auto err = check(adj_)) {
            throw ValidationError(*err);
        }
    }

    /// Skips the row-stochastic checks. Used for union graphs.
    static Digraph unchecked(Mat adjacency) {
        Digraph g;
        g.adj_ = std::move(adjacency);
        return g;
    }

    /// Reason the matrix is not a valid weighted adjacency, if any.
    static std::optional<std::string> check(const Mat& a) {
        if (a.rows() != a.cols() || a.rows() == 0) {
            return "adjacency must be a nonempty square matrix, got " + shape_of(a);
        }
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            if (!(a(i, i) > 0.0)) {
                return "diagonal entry a(" + std::to_string(i + 1) + "," + std::to_string(i + 1) +
                       ") is not positive";
            }
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                if (!(a(i, j) >= 0.0)) {
                    return "entry a(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") is negative";
                }
            }
            const double sum = a.row(i).sum();
            if (std::abs(sum - 1.0) > kRowSumTol) {
                return "row " + std::to_string(i + 1) + " is not row stochastic (sums to " + std::to_string(sum) + ")";
            }
        }
        return std::nullopt;
    }

    [[nodiscard]] int size() const { return static_cast<int>(adj_.rows()); }
    [[nodiscard]] const Mat& adjacency() const { return adj_; }
    [[nodiscard]] double weight(int i, int j) const { return adj_(i, j); }
    [[nodiscard]] bool has_edge(int i, int j) const { return adj_(i, j) > 0.0; }

    /// Neighbors of i including i itself.
    [[nodiscard]] std::vector<int> neighbors(int i) const {
        std::vector<int> out;
        for (int j = 0; j < size(); ++j) {
            if (has_edge(i, j)) {
                out.push_back(j);
            }
        }
        return out;
    }

private:
    Mat adj_;
};

/// Edge present iff positive in any constituent; weights set to 1.
inline Digraph union_graph(const std::vector<const Digraph*>& graphs) {
    if (graphs.empty()) {
        throw ValidationError("union of zero graphs");
    }
    const int n = graphs.front()->size();
    Mat u = Mat::Zero(n, n);
    for (const Digraph* g : graphs) {
        if (g->size() != n) {
            throw ValidationError("union of graphs with different node counts");
        }
        u = (g->adjacency().array() > 0.0 || u.array() > 0.0).cast<double>().matrix();
    }
    return Digraph::unchecked(std::move(u));
}

inline Digraph union_graph(const Digraph& a, const Digraph& b) {
    return union_graph(std::vector<const Digraph*>{&a, &b});
}

/// Depth-first search from every node over positive-weight edges.
inline bool is_strongly_connected(const Digraph& g) {
    const int n = g.size();
    for (int src = 0; src < n; ++src) {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack{src};
        seen[static_cast<std::size_t>(src)] = 1;
        int count = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            // information flows u -> v when v receives from u
            for (int v = 0; v < n; ++v) {
                if (!seen[static_cast<std::size_t>(v)] && g.has_edge(v, u)) {
                    seen[static_cast<std::size_t>(v)] = 1;
                    ++count;
                    stack.push_back(v);
                }
            }
        }
        if (count != n) {
            return false;
        }
    }
    return true;
}

class TopologySchedule {
public:
    /// `sigma` maps k to a 1-based index into `graphs`.
    TopologySchedule(std::vector<Digraph> graphs, std::function<int(int k)> sigma)
        : graphs_(std::move(graphs)), sigma_(std::move(sigma)) {
        if (graphs_.empty()) {
            throw ValidationError("topology schedule needs at least one graph");
        }
        for (const auto& g : graphs_) {
            if (g.size() != graphs_.front().size()) {
                throw ValidationError("all graphs in a schedule must have the same node count");
            }
        }
    }

    [[nodiscard]] int nodes() const { return graphs_.front().size(); }
    [[nodiscard]] const std::vector<Digraph>& graphs() const { return graphs_; }

    /// 1-based graph index at time k.
    [[nodiscard]] int sigma(int k) const {
        const int s = sigma_(k);
        if (s < 1 || s > static_cast<int>(graphs_.size())) {
            throw ValidationError("sigma(" + std::to_string(k) + ") = " + std::to_string(s) + " is not a graph index");
        }
        return s;
    }

    [[nodiscard]] const Digraph& adjacency_at(int k) const {
        return graphs_[static_cast<std::size_t>(sigma(k) - 1)];
    }

    /// Start times of maximal runs of constant sigma on [0, horizon), plus horizon.
    [[nodiscard]] std::vector<int> dwell_boundaries(int horizon) const {
        std::vector<int> out{0};
        for (int k = 1; k < horizon; ++k) {
            if (sigma(k) != sigma(k - 1)) {
                out.push_back(k);
            }
        }
        out.push_back(horizon);
        return out;
    }

private:
    std::vector<Digraph> graphs_;
    std::function<int(int)> sigma_;
};

inline const Digraph& adjacency_at(const TopologySchedule& schedule, int k) {
    return schedule.adjacency_at(k);
}

struct IntervalVerdict {
    int begin = 0;
    int end = 0;
    bool connected = false;
};

struct ConnectivityReport {
    std::vector<IntervalVerdict> intervals;
    bool finite_weights = true;
    /// Longest interval k_{l+1} - k_l.
    int max_interval = 0;

    [[nodiscard]] bool all_pass() const {
        if (!finite_weights) {
            return false;
        }
        for (const auto& iv : intervals) {
            if (!iv.connected) {
                return false;
            }
        }
        return true;
    }
    [[nodiscard]] std::vector<IntervalVerdict> failures() const {
        std::vector<IntervalVerdict> out;
        for (const auto& iv : intervals) {
            if (!iv.connected) {
                out.push_back(iv);
            }
        }
        return out;
    }
};

/// For each [k_l, k_{l+1}) checks that the union of G_sigma(k) over
/// k = k_l..k_{l+1} (endpoint included, clipped to the horizon) is strongly connected.
/// `endpoints` must start at 0 and be strictly increasing.
inline ConnectivityReport check_joint_connectivity(const TopologySchedule& schedule, int horizon,
                                                   const std::vector<int>& endpoints) {
    if (endpoints.size() < 2 || endpoints.front() != 0) {
        throw ValidationError("interval endpoints must start at 0 and contain at least two entries");
    }
    ConnectivityReport rep;
    for (std::size_t l = 0; l + 1 < endpoints.size(); ++l) {
        const int b = endpoints[l];
        const int e = endpoints[l + 1];
        if (e <= b) {
            throw ValidationError("interval endpoints must be strictly increasing");
        }
        std::vector<const Digraph*> members;
        for (int k = b; k <= std::min(e, horizon - 1); ++k) {
            members.push_back(&schedule.adjacency_at(k));
        }
        rep.intervals.push_back({b, e, is_strongly_connected(union_graph(members))});
        rep.max_interval = std::max(rep.max_interval, e - b);
    }
    // The graph list is finite, so the weights come from a finite set by construction.
    rep.finite_weights = true;
    return rep;
}

inline std::vector<int> uniform_endpoints(int horizon, int length) {
    if (length < 1) {
        throw ValidationError("interval length must be positive");
    }
    // a trailing partial interval cannot be judged on the horizon and is dropped
    std::vector<int> out{0};
    for (int k = length; k <= horizon; k += length) {
        out.push_back(k);
    }
    if (out.size() == 1) {
        out.push_back(horizon);
    }
    return out;
}

/// Smallest uniform interval length k0 such that every interval on the horizon
/// is jointly strongly connected; nullopt when none exists.
inline std::optional<int> joint_connectivity_bound(const TopologySchedule& schedule, int horizon) {
    for (int len = 1; len <= horizon; ++len) {
        if (check_joint_connectivity(schedule, horizon, uniform_endpoints(horizon, len)).all_pass()) {
            return len;
        }
    }
    return std::nullopt;
}

}  // namespace dkf
