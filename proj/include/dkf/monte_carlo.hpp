#pragma once

// Monte-Carlo orchestration: every run draws one ground truth, feeds the same
// observation stream to each estimator, and per-(k, sensor) error statistics
// are reduced in run order so results do not depend on the worker count.

#include "dkf/baselines.hpp"
#include "dkf/esdkf.hpp"
#include "dkf/scenario.hpp"
#include "dkf/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace dkf {

/// Everything derived from a scenario that estimators share read-only.
struct ScenarioContext {
    ScenarioConfig config;
    SystemModel model;
    ExtendedModel ext;
    TopologySchedule topology;

    explicit ScenarioContext(const ScenarioConfig& c)
        : config(c), model(to_system_model(c)), ext(build_extended_model(model)), topology(to_topology(c)) {
        if (topology.nodes() != c.sensors()) {
            throw ValidationError("topology has " + std::to_string(topology.nodes()) + " nodes but the scenario has " +
                                  std::to_string(c.sensors()) + " sensors");
        }
    }
};

inline std::shared_ptr<const ScenarioContext> make_context(const ScenarioConfig& c) {
    return std::make_shared<const ScenarioContext>(c);
}

class Estimator {
public:
    virtual ~Estimator() = default;
    virtual void reset(std::uint64_t run) = 0;
    /// Consumes y_{k,i} for all sensors, k >= 1.
    virtual void step(int k, const std::vector<Vec>& ys) = 0;
    [[nodiscard]] virtual int nodes() const = 0;
    /// Estimate of the leading components of the extended state [x; f].
    [[nodiscard]] virtual Vec estimate(int node) const = 0;
    [[nodiscard]] virtual Mat covariance(int node) const = 0;
    [[nodiscard]] virtual bool triggered(int node) const = 0;
};

using EstimatorFactory = std::function<std::unique_ptr<Estimator>()>;

class EsdkfEstimator : public Estimator {
public:
    EsdkfEstimator(std::shared_ptr<const ScenarioContext> ctx, UpdateScheme scheme, std::uint64_t seed)
        : ctx_(std::move(ctx)), params_(ctx_->config.esdkf.params), seed_(seed) {
        params_.scheme = scheme;
    }

    void reset(std::uint64_t run) override {
        const auto& c = ctx_->config;
        net_ = std::make_unique<EsdkfNetwork>(ctx_->ext, ctx_->topology, to_quantizer(c), params_, seed_, run);
        net_->initialize(std::vector<Vec>(static_cast<std::size_t>(c.sensors()), c.esdkf.X0),
                         std::vector<Mat>(static_cast<std::size_t>(c.sensors()), c.esdkf.P0));
    }
    void step(int k, const std::vector<Vec>& ys) override { net_->step(k, ys); }
    [[nodiscard]] int nodes() const override { return ctx_->config.sensors(); }
    [[nodiscard]] Vec estimate(int node) const override { return net_->node(node).X_hat; }
    [[nodiscard]] Mat covariance(int node) const override { return net_->node(node).P; }
    [[nodiscard]] bool triggered(int node) const override { return net_->node(node).triggered; }
    [[nodiscard]] const EsdkfNetwork& network() const { return *net_; }

private:
    std::shared_ptr<const ScenarioContext> ctx_;
    FilterParams params_;
    std::uint64_t seed_;
    std::unique_ptr<EsdkfNetwork> net_;
};

class CkfEstimator : public Estimator {
public:
    explicit CkfEstimator(std::shared_ptr<const ScenarioContext> ctx) : ctx_(std::move(ctx)) {}
    void reset(std::uint64_t) override { state_ = {ctx_->config.ckf.x0, ctx_->config.ckf.P0}; }
    void step(int k, const std::vector<Vec>& ys) override { state_ = ckf_step(state_, ys, ctx_->model, k); }
    [[nodiscard]] int nodes() const override { return 1; }
    [[nodiscard]] Vec estimate(int) const override { return state_.x_hat; }
    [[nodiscard]] Mat covariance(int) const override { return state_.P; }
    [[nodiscard]] bool triggered(int) const override { return false; }

private:
    std::shared_ptr<const ScenarioContext> ctx_;
    CentralizedState state_;
};

class CeskfEstimator : public Estimator {
public:
    explicit CeskfEstimator(std::shared_ptr<const ScenarioContext> ctx) : ctx_(std::move(ctx)) {}
    void reset(std::uint64_t) override { state_ = {ctx_->config.ceskf.X0, ctx_->config.ceskf.P0}; }
    void step(int k, const std::vector<Vec>& ys) override {
        state_ = ceskf_step(state_, ys, ctx_->ext, k, ctx_->config.ceskf.Q_hat);
    }
    [[nodiscard]] int nodes() const override { return 1; }
    [[nodiscard]] Vec estimate(int) const override { return state_.x_hat; }
    [[nodiscard]] Mat covariance(int) const override { return state_.P; }
    [[nodiscard]] bool triggered(int) const override { return false; }

private:
    std::shared_ptr<const ScenarioContext> ctx_;
    CentralizedState state_;
};

class DseaCpEstimator : public Estimator {
public:
    explicit DseaCpEstimator(std::shared_ptr<const ScenarioContext> ctx) : ctx_(std::move(ctx)) {}
    void reset(std::uint64_t) override {
        const auto& c = ctx_->config;
        nodes_.assign(static_cast<std::size_t>(c.sensors()),
                      ConsensusNodeState::from_moments(c.dsea_cp.x0, c.dsea_cp.P0));
    }
    void step(int k, const std::vector<Vec>& ys) override {
        nodes_ = dsea_cp_step(nodes_, ys, ctx_->model, ctx_->topology.adjacency_at(k), k,
                              ctx_->config.dsea_cp.iterations);
    }
    [[nodiscard]] int nodes() const override { return static_cast<int>(nodes_.size()); }
    [[nodiscard]] Vec estimate(int node) const override { return nodes_[static_cast<std::size_t>(node)].estimate(); }
    [[nodiscard]] Mat covariance(int node) const override {
        return nodes_[static_cast<std::size_t>(node)].covariance();
    }
    [[nodiscard]] bool triggered(int) const override { return false; }

private:
    std::shared_ptr<const ScenarioContext> ctx_;
    std::vector<ConsensusNodeState> nodes_;
};

inline std::vector<std::string> algorithm_names() {
    return {"esdkf", "esdkf-et", "ckf", "ceskf", "dsea-cp"};
}

inline EstimatorFactory make_factory(const std::shared_ptr<const ScenarioContext>& ctx, const std::string& algo,
                                     std::uint64_t seed) {
    if (algo == "esdkf") {
        return [ctx, seed] { return std::make_unique<EsdkfEstimator>(ctx, UpdateScheme::time_driven, seed); };
    }
    if (algo == "esdkf-et") {
        return [ctx, seed] { return std::make_unique<EsdkfEstimator>(ctx, UpdateScheme::event_triggered, seed); };
    }
    if (algo == "ckf") {
        return [ctx] { return std::make_unique<CkfEstimator>(ctx); };
    }
    if (algo == "ceskf") {
        return [ctx] { return std::make_unique<CeskfEstimator>(ctx); };
    }
    if (algo == "dsea-cp") {
        return [ctx] { return std::make_unique<DseaCpEstimator>(ctx); };
    }
    throw ValidationError("unknown algorithm '" + algo + "'");
}

// ---------------------------------------------------------------- per-run records

/// Error statistics of one node at one time in one run. Errors are truth minus estimate.
struct Cell {
    double sq_x = 0.0;
    double sq_pos = 0.0;
    double sq_vel = 0.0;
    double mean_err = 0.0;
    double sq_ext = 0.0;
    double trace_p = 0.0;
    bool triggered = false;
};

struct AlgoRun {
    int nodes = 0;
    /// cells[(k-1) * nodes + i]
    std::vector<Cell> cells;
    /// Filled only with MonteCarloOptions::keep_estimates, same layout.
    std::vector<Vec> estimates;
    std::vector<Vec> errors_x;
};

struct RunResult {
    int run = 0;
    std::vector<AlgoRun> algos;
};

struct NamedFactory {
    std::string name;
    EstimatorFactory factory;
};

struct MonteCarloOptions {
    /// 0 means DKF_THREADS or the hardware concurrency.
    int threads = 0;
    bool keep_estimates = false;
    /// Called in run order after each run is reduced.
    std::function<void(const RunResult&)> on_run;
};

/// Sums over runs for each (k, node).
class AlgoStats {
public:
    AlgoStats(std::string name, int horizon, int nodes)
        : name_(std::move(name)),
          horizon_(horizon),
          nodes_(nodes),
          sum_(static_cast<std::size_t>(horizon) * static_cast<std::size_t>(nodes)) {}

    void add(const AlgoRun& r) {
        for (std::size_t s = 0; s < sum_.size(); ++s) {
            const Cell& c = r.cells[s];
            Acc& a = sum_[s];
            a.sq_x += c.sq_x;
            a.sq_pos += c.sq_pos;
            a.sq_vel += c.sq_vel;
            a.mean_err += c.mean_err;
            a.sq_ext += c.sq_ext;
            a.sq_ext2 += c.sq_ext * c.sq_ext;
            a.trace_p += c.trace_p;
            a.triggers += c.triggered ? 1 : 0;
        }
        ++runs_;
    }

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] int horizon() const { return horizon_; }
    [[nodiscard]] int nodes() const { return nodes_; }
    [[nodiscard]] int runs() const { return runs_; }

    /// Mean over runs of ||X - X_hat||^2 in the estimator's own state space.
    [[nodiscard]] double mse_ext(int k, int i) const { return at(k, i).sq_ext / runs_; }
    /// Sample standard deviation over runs of ||X - X_hat||^2.
    [[nodiscard]] double sd_sq_ext(int k, int i) const {
        if (runs_ < 2) {
            return 0.0;
        }
        const Acc& a = at(k, i);
        const double mean = a.sq_ext / runs_;
        const double var = (a.sq_ext2 - runs_ * mean * mean) / (runs_ - 1);
        return std::sqrt(std::max(var, 0.0));
    }
    [[nodiscard]] double mean_trace(int k, int i) const { return at(k, i).trace_p / runs_; }
    [[nodiscard]] double mse_x(int k, int i) const { return at(k, i).sq_x / runs_; }
    [[nodiscard]] double mse_pos(int k, int i) const { return at(k, i).sq_pos / runs_; }
    [[nodiscard]] double mse_vel(int k, int i) const { return at(k, i).sq_vel / runs_; }
    [[nodiscard]] double me(int k, int i) const { return at(k, i).mean_err / runs_; }
    [[nodiscard]] long long triggers(int k, int i) const { return at(k, i).triggers; }

private:
    struct Acc {
        double sq_x = 0.0;
        double sq_pos = 0.0;
        double sq_vel = 0.0;
        double mean_err = 0.0;
        double sq_ext = 0.0;
        double sq_ext2 = 0.0;
        double trace_p = 0.0;
        long long triggers = 0;
    };
    [[nodiscard]] const Acc& at(int k, int i) const {
        return sum_[static_cast<std::size_t>(k - 1) * static_cast<std::size_t>(nodes_) + static_cast<std::size_t>(i)];
    }

    std::string name_;
    int horizon_;
    int nodes_;
    int runs_ = 0;
    std::vector<Acc> sum_;
};

struct MetricsRow {
    int k = 0;
    double rmse_pos = 0.0;
    double rmse_vel = 0.0;
    double me = 0.0;
    double mean_trace_p = 0.0;
    std::vector<long long> triggers;
};

struct MetricsSeries {
    std::string algorithm;
    int sensors = 0;
    std::vector<MetricsRow> rows;
};

/// RMSE_k = sqrt(mean_i MSE_{k,i}) per component group, ME_k = mean over nodes,
/// runs and the n state components, mean trace over nodes. Trigger columns are
/// per sensor and stay 0 for estimators that are not one-node-per-sensor.
inline MetricsSeries summarize(const AlgoStats& st, MetricGrouping grouping, int sensors) {
    MetricsSeries out;
    out.algorithm = st.name();
    out.sensors = sensors;
    const int nodes = st.nodes();
    for (int k = 1; k <= st.horizon(); ++k) {
        MetricsRow row;
        row.k = k;
        double pos = 0.0;
        double vel = 0.0;
        double full = 0.0;
        double me = 0.0;
        double tr = 0.0;
        for (int i = 0; i < nodes; ++i) {
            pos += st.mse_pos(k, i);
            vel += st.mse_vel(k, i);
            full += st.mse_x(k, i);
            me += st.me(k, i);
            tr += st.mean_trace(k, i);
        }
        if (grouping == MetricGrouping::kinematic) {
            row.rmse_pos = std::sqrt(pos / nodes);
            row.rmse_vel = std::sqrt(vel / nodes);
        } else {
            row.rmse_pos = std::sqrt(full / nodes);
            row.rmse_vel = std::numeric_limits<double>::quiet_NaN();
        }
        row.me = me / nodes;
        row.mean_trace_p = tr / nodes;
        row.triggers.assign(static_cast<std::size_t>(sensors), 0);
        if (nodes == sensors) {
            for (int i = 0; i < sensors; ++i) {
                row.triggers[static_cast<std::size_t>(i)] = st.triggers(k, i);
            }
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

inline int worker_count(int requested, int runs) {
    int t = requested;
    if (t <= 0) {
        if (const char* env = std::getenv("DKF_THREADS")) {
            t = std::atoi(env);
        }
    }
    if (t <= 0) {
        t = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
    return std::max(1, std::min(t, runs));
}

namespace detail {

inline RunResult simulate_run(const ScenarioContext& ctx, const std::vector<NamedFactory>& algos, std::uint64_t seed,
                              int run, bool keep) {
    const auto& c = ctx.config;
    Rng rng = keyed_stream(seed, StreamTag::truth, {static_cast<std::uint64_t>(run)});
    const Trajectory traj = simulate_truth(ctx.model, c.horizon, c.x0_mean, c.x0_cov, rng);
    const int n = c.n;
    const bool kinematic = c.grouping == MetricGrouping::kinematic;

    RunResult res;
    res.run = run;
    for (const auto& a : algos) {
        auto est = a.factory();
        est->reset(static_cast<std::uint64_t>(run));
        AlgoRun ar;
        ar.nodes = est->nodes();
        ar.cells.reserve(static_cast<std::size_t>(c.horizon) * static_cast<std::size_t>(ar.nodes));
        for (int k = 1; k <= c.horizon; ++k) {
            try {
                est->step(k, traj.y[static_cast<std::size_t>(k)]);
            } catch (const std::exception& e) {
                throw NumericalError(a.name + ", run " + std::to_string(run) + ", k=" + std::to_string(k) + ": " +
                                     e.what());
            }
            Vec X(ctx.ext.dim());
            X.head(n) = traj.x[static_cast<std::size_t>(k)];
            if (c.p > 0) {
                X.tail(c.p) = traj.f[static_cast<std::size_t>(k)];
            }
            for (int i = 0; i < ar.nodes; ++i) {
                const Vec xh = est->estimate(i);
                const Vec e = X.head(xh.size()) - xh;
                const Vec ex = e.head(n);
                Cell cell;
                cell.sq_x = ex.squaredNorm();
                if (kinematic) {
                    cell.sq_pos = ex.head(2).squaredNorm();
                    cell.sq_vel = ex.segment(2, 2).squaredNorm();
                }
                cell.mean_err = ex.mean();
                cell.sq_ext = e.squaredNorm();
                cell.trace_p = est->covariance(i).trace();
                cell.triggered = est->triggered(i);
                ar.cells.push_back(cell);
                if (keep) {
                    ar.estimates.push_back(xh);
                    ar.errors_x.push_back(ex);
                }
            }
        }
        res.algos.push_back(std::move(ar));
    }
    return res;
}

}  // namespace detail

/// Runs `runs` independent realizations. Runs are computed in batches of
/// `threads` and reduced strictly in run order.
inline std::vector<AlgoStats> run_monte_carlo(const ScenarioContext& ctx, const std::vector<NamedFactory>& algos,
                                              int runs, std::uint64_t seed, const MonteCarloOptions& opt = {}) {
    if (runs < 1) {
        throw ValidationError("runs must be at least 1");
    }
    const int threads = worker_count(opt.threads, runs);
    std::vector<AlgoStats> stats;
    for (const auto& a : algos) {
        auto probe = a.factory();
        probe->reset(0);
        stats.emplace_back(a.name, ctx.config.horizon, probe->nodes());
    }

    for (int base = 0; base < runs; base += threads) {
        const int batch = std::min(threads, runs - base);
        std::vector<RunResult> results(static_cast<std::size_t>(batch));
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(batch));
        auto work = [&](int slot) {
            try {
                results[static_cast<std::size_t>(slot)] =
                    detail::simulate_run(ctx, algos, seed, base + slot, opt.keep_estimates || opt.on_run != nullptr);
            } catch (...) {
                errors[static_cast<std::size_t>(slot)] = std::current_exception();
            }
        };
        if (batch == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(batch));
            for (int s = 0; s < batch; ++s) {
                pool.emplace_back(work, s);
            }
            for (auto& t : pool) {
                t.join();
            }
        }
        for (int s = 0; s < batch; ++s) {
            if (errors[static_cast<std::size_t>(s)]) {
                std::rethrow_exception(errors[static_cast<std::size_t>(s)]);
            }
            const RunResult& r = results[static_cast<std::size_t>(s)];
            for (std::size_t a = 0; a < algos.size(); ++a) {
                stats[a].add(r.algos[a]);
            }
            if (opt.on_run) {
                opt.on_run(r);
            }
        }
    }
    return stats;
}

/// Convenience: factories for algorithm names against one scenario.
inline std::vector<NamedFactory> named_factories(const std::shared_ptr<const ScenarioContext>& ctx,
                                                 const std::vector<std::string>& names, std::uint64_t seed) {
    std::vector<NamedFactory> out;
    for (const auto& n : names) {
        out.push_back({n, make_factory(ctx, n, seed)});
    }
    return out;
}

}  // namespace dkf
