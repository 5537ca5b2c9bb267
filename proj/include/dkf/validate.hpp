#pragma once

// Scenario assumption checks. Structural checks are exact over the configured
// horizon; statistical ones compare sample moments against 5-sigma bands.

#include "dkf/monte_carlo.hpp"
#include "dkf/quantization.hpp"
#include "dkf/scenario.hpp"
#include "dkf/simulation.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace dkf {

enum class Verdict { pass, fail, not_checkable };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::not_checkable: return "not-checkable";
    }
    return "?";
}

struct AssumptionCheck {
    std::string name;
    bool statistical = false;
    Verdict verdict = Verdict::not_checkable;
    std::string detail;
};

struct ValidationReport {
    int horizon = 0;
    std::vector<AssumptionCheck> checks;

    [[nodiscard]] bool all_pass() const {
        for (const auto& c : checks) {
            if (c.verdict == Verdict::fail) {
                return false;
            }
        }
        return true;
    }
    [[nodiscard]] bool structural_pass() const {
        for (const auto& c : checks) {
            if (!c.statistical && c.verdict == Verdict::fail) {
                return false;
            }
        }
        return true;
    }
    [[nodiscard]] const AssumptionCheck* find(const std::string& name) const {
        for (const auto& c : checks) {
            if (c.name == name) {
                return &c;
            }
        }
        return nullptr;
    }
};

struct ValidationOptions {
    int samples = 10000;
    std::uint64_t seed = 7;
    double sigmas = 5.0;
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

/// |sample mean| <= sigmas * sd / sqrt(n) for every component.
inline bool zero_mean(const std::vector<Vec>& xs, double sigmas, std::string& worst) {
    if (xs.size() < 2) {
        return true;
    }
    const auto dim = xs.front().size();
    const double n = static_cast<double>(xs.size());
    bool ok = true;
    double worst_z = 0.0;
    for (Eigen::Index c = 0; c < dim; ++c) {
        double s = 0.0;
        double s2 = 0.0;
        for (const auto& x : xs) {
            s += x(c);
            s2 += x(c) * x(c);
        }
        const double mean = s / n;
        const double sd = std::sqrt(std::max((s2 - n * mean * mean) / (n - 1), 0.0));
        if (sd == 0.0) {
            if (mean != 0.0) {
                ok = false;
            }
            continue;
        }
        const double z = std::abs(mean) / (sd / std::sqrt(n));
        worst_z = std::max(worst_z, z);
        if (z > sigmas) {
            ok = false;
        }
    }
    worst = "max |z| = " + fmt(worst_z);
    return ok;
}

/// |lag-1 autocorrelation| <= sigmas / sqrt(n) for every component.
inline bool uncorrelated_lag1(const std::vector<Vec>& xs, double sigmas, std::string& worst) {
    if (xs.size() < 3) {
        return true;
    }
    const auto dim = xs.front().size();
    const double n = static_cast<double>(xs.size());
    bool ok = true;
    double worst_r = 0.0;
    for (Eigen::Index c = 0; c < dim; ++c) {
        double mean = 0.0;
        for (const auto& x : xs) {
            mean += x(c);
        }
        mean /= n;
        double num = 0.0;
        double den = 0.0;
        for (std::size_t t = 0; t < xs.size(); ++t) {
            const double d = xs[t](c) - mean;
            den += d * d;
            if (t > 0) {
                num += d * (xs[t - 1](c) - mean);
            }
        }
        if (den == 0.0) {
            continue;
        }
        const double r = num / den;
        worst_r = std::max(worst_r, std::abs(r));
        if (std::abs(r) > sigmas / std::sqrt(n)) {
            ok = false;
        }
    }
    worst = "max |rho1| = " + fmt(worst_r);
    return ok;
}

/// mean(v) <= sigmas * sd(v) / sqrt(n): the excess is not significantly positive.
inline bool not_positive(const std::vector<double>& v, double sigmas, std::string& detail) {
    if (v.size() < 2) {
        detail = "too few samples";
        return true;
    }
    const double n = static_cast<double>(v.size());
    double s = 0.0;
    double s2 = 0.0;
    for (double x : v) {
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double sd = std::sqrt(std::max((s2 - n * mean * mean) / (n - 1), 0.0));
    const double band = sigmas * sd / std::sqrt(n);
    detail = "mean excess " + fmt(mean) + ", band " + fmt(band);
    return mean <= band;
}

}  // namespace detail

inline ValidationReport validate_assumptions(const ScenarioConfig& c, const ValidationOptions& opt = {}) {
    ValidationReport rep;
    rep.horizon = c.horizon;
    const std::string on = " on horizon [0," + std::to_string(c.horizon) + "]";
    const int K = c.horizon;
    const int N = c.sensors();
    auto add = [&](std::string name, bool statistical, Verdict v, std::string detail) {
        rep.checks.push_back({std::move(name), statistical, v, std::move(detail)});
    };
    auto verdict = [](bool ok) { return ok ? Verdict::pass : Verdict::fail; };

    // Assemble what can be assembled; a failure here makes model checks uncheckable.
    SystemModel model;
    bool model_ok = true;
    try {
        model = to_system_model(c);
        validate_dimensions(model, 0, K);
        add("dimensions consistent", false, Verdict::pass, "all matrices match n, p, m" + on);
    } catch (const std::exception& e) {
        model_ok = false;
        add("dimensions consistent", false, Verdict::fail, e.what());
    }

    // ---- topology
    bool graphs_ok = true;
    for (std::size_t g = 0; g < c.graphs.size(); ++g) {
        const auto err = Digraph::check(c.graphs[g]);
        if (err) {
            graphs_ok = false;
        }
        add("graph " + std::to_string(g + 1) + " row stochastic with positive diagonal", false, verdict(!err),
            err ? *err : "ok");
    }
    if (graphs_ok) {
        try {
            const TopologySchedule topo = to_topology(c);
            if (topo.nodes() != N) {
                throw ValidationError("graphs have " + std::to_string(topo.nodes()) + " nodes for " +
                                      std::to_string(N) + " sensors");
            }
            for (int k = 0; k <= K; ++k) {
                (void)topo.sigma(k);
            }
            add("switching signal indexes a graph", false, Verdict::pass, "ok" + on);
            const auto endpoints = connectivity_endpoints(c, topo);
            const auto cr = check_joint_connectivity(topo, std::max(K, 1), endpoints);
            std::string d = "interval bound k0 = " + std::to_string(cr.max_interval);
            if (!cr.all_pass()) {
                const auto f = cr.failures().front();
                d = std::to_string(cr.failures().size()) + " interval(s) not jointly strongly connected, first [" +
                    std::to_string(f.begin) + "," + std::to_string(f.end) + "]";
            }
            add("jointly strongly connected", false, verdict(cr.all_pass()), d + on);
            add("weights from a finite set", false, verdict(cr.finite_weights),
                std::to_string(c.graphs.size()) + " graph(s)");
        } catch (const std::exception& e) {
            add("switching signal indexes a graph", false, Verdict::fail, e.what());
        }
    } else {
        add("jointly strongly connected", false, Verdict::not_checkable, "invalid graphs");
    }

    if (!model_ok) {
        add("noise bounds positive definite", false, Verdict::not_checkable, "model could not be assembled");
        return rep;
    }

    // ---- bounds
    double q_min = std::numeric_limits<double>::infinity();
    double qh_min = std::numeric_limits<double>::infinity();
    double rb_min = std::numeric_limits<double>::infinity();
    double r_min = std::numeric_limits<double>::infinity();
    double b_min = std::numeric_limits<double>::infinity();
    double sup_norm = 0.0;
    bool symmetric = true;
    for (int k = 0; k <= K; ++k) {
        const Mat q = model.Q(k);
        symmetric = symmetric && is_symmetric(q, 1e-12);
        q_min = std::min(q_min, lambda_min(q));
        sup_norm = std::max({sup_norm, model.A_bar(k).norm(), q.norm()});
        if (c.p > 0) {
            const Mat qh = model.Q_hat(k);
            symmetric = symmetric && is_symmetric(qh, 1e-12);
            qh_min = std::min(qh_min, lambda_min(qh));
            sup_norm = std::max({sup_norm, model.G_bar(k).norm(), qh.norm()});
        }
        for (int i = 0; i < N; ++i) {
            const Mat r = model.R(k, i);
            const Mat b = model.B(k, i);
            symmetric = symmetric && is_symmetric(r, 1e-12) && is_symmetric(b, 1e-12);
            r_min = std::min(r_min, lambda_min(r));
            b_min = std::min(b_min, lambda_min(b));
            rb_min = std::min(rb_min, lambda_min(r + b));
            sup_norm = std::max({sup_norm, model.H_bar(k, i).norm(), r.norm(), b.norm()});
        }
    }
    add("covariance bounds symmetric", false, verdict(symmetric), "Q, Q_hat, R, B" + on);
    add("inf_k lambda_min(Q_k) > 0", false, verdict(q_min > kDefiniteTol), "min " + detail::fmt(q_min) + on);
    if (c.p > 0) {
        add("inf_k lambda_min(Q_hat_k) > 0", false, verdict(qh_min > kDefiniteTol),
            "min " + detail::fmt(qh_min) + on);
    }
    add("R and B positive semidefinite", false, verdict(r_min >= -kDefiniteTol && b_min >= -kDefiniteTol),
        "min eig R " + detail::fmt(r_min) + ", B " + detail::fmt(b_min) + on);
    add("R + B invertible", false, verdict(rb_min > kDefiniteTol), "min eig " + detail::fmt(rb_min) + on);
    add("sup bounds finite", false, verdict(std::isfinite(sup_norm)), "max norm " + detail::fmt(sup_norm) + on);
    {
        const Mat& p0 = c.esdkf.P0;
        const bool ok = p0.rows() == c.n + c.p && p0.cols() == c.n + c.p && lambda_min(p0) > kDefiniteTol;
        add("initial bound P0 positive definite", false, verdict(ok), "ESDKF P0 " + shape_of(p0));
    }

    // ---- L-SS and observability
    const ExtendedModel ext(model);
    {
        const auto lss = find_lss([&](int k) { return ext.A(k); }, K, c.lss_L, c.lss_beta);
        std::string d = lss.found() ? std::to_string(lss.times.size()) + " window(s), L=" + std::to_string(c.lss_L)
                                    : lss.diagnostic;
        if (lss.sup_gap) {
            d += ", sup gap " + std::to_string(*lss.sup_gap);
        }
        add("L-step supporting sequence exists", false, verdict(lss.found()), d + on);
    }
    try {
        double m1 = std::numeric_limits<double>::infinity();
        double m2 = std::numeric_limits<double>::infinity();
        bool holds = true;
        const int last = std::max(0, K - c.obs_window);
        for (int k = 0; k <= last; ++k) {
            const auto r = check_collective_observability(ext, k, c.obs_window, c.obs_alpha);
            m1 = std::min(m1, r.margin1);
            m2 = std::min(m2, r.margin2);
            holds = holds && r.holds;
        }
        add("uniformly collectively observable", false, verdict(holds),
            "alpha=" + detail::fmt(c.obs_alpha) + ", window=" + std::to_string(c.obs_window) + ", min margins " +
                detail::fmt(m1) + " / " + detail::fmt(m2) + on);
    } catch (const std::exception& e) {
        add("uniformly collectively observable", false, Verdict::fail, e.what());
    }

    // ---- statistical checks
    const int S = opt.samples;
    const double z = opt.sigmas;
    {
        Rng rng = keyed_stream(opt.seed, StreamTag::validation, {1});
        std::vector<Vec> w;
        w.reserve(static_cast<std::size_t>(S));
        for (int s = 0; s < S; ++s) {
            w.push_back(model.process_noise(K > 0 ? s % K : 0, rng));
        }
        std::string d1;
        std::string d2;
        const bool mean_ok = detail::zero_mean(w, z, d1);
        const bool corr_ok = detail::uncorrelated_lag1(w, z, d2);
        add("process noise zero mean", true, verdict(mean_ok), d1 + on);
        add("process noise uncorrelated in time", true, verdict(corr_ok), d2 + on);
    }
    {
        bool mean_ok = true;
        bool corr_ok = true;
        std::string d1 = "no sensing node";
        std::string d2 = d1;
        for (int i = 0; i < N; ++i) {
            if (c.is_non_sensing(i)) {
                continue;
            }
            Rng rng = keyed_stream(opt.seed, StreamTag::validation, {2, static_cast<std::uint64_t>(i)});
            std::vector<Vec> v;
            v.reserve(static_cast<std::size_t>(S));
            for (int s = 0; s < S; ++s) {
                v.push_back(model.observation_noise(K > 0 ? 1 + s % K : 1, i, rng));
            }
            std::string a;
            std::string b;
            if (!detail::zero_mean(v, z, a)) {
                mean_ok = false;
                d1 = "sensor " + std::to_string(i + 1) + ": " + a;
            } else if (mean_ok) {
                d1 = a;
            }
            if (!detail::uncorrelated_lag1(v, z, b)) {
                corr_ok = false;
                d2 = "sensor " + std::to_string(i + 1) + ": " + b;
            } else if (corr_ok) {
                d2 = b;
            }
        }
        add("observation noise zero mean", true, verdict(mean_ok), d1 + on);
        add("observation noise uncorrelated in time", true, verdict(corr_ok), d2 + on);
    }
    {
        double delta = 0.0;
        for (int i = 0; i < N; ++i) {
            delta = std::max(delta, c.delta_of(i));
        }
        if (delta == 0.0) {
            add("dithered quantization error uniform", true, Verdict::not_checkable, "quantization disabled");
        } else {
            Rng rng = keyed_stream(opt.seed, StreamTag::validation, {3});
            double s1 = 0.0;
            double s2 = 0.0;
            for (int s = 0; s < S; ++s) {
                const double x = uniform(-50.0, 50.0, rng);
                const double xi = uniform(-delta / 2, delta / 2, rng);
                const double e = quantize(x + xi, delta) - (x + xi);
                s1 += e;
                s2 += e * e;
            }
            const double n = static_cast<double>(S);
            const double mean = s1 / n;
            const double m2 = s2 / n;
            const bool ok = std::abs(mean) <= z * (delta / std::sqrt(12.0)) / std::sqrt(n) &&
                            std::abs(m2 - delta * delta / 12.0) <= z * delta * delta / std::sqrt(180.0 * n);
            add("dithered quantization error uniform", true, verdict(ok),
                "mean " + detail::fmt(mean) + ", second moment " + detail::fmt(m2) + " vs " +
                    detail::fmt(delta * delta / 12.0) + on);
        }
    }
    if (K < 2) {
        add("uncertainty increment bounded by Q_hat", true, Verdict::not_checkable, "horizon too short");
        add("bias second moment bounded by B", true, Verdict::not_checkable, "horizon too short");
        return rep;
    }
    {
        const int runs = std::max(1, (S + K - 1) / K);
        std::vector<double> u_excess;
        std::vector<std::vector<double>> b_excess(static_cast<std::size_t>(N));
        for (int r = 0; r < runs; ++r) {
            Rng rng = keyed_stream(opt.seed, StreamTag::validation, {4, static_cast<std::uint64_t>(r)});
            const Trajectory t = simulate_truth(model, K, c.x0_mean, c.x0_cov, rng);
            for (int k = 0; k + 1 <= K && c.p > 0; ++k) {
                const Vec u = t.f[static_cast<std::size_t>(k) + 1] - t.f[static_cast<std::size_t>(k)];
                u_excess.push_back(u.squaredNorm() - model.Q_hat(k).trace());
            }
            for (int k = 1; k <= K; ++k) {
                for (int i = 0; i < N; ++i) {
                    const Vec& b = t.b[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
                    b_excess[static_cast<std::size_t>(i)].push_back(b.squaredNorm() - model.B(k, i).trace());
                }
            }
        }
        if (c.p > 0) {
            std::string d;
            const bool u_ok = detail::not_positive(u_excess, z, d);
            add("uncertainty increment bounded by Q_hat", true, verdict(u_ok), "E|u|^2 - tr Q_hat: " + d + on);
        }
        bool ok = true;
        std::string d = "ok";
        for (int i = 0; i < N; ++i) {
            std::string di;
            if (!detail::not_positive(b_excess[static_cast<std::size_t>(i)], z, di)) {
                ok = false;
                d = "sensor " + std::to_string(i + 1) + ": " + di;
                break;
            }
            d = di;
        }
        add("bias second moment bounded by B", true, verdict(ok), "E|b|^2 - tr B: " + d + on);
    }
    return rep;
}

}  // namespace dkf
