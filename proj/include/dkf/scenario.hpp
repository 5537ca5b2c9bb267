#pragma once

// Scenario description: model schedules, generators, topology, quantizer,
// filter settings and Monte-Carlo configuration, with JSON I/O and the
// built-in presets.
//
// Matrix schedules in JSON take one of these forms:
//   [[...], ...]                        constant matrix (row-major)
//   3.5                                 constant 1x1 matrix
//   {"diag": [...]}                     constant diagonal matrix
//   {"value": M, "scale": "expr"}       M times a scalar expression
//   {"bank": [M1, M2, ...], "index": "expr", "scale": "expr"}
//                                       M_index (1-based), optionally scaled
// Expressions see k and, for per-sensor schedules, the 1-based sensor index i.

#include "dkf/baselines.hpp"
#include "dkf/core_model.hpp"
#include "dkf/esdkf.hpp"
#include "dkf/expression.hpp"
#include "dkf/quantization.hpp"
#include "dkf/topology.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dkf {

using Json = nlohmann::json;

// ---------------------------------------------------------------- json helpers

namespace detail {

inline Mat matrix_from_json(const Json& j, const std::string& what) {
    if (j.is_number()) {
        Mat m(1, 1);
        m(0, 0) = j.get<double>();
        return m;
    }
    if (j.is_object() && j.contains("diag")) {
        const auto d = j.at("diag").get<std::vector<double>>();
        Mat m = Mat::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
        for (std::size_t s = 0; s < d.size(); ++s) {
            m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) = d[s];
        }
        return m;
    }
    if (!j.is_array()) {
        throw ValidationError(what + ": expected a matrix");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) {
        return Mat(0, 0);
    }
    if (!j.front().is_array()) {
        throw ValidationError(what + ": matrix rows must be arrays");
    }
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ValidationError(what + ": ragged matrix at row " + std::to_string(r + 1));
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

inline Json matrix_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Vec vector_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) {
        throw ValidationError(what + ": expected an array");
    }
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t s = 0; s < j.size(); ++s) {
        v(static_cast<Eigen::Index>(s)) = j[s].get<double>();
    }
    return v;
}

inline Json vector_to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index s = 0; s < v.size(); ++s) {
        a.push_back(v(s));
    }
    return a;
}

inline Expr expr_from_json(const Json& j, const std::string& what) {
    try {
        if (j.is_number()) {
            return Expr::parse(j.dump());
        }
        return Expr::parse(j.get<std::string>());
    } catch (const ExpressionError& e) {
        throw ValidationError(what + ": " + e.what());
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(what + ": expected an expression string");
    }
}

}  // namespace detail

// ---------------------------------------------------------------- schedules

class MatrixSchedule {
public:
    MatrixSchedule() = default;
    explicit MatrixSchedule(Mat constant) : bank_{std::move(constant)} {}
    MatrixSchedule(std::vector<Mat> bank, Expr index, Expr scale = {})
        : bank_(std::move(bank)), index_(std::move(index)), scale_(std::move(scale)) {}

    static MatrixSchedule from_json(const Json& j, const std::string& what) {
        MatrixSchedule s;
        if (j.is_object() && j.contains("bank")) {
            for (const auto& m : j.at("bank")) {
                s.bank_.push_back(detail::matrix_from_json(m, what));
            }
            if (s.bank_.empty()) {
                throw ValidationError(what + ": empty bank");
            }
            if (j.contains("index")) {
                s.index_ = detail::expr_from_json(j.at("index"), what + ".index");
            } else if (s.bank_.size() > 1) {
                throw ValidationError(what + ": a bank of several matrices needs an index expression");
            }
        } else if (j.is_object() && j.contains("value")) {
            s.bank_.push_back(detail::matrix_from_json(j.at("value"), what));
        } else {
            s.bank_.push_back(detail::matrix_from_json(j, what));
        }
        if (j.is_object() && j.contains("scale")) {
            s.scale_ = detail::expr_from_json(j.at("scale"), what + ".scale");
        }
        for (const auto& m : s.bank_) {
            if (m.rows() != s.bank_.front().rows() || m.cols() != s.bank_.front().cols()) {
                throw ValidationError(what + ": bank matrices differ in shape");
            }
        }
        return s;
    }

    [[nodiscard]] Json to_json() const {
        if (bank_.size() == 1 && index_.empty() && scale_.empty()) {
            return detail::matrix_to_json(bank_.front());
        }
        Json j;
        if (bank_.size() == 1 && index_.empty()) {
            j["value"] = detail::matrix_to_json(bank_.front());
        } else {
            j["bank"] = Json::array();
            for (const auto& m : bank_) {
                j["bank"].push_back(detail::matrix_to_json(m));
            }
            j["index"] = index_.source();
        }
        if (!scale_.empty()) {
            j["scale"] = scale_.source();
        }
        return j;
    }

    [[nodiscard]] bool empty() const { return bank_.empty(); }
    [[nodiscard]] Eigen::Index rows() const { return bank_.empty() ? 0 : bank_.front().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return bank_.empty() ? 0 : bank_.front().cols(); }

    /// Value at time k; `sensor` is 1-based and 0 for sensor-independent schedules.
    [[nodiscard]] Mat at(int k, int sensor = 0) const {
        if (bank_.empty()) {
            throw ValidationError("evaluating an empty matrix schedule");
        }
        EvalContext ctx;
        ctx.k = k;
        ctx.i = sensor;
        std::size_t idx = 0;
        if (!index_.empty()) {
            const double v = index_.eval(ctx);
            const auto s = static_cast<long long>(std::llround(v));
            if (s < 1 || s > static_cast<long long>(bank_.size()) || std::abs(v - static_cast<double>(s)) > 1e-9) {
                throw ValidationError("schedule index '" + index_.source() + "' gives " + std::to_string(v) +
                                      " at k=" + std::to_string(k) + ", outside 1.." + std::to_string(bank_.size()));
            }
            idx = static_cast<std::size_t>(s - 1);
        }
        if (scale_.empty()) {
            return bank_[idx];
        }
        return scale_.eval(ctx) * bank_[idx];
    }

private:
    std::vector<Mat> bank_;
    Expr index_;
    Expr scale_;
};

/// One schedule shared by all sensors (it may depend on i) or one per sensor.
class SensorSchedule {
public:
    SensorSchedule() = default;
    explicit SensorSchedule(MatrixSchedule shared) : shared_(std::move(shared)) {}
    explicit SensorSchedule(std::vector<MatrixSchedule> per_sensor) : per_sensor_(std::move(per_sensor)) {}

    static SensorSchedule from_json(const Json& j, const std::string& what) {
        if (j.is_object() && j.contains("per_sensor")) {
            std::vector<MatrixSchedule> v;
            int s = 1;
            for (const auto& e : j.at("per_sensor")) {
                v.push_back(MatrixSchedule::from_json(e, what + "[" + std::to_string(s++) + "]"));
            }
            return SensorSchedule(std::move(v));
        }
        return SensorSchedule(MatrixSchedule::from_json(j, what));
    }

    [[nodiscard]] Json to_json() const {
        if (per_sensor_.empty()) {
            return shared_.to_json();
        }
        Json j;
        j["per_sensor"] = Json::array();
        for (const auto& s : per_sensor_) {
            j["per_sensor"].push_back(s.to_json());
        }
        return j;
    }

    [[nodiscard]] bool is_per_sensor() const { return !per_sensor_.empty(); }
    [[nodiscard]] std::size_t count() const { return per_sensor_.size(); }

    /// `sensor` is 0-based.
    [[nodiscard]] Mat at(int k, int sensor) const {
        if (per_sensor_.empty()) {
            return shared_.at(k, sensor + 1);
        }
        if (sensor < 0 || static_cast<std::size_t>(sensor) >= per_sensor_.size()) {
            throw ValidationError("no schedule for sensor " + std::to_string(sensor + 1));
        }
        return per_sensor_[static_cast<std::size_t>(sensor)].at(k, sensor + 1);
    }

private:
    MatrixSchedule shared_;
    std::vector<MatrixSchedule> per_sensor_;
};

/// Bias generator of one sensor: one expression per observation component and
/// the interval its initial value b0 is drawn from.
struct BiasSpec {
    std::vector<Expr> expr;
    double b0_lo = 0.0;
    double b0_hi = 0.0;

    static BiasSpec from_json(const Json& j, const std::string& what) {
        BiasSpec b;
        for (const auto& e : j.at("expr")) {
            b.expr.push_back(detail::expr_from_json(e, what + ".expr"));
        }
        if (j.contains("b0")) {
            const auto r = j.at("b0").get<std::vector<double>>();
            if (r.size() != 2 || !(r[0] <= r[1])) {
                throw ValidationError(what + ".b0 must be [lo, hi] with lo <= hi");
            }
            b.b0_lo = r[0];
            b.b0_hi = r[1];
        }
        return b;
    }

    [[nodiscard]] Json to_json() const {
        Json j;
        j["expr"] = Json::array();
        for (const auto& e : expr) {
            j["expr"].push_back(e.source());
        }
        j["b0"] = {b0_lo, b0_hi};
        return j;
    }
};

// ---------------------------------------------------------------- config

struct EsdkfConfig {
    Vec X0;
    Mat P0;
    FilterParams params;
};

struct NominalFilterConfig {
    Vec x0;
    Mat P0;
};

struct CeskfConfig {
    Vec X0;
    Mat P0;
    Mat Q_hat;
};

struct DseaConfig {
    Vec x0;
    Mat P0;
    int iterations = 1;
};

enum class MetricGrouping { kinematic, full };

struct ScenarioConfig {
    std::string name;
    int horizon = 100;
    int n = 0;
    int p = 0;
    std::vector<int> m;

    MatrixSchedule A_bar;
    MatrixSchedule G_bar;
    MatrixSchedule Q;
    MatrixSchedule Q_hat;
    SensorSchedule H_bar;
    SensorSchedule R;
    SensorSchedule B;

    std::vector<Expr> f;
    std::vector<BiasSpec> bias;
    /// 1-based indices of nodes without observations (H = 0, y = 0).
    std::vector<int> non_sensing;

    Vec x0_mean;
    Mat x0_cov;

    std::vector<Mat> graphs;
    Expr sigma;
    std::vector<int> sigma_list;
    std::vector<int> intervals;

    std::vector<double> delta;
    bool dither = true;

    EsdkfConfig esdkf;
    NominalFilterConfig ckf;
    CeskfConfig ceskf;
    DseaConfig dsea_cp;

    int runs = 100;
    std::uint64_t seed = 1;

    double obs_alpha = 1.0;
    int obs_window = 10;
    int lss_L = 1;
    double lss_beta = kDefaultLssBeta;

    MetricGrouping grouping = MetricGrouping::full;

    [[nodiscard]] int sensors() const { return static_cast<int>(m.size()); }
    [[nodiscard]] bool is_non_sensing(int sensor) const {
        return std::find(non_sensing.begin(), non_sensing.end(), sensor + 1) != non_sensing.end();
    }
    [[nodiscard]] double delta_of(int sensor) const {
        return delta.empty() ? 0.0 : delta[static_cast<std::size_t>(sensor)];
    }
};

namespace detail {

inline FilterParams params_from_json(const Json& j) {
    FilterParams fp;
    if (j.contains("theta")) {
        const Json& t = j.at("theta");
        if (t.is_string()) {
            if (t.get<std::string>() != "closed_form") {
                throw ValidationError("theta must be a number or \"closed_form\"");
            }
            fp.theta_mode = FilterParams::ThetaMode::closed_form;
        } else {
            fp.theta_mode = FilterParams::ThetaMode::fixed;
            fp.theta = t.get<double>();
        }
    }
    if (j.contains("theta_bounds")) {
        const auto b = j.at("theta_bounds").get<std::vector<double>>();
        if (b.size() != 2) {
            throw ValidationError("theta_bounds must have two entries");
        }
        fp.theta_lo = b[0];
        fp.theta_hi = b[1];
    }
    if (j.contains("mu")) {
        const Json& mu = j.at("mu");
        if (mu.is_string()) {
            if (mu.get<std::string>() != "optimized") {
                throw ValidationError("mu must be a number or \"optimized\"");
            }
            fp.mu_mode = FilterParams::MuMode::optimized;
        } else {
            fp.mu_mode = FilterParams::MuMode::fixed;
            fp.mu = mu.get<double>();
        }
    }
    if (j.contains("mu_bounds")) {
        const auto b = j.at("mu_bounds").get<std::vector<double>>();
        if (b.size() != 2) {
            throw ValidationError("mu_bounds must have two entries");
        }
        fp.mu_lo = b[0];
        fp.mu_hi = b[1];
    }
    if (j.contains("tau")) {
        fp.tau = j.at("tau").get<double>();
    }
    fp.validate();
    return fp;
}

inline Json params_to_json(const FilterParams& fp) {
    Json j;
    if (fp.theta_mode == FilterParams::ThetaMode::closed_form) {
        j["theta"] = "closed_form";
    } else {
        j["theta"] = fp.theta;
    }
    j["theta_bounds"] = {fp.theta_lo, fp.theta_hi};
    if (fp.mu_mode == FilterParams::MuMode::optimized) {
        j["mu"] = "optimized";
    } else {
        j["mu"] = fp.mu;
    }
    j["mu_bounds"] = {fp.mu_lo, fp.mu_hi};
    j["tau"] = fp.tau;
    return j;
}

}  // namespace detail

/// Parses and checks a scenario document. Throws ValidationError with the
/// offending field on any problem.
inline ScenarioConfig scenario_from_json(const Json& j) {
    using detail::expr_from_json;
    using detail::matrix_from_json;
    using detail::vector_from_json;
    ScenarioConfig c;
    try {
        c.name = j.value("name", std::string("custom"));
        c.horizon = j.value("horizon", 100);
        c.n = j.at("n").get<int>();
        c.p = j.value("p", 0);
        if (j.contains("m")) {
            c.m = j.at("m").get<std::vector<int>>();
        } else {
            c.m.assign(static_cast<std::size_t>(j.at("sensors").get<int>()), 1);
        }
        const int N = c.sensors();
        if (N < 1) {
            throw ValidationError("scenario needs at least one sensor");
        }
        if (c.horizon < 0) {
            throw ValidationError("horizon must be nonnegative");
        }

        c.A_bar = MatrixSchedule::from_json(j.at("A_bar"), "A_bar");
        c.G_bar = c.p > 0 ? MatrixSchedule::from_json(j.at("G_bar"), "G_bar") : MatrixSchedule(Mat::Zero(c.n, 0));
        c.Q = MatrixSchedule::from_json(j.at("Q"), "Q");
        c.Q_hat = c.p > 0 ? MatrixSchedule::from_json(j.at("Q_hat"), "Q_hat") : MatrixSchedule(Mat::Zero(0, 0));
        c.H_bar = SensorSchedule::from_json(j.at("H_bar"), "H_bar");
        c.R = SensorSchedule::from_json(j.at("R"), "R");
        c.B = j.contains("B") ? SensorSchedule::from_json(j.at("B"), "B") : SensorSchedule(MatrixSchedule(Mat::Zero(1, 1)));
        for (const SensorSchedule* s : {&c.H_bar, &c.R, &c.B}) {
            if (s->is_per_sensor() && static_cast<int>(s->count()) != N) {
                throw ValidationError("per-sensor schedule count does not match the number of sensors");
            }
        }

        if (c.p > 0) {
            const Json& f = j.at("f");
            if (!f.is_array() || static_cast<int>(f.size()) != c.p) {
                throw ValidationError("f needs one expression per uncertainty component (p=" + std::to_string(c.p) + ")");
            }
            for (const auto& e : f) {
                c.f.push_back(expr_from_json(e, "f"));
            }
        }
        if (j.contains("bias")) {
            const Json& b = j.at("bias");
            if (b.contains("per_sensor")) {
                if (static_cast<int>(b.at("per_sensor").size()) != N) {
                    throw ValidationError("bias.per_sensor needs one entry per sensor");
                }
                int s = 1;
                for (const auto& e : b.at("per_sensor")) {
                    c.bias.push_back(BiasSpec::from_json(e, "bias[" + std::to_string(s++) + "]"));
                }
            } else {
                const BiasSpec shared = BiasSpec::from_json(b, "bias");
                c.bias.assign(static_cast<std::size_t>(N), shared);
            }
            for (int i = 0; i < N; ++i) {
                if (static_cast<int>(c.bias[static_cast<std::size_t>(i)].expr.size()) != c.m[static_cast<std::size_t>(i)]) {
                    throw ValidationError("bias of sensor " + std::to_string(i + 1) +
                                          " needs one expression per observation component");
                }
            }
        }
        c.non_sensing = j.value("non_sensing", std::vector<int>{});
        for (int s : c.non_sensing) {
            if (s < 1 || s > N) {
                throw ValidationError("non_sensing index " + std::to_string(s) + " out of range");
            }
        }

        const Json& x0 = j.at("x0");
        c.x0_mean = x0.contains("mean") ? vector_from_json(x0.at("mean"), "x0.mean") : Vec::Zero(c.n);
        c.x0_cov = matrix_from_json(x0.at("cov"), "x0.cov");

        const Json& topo = j.at("topology");
        for (const auto& g : topo.at("graphs")) {
            c.graphs.push_back(matrix_from_json(g, "topology.graphs"));
        }
        if (topo.contains("sigma")) {
            const Json& s = topo.at("sigma");
            if (s.is_array()) {
                c.sigma_list = s.get<std::vector<int>>();
            } else {
                c.sigma = expr_from_json(s, "topology.sigma");
            }
        } else if (c.graphs.size() == 1) {
            c.sigma = Expr::parse("1");
        } else {
            throw ValidationError("topology.sigma is required with more than one graph");
        }
        c.intervals = topo.value("intervals", std::vector<int>{});

        if (j.contains("quantizer")) {
            const Json& q = j.at("quantizer");
            if (q.contains("delta")) {
                if (q.at("delta").is_array()) {
                    c.delta = q.at("delta").get<std::vector<double>>();
                } else {
                    c.delta.assign(static_cast<std::size_t>(N), q.at("delta").get<double>());
                }
            }
            c.dither = q.value("dither", true);
        }
        if (!c.delta.empty() && static_cast<int>(c.delta.size()) != N) {
            throw ValidationError("quantizer.delta needs one entry per sensor");
        }
        for (double d : c.delta) {
            if (!(d >= 0.0)) {
                throw ValidationError("quantizer.delta must be nonnegative");
            }
        }

        const Json filters = j.value("filters", Json::object());
        const int nbar = c.n + c.p;
        const Json e = filters.value("esdkf", Json::object());
        c.esdkf.X0 = e.contains("X0") ? vector_from_json(e.at("X0"), "filters.esdkf.X0") : Vec::Zero(nbar);
        c.esdkf.P0 = e.contains("P0") ? matrix_from_json(e.at("P0"), "filters.esdkf.P0") : Mat::Identity(nbar, nbar);
        c.esdkf.params = detail::params_from_json(e);
        const Json ck = filters.value("ckf", Json::object());
        c.ckf.x0 = ck.contains("x0") ? vector_from_json(ck.at("x0"), "filters.ckf.x0") : Vec::Zero(c.n);
        c.ckf.P0 = ck.contains("P0") ? matrix_from_json(ck.at("P0"), "filters.ckf.P0") : c.x0_cov;
        const Json ce = filters.value("ceskf", Json::object());
        c.ceskf.X0 = ce.contains("X0") ? vector_from_json(ce.at("X0"), "filters.ceskf.X0") : c.esdkf.X0;
        c.ceskf.P0 = ce.contains("P0") ? matrix_from_json(ce.at("P0"), "filters.ceskf.P0") : c.esdkf.P0;
        c.ceskf.Q_hat = ce.contains("Q_hat") ? matrix_from_json(ce.at("Q_hat"), "filters.ceskf.Q_hat")
                                             : (c.p > 0 ? c.Q_hat.at(0) : Mat::Zero(0, 0));
        const Json ds = filters.value("dsea_cp", Json::object());
        c.dsea_cp.x0 = ds.contains("x0") ? vector_from_json(ds.at("x0"), "filters.dsea_cp.x0") : Vec::Zero(c.n);
        c.dsea_cp.P0 = ds.contains("P0") ? matrix_from_json(ds.at("P0"), "filters.dsea_cp.P0") : c.x0_cov;
        c.dsea_cp.iterations = ds.value("iterations", 1);
        if (c.dsea_cp.iterations < 1) {
            throw ValidationError("filters.dsea_cp.iterations must be at least 1");
        }

        const Json mc = j.value("monte_carlo", Json::object());
        c.runs = mc.value("runs", 100);
        c.seed = mc.value("seed", std::uint64_t{1});
        if (c.runs < 1) {
            throw ValidationError("monte_carlo.runs must be at least 1");
        }

        const Json ob = j.value("observability", Json::object());
        c.obs_alpha = ob.value("alpha", 1.0);
        c.obs_window = ob.value("window", 10);
        const Json ls = j.value("lss", Json::object());
        c.lss_L = ls.value("L", 1);
        c.lss_beta = ls.value("beta", kDefaultLssBeta);

        const std::string grouping = j.value("metrics", std::string("full"));
        if (grouping == "kinematic") {
            if (c.n != 4) {
                throw ValidationError("kinematic metrics need n = 4");
            }
            c.grouping = MetricGrouping::kinematic;
        } else if (grouping == "full") {
            c.grouping = MetricGrouping::full;
        } else {
            throw ValidationError("metrics must be \"kinematic\" or \"full\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scenario: ") + e.what());
    }
    return c;
}

inline Json scenario_to_json(const ScenarioConfig& c) {
    using detail::matrix_to_json;
    using detail::vector_to_json;
    Json j;
    j["name"] = c.name;
    j["horizon"] = c.horizon;
    j["n"] = c.n;
    j["p"] = c.p;
    j["m"] = c.m;
    j["A_bar"] = c.A_bar.to_json();
    if (c.p > 0) {
        j["G_bar"] = c.G_bar.to_json();
        j["Q_hat"] = c.Q_hat.to_json();
        j["f"] = Json::array();
        for (const auto& e : c.f) {
            j["f"].push_back(e.source());
        }
    }
    j["Q"] = c.Q.to_json();
    j["H_bar"] = c.H_bar.to_json();
    j["R"] = c.R.to_json();
    j["B"] = c.B.to_json();
    if (!c.bias.empty()) {
        j["bias"]["per_sensor"] = Json::array();
        for (const auto& b : c.bias) {
            j["bias"]["per_sensor"].push_back(b.to_json());
        }
    }
    j["non_sensing"] = c.non_sensing;
    j["x0"] = {{"mean", vector_to_json(c.x0_mean)}, {"cov", matrix_to_json(c.x0_cov)}};
    j["topology"]["graphs"] = Json::array();
    for (const auto& g : c.graphs) {
        j["topology"]["graphs"].push_back(matrix_to_json(g));
    }
    if (!c.sigma_list.empty()) {
        j["topology"]["sigma"] = c.sigma_list;
    } else {
        j["topology"]["sigma"] = c.sigma.source();
    }
    if (!c.intervals.empty()) {
        j["topology"]["intervals"] = c.intervals;
    }
    j["quantizer"] = {{"delta", c.delta}, {"dither", c.dither}};
    Json esdkf = detail::params_to_json(c.esdkf.params);
    esdkf["X0"] = vector_to_json(c.esdkf.X0);
    esdkf["P0"] = matrix_to_json(c.esdkf.P0);
    j["filters"]["esdkf"] = esdkf;
    j["filters"]["ckf"] = {{"x0", vector_to_json(c.ckf.x0)}, {"P0", matrix_to_json(c.ckf.P0)}};
    j["filters"]["ceskf"] = {{"X0", vector_to_json(c.ceskf.X0)},
                             {"P0", matrix_to_json(c.ceskf.P0)},
                             {"Q_hat", matrix_to_json(c.ceskf.Q_hat)}};
    j["filters"]["dsea_cp"] = {{"x0", vector_to_json(c.dsea_cp.x0)},
                               {"P0", matrix_to_json(c.dsea_cp.P0)},
                               {"iterations", c.dsea_cp.iterations}};
    j["monte_carlo"] = {{"runs", c.runs}, {"seed", c.seed}};
    j["observability"] = {{"alpha", c.obs_alpha}, {"window", c.obs_window}};
    j["lss"] = {{"L", c.lss_L}, {"beta", c.lss_beta}};
    j["metrics"] = c.grouping == MetricGrouping::kinematic ? "kinematic" : "full";
    return j;
}

// ---------------------------------------------------------------- model assembly

/// Builds the simulation model. Non-sensing nodes get H = 0, zero bias and
/// zero observation noise, so their observation is identically 0.
inline SystemModel to_system_model(const ScenarioConfig& c) {
    auto cfg = std::make_shared<const ScenarioConfig>(c);
    SystemModel m;
    m.n = c.n;
    m.p = c.p;
    m.m = c.m;
    m.A_bar = [cfg](int k) { return cfg->A_bar.at(k); };
    m.G_bar = [cfg](int k) { return cfg->G_bar.at(k); };
    m.Q = [cfg](int k) { return cfg->Q.at(k); };
    m.Q_hat = [cfg](int k) { return cfg->Q_hat.at(k); };
    m.H_bar = [cfg](int k, int i) {
        if (cfg->is_non_sensing(i)) {
            return Mat(Mat::Zero(cfg->m[static_cast<std::size_t>(i)], cfg->n));
        }
        return cfg->H_bar.at(k, i);
    };
    m.R = [cfg](int k, int i) { return cfg->R.at(k, i); };
    m.B = [cfg](int k, int i) { return cfg->B.at(k, i); };
    m.f = [cfg](const Vec& x, int k) {
        Vec out(cfg->p);
        EvalContext ctx;
        ctx.k = k;
        ctx.x = std::span<const double>(x.data(), static_cast<std::size_t>(x.size()));
        for (int s = 0; s < cfg->p; ++s) {
            out(s) = cfg->f[static_cast<std::size_t>(s)].eval(ctx);
        }
        return out;
    };
    m.initial_bias = [cfg](int i, Rng& rng) {
        const int mi = cfg->m[static_cast<std::size_t>(i)];
        Vec b0 = Vec::Zero(mi);
        if (cfg->bias.empty() || cfg->is_non_sensing(i)) {
            return b0;
        }
        const auto& spec = cfg->bias[static_cast<std::size_t>(i)];
        for (int s = 0; s < mi; ++s) {
            b0(s) = spec.b0_lo == spec.b0_hi ? spec.b0_lo : uniform(spec.b0_lo, spec.b0_hi, rng);
        }
        return b0;
    };
    m.bias = [cfg](const Vec& x, int k, int i, const Vec& b0) {
        const int mi = cfg->m[static_cast<std::size_t>(i)];
        Vec b = Vec::Zero(mi);
        if (cfg->bias.empty() || cfg->is_non_sensing(i)) {
            return b;
        }
        const auto& spec = cfg->bias[static_cast<std::size_t>(i)];
        EvalContext ctx;
        ctx.k = k;
        ctx.i = i + 1;
        ctx.x = std::span<const double>(x.data(), static_cast<std::size_t>(x.size()));
        for (int s = 0; s < mi; ++s) {
            ctx.b0 = b0(s);
            b(s) = spec.expr[static_cast<std::size_t>(s)].eval(ctx);
        }
        return b;
    };
    m.process_noise = [cfg](int k, Rng& rng) { return gaussian(cfg->Q.at(k), rng); };
    m.observation_noise = [cfg](int k, int i, Rng& rng) {
        if (cfg->is_non_sensing(i)) {
            return Vec(Vec::Zero(cfg->m[static_cast<std::size_t>(i)]));
        }
        return gaussian(cfg->R.at(k, i), rng);
    };
    return m;
}

inline TopologySchedule to_topology(const ScenarioConfig& c) {
    std::vector<Digraph> graphs;
    int idx = 1;
    for (const auto& g : c.graphs) {
        if (auto err = Digraph::check(g)) {
            throw ValidationError("topology graph " + std::to_string(idx) + ": " + *err);
        }
        graphs.emplace_back(g);
        ++idx;
    }
    if (!c.sigma_list.empty()) {
        auto list = std::make_shared<const std::vector<int>>(c.sigma_list);
        return TopologySchedule(std::move(graphs), [list](int k) {
            // the list repeats when the horizon outruns it
            return (*list)[static_cast<std::size_t>(k) % list->size()];
        });
    }
    auto sigma = std::make_shared<const Expr>(c.sigma);
    return TopologySchedule(std::move(graphs), [sigma](int k) {
        EvalContext ctx;
        ctx.k = k;
        return static_cast<int>(std::llround(sigma->eval(ctx)));
    });
}

inline QuantizerSpec to_quantizer(const ScenarioConfig& c) {
    return QuantizerSpec{c.delta, c.dither};
}

/// Interval endpoints for the joint-connectivity check: the configured ones,
/// else the smallest uniform length that passes, else the dwell boundaries.
inline std::vector<int> connectivity_endpoints(const ScenarioConfig& c, const TopologySchedule& t) {
    if (!c.intervals.empty()) {
        return c.intervals;
    }
    if (auto k0 = joint_connectivity_bound(t, c.horizon)) {
        return uniform_endpoints(c.horizon, *k0);
    }
    return t.dwell_boundaries(std::max(c.horizon, 1));
}

// ---------------------------------------------------------------- presets

namespace detail {

inline Json kinematic_A(bool singular_tail) {
    const double T = 0.1;
    Json a = {{1, 0, T, 0}, {0, 1, 0, T}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    if (singular_tail) {
        a[3] = {0, 0, 1, 0};
    }
    return a;
}

inline Json kinematic_base(const std::string& name, int horizon, int sensors) {
    const double T = 0.1;
    Json j;
    j["name"] = name;
    j["horizon"] = horizon;
    j["n"] = 4;
    j["p"] = 2;
    j["sensors"] = sensors;
    j["A_bar"] = kinematic_A(false);
    j["G_bar"] = {{0, 0}, {0, 0}, {T, 0}, {0, T}};
    j["Q"] = {{"diag", {4, 4, 1, 1}}};
    j["Q_hat"] = {{"diag", {1e-3, 1e-3}}};
    j["R"] = 4;
    j["B"] = 4;
    j["f"] = {"(sin(x3) + k) / 3", "(sin(x4) + k) / 3"};
    j["bias"] = {{"expr", {"sat(2 * sin(x1^2 + x2^2) + b0, 2)"}}, {"b0", {-2, 2}}};
    j["x0"] = {{"mean", {0, 0, 0, 0}}, {"cov", {{"diag", {10, 10, 1, 1}}}}};
    j["quantizer"] = {{"delta", 0.0}, {"dither", true}};
    j["filters"]["esdkf"] = {{"X0", {0, 0, 0, 0, 0, 0}},
                             {"P0", {{"diag", {10, 10, 1, 1, 1, 1}}}},
                             {"theta", "closed_form"},
                             {"mu", 0.3},
                             {"tau", 0.001}};
    j["filters"]["ckf"] = {{"x0", {0, 0, 0, 0}}, {"P0", {{"diag", {10, 10, 1, 1}}}}};
    j["filters"]["ceskf"] = {{"X0", {0, 0, 0, 0, 0, 0}},
                             {"P0", {{"diag", {10, 10, 1, 1, 1, 1}}}},
                             {"Q_hat", {{"diag", {1, 1}}}}};
    j["filters"]["dsea_cp"] = {{"x0", {0, 0, 0, 0}}, {"P0", {{"diag", {10, 10, 1, 1}}}}, {"iterations", 1}};
    j["monte_carlo"] = {{"runs", 100}, {"seed", 1}};
    j["observability"] = {{"alpha", 0.1}, {"window", 40}};
    j["lss"] = {{"L", 8}, {"beta", 1e-6}};
    j["metrics"] = "kinematic";
    return j;
}

inline Json row_vector(std::initializer_list<double> v) {
    return Json::array({Json(std::vector<double>(v))});
}

inline Json preset_sec61() {
    Json j = kinematic_base("sec61", 300, 4);
    j["H_bar"] = {{"bank", {row_vector({1, 0, 0, 0}), row_vector({0, 1, 0, 0}), row_vector({0, 0, 0, 0}),
                            row_vector({0, 0, 0, 0})}},
                  {"index", "mod(i + floor(k / 10), 4) + 1"}};
    j["topology"] = {
        {"graphs",
         {
             {{1, 0, 0, 0}, {0.5, 0.5, 0, 0}, {0, 0.5, 0.5, 0}, {0, 0, 0.5, 0.5}},
             {{0.5, 0.5, 0, 0}, {0, 1, 0, 0}, {0, 0.3, 0.4, 0.3}, {0, 0.5, 0, 0.5}},
             {{0.5, 0.5, 0, 0}, {0, 0.5, 0.5, 0}, {0, 0, 1, 0}, {0.25, 0.25, 0.25, 0.25}},
         }},
        {"sigma", "mod(floor(k / 5), 3) + 1"}};
    return j;
}

inline Json preset_sec62(bool situation2) {
    Json j = preset_sec61();
    j["name"] = situation2 ? "sec62_situation2" : "sec62_situation1";
    j["horizon"] = 1000;
    // k = 0 would divide by zero; the generators use max(k, 1)
    j["f"] = {"sin(x3) / (2 * max(k, 1)) + 1", "sin(x4) / (2 * max(k, 1)) + 1"};
    j["H_bar"] = {{"bank", {row_vector({1, 0, 0, 0}), row_vector({0, 1, 0, 0})}}, {"index", "mod(i - 1, 2) + 1"}};
    const Json decaying = {{"expr", {"sat(2 * sin(x1^2 + x2^2) + b0, 2) / max(k, 1)"}}, {"b0", {-2, 2}}};
    const Json decaying_B = {{"value", 4}, {"scale", "1 / max(k, 1)^2"}};
    if (situation2) {
        const Json large = {{"expr", {"sat(40 * sin(x1^2 + x2^2) + b0, 40)"}}, {"b0", {-40, 40}}};
        j["bias"] = {{"per_sensor", {decaying, decaying, large, large}}};
        j["B"] = {{"per_sensor", {decaying_B, decaying_B, 1600, 1600}}};
    } else {
        j["bias"] = decaying;
        j["B"] = decaying_B;
    }
    const double s10 = std::sqrt(10.0);
    j["filters"]["esdkf"]["X0"] = {-10, -10, -s10, -s10, 0, 0};
    j["filters"]["esdkf"]["P0"] = {{"diag", {110, 110, 11, 11, 1, 1}}};
    return j;
}

/// 20 nodes on a ring whose edges alternate between two perfect matchings every
/// 5 steps; node types repeat A, B, none along the ring, with the last two
/// nodes non-sensing.
inline Json preset_sec63() {
    constexpr int kNodes = 20;
    Json j = kinematic_base("sec63", 500, kNodes);
    j["A_bar"] = {{"bank", {kinematic_A(false), kinematic_A(true)}}, {"index", "(mod(k, 10) >= 8) + 1"}};
    Json per_sensor = Json::array();
    std::vector<int> non_sensing;
    for (int i = 0; i < kNodes; ++i) {
        const int kind = i >= 18 ? 2 : i % 3;
        if (kind == 0) {
            per_sensor.push_back(row_vector({1, 0, 0, 0}));
        } else if (kind == 1) {
            per_sensor.push_back(row_vector({0, 1, 0, 0}));
        } else {
            per_sensor.push_back(row_vector({0, 0, 0, 0}));
            non_sensing.push_back(i + 1);
        }
    }
    j["H_bar"] = {{"per_sensor", per_sensor}};
    j["non_sensing"] = non_sensing;
    auto matching = [&](int parity) {
        Mat a = Mat::Zero(kNodes, kNodes);
        for (int i = parity; i < kNodes; i += 2) {
            const int nb = (i + 1) % kNodes;
            a(i, i) = a(nb, nb) = 0.5;
            a(i, nb) = a(nb, i) = 0.5;
        }
        return matrix_to_json(a);
    };
    j["topology"] = {{"graphs", {matching(0), matching(1)}}, {"sigma", "mod(floor(k / 5), 2) + 1"}};
    j["monte_carlo"]["runs"] = 50;
    return j;
}

inline Json preset_observability_example() {
    Json j;
    j["name"] = "observability_example";
    j["horizon"] = 20;
    j["n"] = 2;
    j["p"] = 1;
    j["sensors"] = 3;
    j["A_bar"] = {{1, 1}, {0, 2}};
    j["G_bar"] = {{1}, {1}};
    j["Q"] = {{"diag", {1, 1}}};
    j["Q_hat"] = 1;
    j["H_bar"] = {{"per_sensor", {row_vector({1, 0}), row_vector({0, 1}), row_vector({1, 1})}}};
    j["R"] = 1;
    j["B"] = 1;
    j["f"] = {"0"};
    j["x0"] = {{"mean", {0, 0}}, {"cov", {{"diag", {1, 1}}}}};
    const Json full = {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
    j["topology"] = {{"graphs", {full}}};
    j["observability"] = {{"alpha", 2}, {"window", 10}};
    j["lss"] = {{"L", 1}, {"beta", 1e-8}};
    j["monte_carlo"] = {{"runs", 10}, {"seed", 1}};
    return j;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
    return {"sec61", "sec62_situation1", "sec62_situation2", "sec63", "observability_example"};
}

inline Json preset_json(const std::string& name) {
    if (name == "sec61") return detail::preset_sec61();
    if (name == "sec62_situation1") return detail::preset_sec62(false);
    if (name == "sec62_situation2") return detail::preset_sec62(true);
    if (name == "sec63") return detail::preset_sec63();
    if (name == "observability_example") return detail::preset_observability_example();
    std::string known;
    for (const auto& n : preset_names()) {
        known += (known.empty() ? "" : ", ") + n;
    }
    throw ValidationError("unknown preset '" + name + "' (known: " + known + ")");
}

inline ScenarioConfig preset(const std::string& name) {
    return scenario_from_json(preset_json(name));
}

/// A preset name or a path to a JSON scenario file.
inline ScenarioConfig load_scenario(const std::string& name_or_path) {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
        return preset(name_or_path);
    }
    std::ifstream in(name_or_path);
    if (!in) {
        throw ValidationError("'" + name_or_path + "' is neither a preset nor a readable file");
    }
    Json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("cannot parse " + name_or_path + ": " + e.what());
    }
    return scenario_from_json(j);
}

}  // namespace dkf
