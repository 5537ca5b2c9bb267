#pragma once

// Metrics and node-log CSV files. Floats use the shortest decimal that
// round-trips; lines end in LF.

#include "dkf/monte_carlo.hpp"
#include "dkf/quantization.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace dkf {

namespace detail {

inline std::string csv_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    return shortest(v);
}

inline double csv_parse(const std::string& tok) {
    if (tok == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return parse_double(tok);
}

inline std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) {
        out.push_back(cur);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

}  // namespace detail

inline std::string metrics_header(int sensors) {
    std::string h = "k,rmse_pos,rmse_vel,me,mean_trace_p";
    for (int i = 1; i <= sensors; ++i) {
        h += ",triggers_s" + std::to_string(i);
    }
    return h;
}

inline void write_metrics_csv(const MetricsSeries& s, std::ostream& os) {
    os << metrics_header(s.sensors) << '\n';
    for (const auto& r : s.rows) {
        os << r.k << ',' << detail::csv_number(r.rmse_pos) << ',' << detail::csv_number(r.rmse_vel) << ','
           << detail::csv_number(r.me) << ',' << detail::csv_number(r.mean_trace_p);
        for (long long t : r.triggers) {
            os << ',' << t;
        }
        os << '\n';
    }
}

/// Writes `<dir>/<algorithm>.csv` and returns the path.
inline std::filesystem::path emit_csv(const MetricsSeries& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = dir / (s.algorithm + ".csv");
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    write_metrics_csv(s, os);
    if (!os) {
        throw std::runtime_error("write failed for " + path.string());
    }
    return path;
}

inline MetricsSeries read_metrics_csv(std::istream& is, const std::string& algorithm = {}) {
    MetricsSeries s;
    s.algorithm = algorithm;
    std::string line;
    if (!std::getline(is, line)) {
        throw ValidationError("metrics CSV is empty");
    }
    const auto header = detail::split_commas(line);
    if (header.size() < 5) {
        throw ValidationError("metrics CSV header is too short");
    }
    s.sensors = static_cast<int>(header.size()) - 5;
    if (line != metrics_header(s.sensors)) {
        throw ValidationError("unexpected metrics CSV header '" + line + "'");
    }
    while (std::getline(is, line)) {
        const auto f = detail::split_commas(line);
        if (f.size() != header.size()) {
            throw ValidationError("metrics CSV row has " + std::to_string(f.size()) + " fields");
        }
        MetricsRow r;
        r.k = std::stoi(f[0]);
        r.rmse_pos = detail::csv_parse(f[1]);
        r.rmse_vel = detail::csv_parse(f[2]);
        r.me = detail::csv_parse(f[3]);
        r.mean_trace_p = detail::csv_parse(f[4]);
        for (std::size_t c = 5; c < f.size(); ++c) {
            r.triggers.push_back(std::stoll(f[c]));
        }
        s.rows.push_back(std::move(r));
    }
    return s;
}

inline MetricsSeries read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot read " + path.string());
    }
    return read_metrics_csv(is, path.stem().string());
}

/// Per-node log: run,k,sensor,triggered,trace_P,est1..estD with 1-based sensor.
class NodeLogWriter {
public:
    NodeLogWriter(const std::filesystem::path& path, int dim) : os_(path, std::ios::binary) {
        if (!os_) {
            throw std::runtime_error("cannot write " + path.string());
        }
        os_ << "run,k,sensor,triggered,trace_P";
        for (int d = 1; d <= dim; ++d) {
            os_ << ",est" << d;
        }
        os_ << '\n';
    }

    void write(int run, const AlgoRun& ar) {
        const std::size_t per_k = static_cast<std::size_t>(ar.nodes);
        for (std::size_t s = 0; s < ar.cells.size(); ++s) {
            const int k = static_cast<int>(s / per_k) + 1;
            const int i = static_cast<int>(s % per_k) + 1;
            const Cell& c = ar.cells[s];
            os_ << run << ',' << k << ',' << i << ',' << (c.triggered ? 1 : 0) << ','
                << detail::csv_number(c.trace_p);
            if (s < ar.estimates.size()) {
                const Vec& e = ar.estimates[s];
                for (Eigen::Index d = 0; d < e.size(); ++d) {
                    os_ << ',' << detail::csv_number(e(d));
                }
            }
            os_ << '\n';
        }
    }

private:
    std::ofstream os_;
};

}  // namespace dkf
