#include "dkf/dkf.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

struct RunArgs {
    std::string scenario;
    std::string algos = "esdkf,esdkf-et,ckf,ceskf,dsea-cp";
    int runs = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out = "out";
    double delta = -1.0;
    int horizon = -1;
    double tau = -1.0;
    bool node_log = false;
};

int cmd_run(const RunArgs& a) {
    dkf::ScenarioConfig c = dkf::load_scenario(a.scenario);
    if (a.horizon >= 0) {
        c.horizon = a.horizon;
    }
    if (a.delta >= 0.0) {
        c.delta.assign(static_cast<std::size_t>(c.sensors()), a.delta);
    }
    if (a.tau >= 0.0) {
        c.esdkf.params.tau = a.tau;
    }
    const int runs = a.runs > 0 ? a.runs : c.runs;
    const std::uint64_t seed = a.seed_set ? a.seed : c.seed;
    const auto names = split_list(a.algos);
    if (names.empty()) {
        throw dkf::ValidationError("--algo lists no algorithm");
    }
    auto ctx = dkf::make_context(c);
    const auto factories = dkf::named_factories(ctx, names, seed);

    std::vector<std::unique_ptr<dkf::NodeLogWriter>> logs;
    dkf::MonteCarloOptions opt;
    if (a.node_log) {
        std::filesystem::create_directories(a.out);
        for (const auto& n : names) {
            const auto probe = dkf::make_factory(ctx, n, seed)();
            probe->reset(0);
            logs.push_back(std::make_unique<dkf::NodeLogWriter>(std::filesystem::path(a.out) / (n + "_nodes.csv"),
                                                                static_cast<int>(probe->estimate(0).size())));
        }
        opt.on_run = [&](const dkf::RunResult& r) {
            for (std::size_t s = 0; s < logs.size(); ++s) {
                logs[s]->write(r.run, r.algos[s]);
            }
        };
    }
    const auto stats = dkf::run_monte_carlo(*ctx, factories, runs, seed, opt);
    for (const auto& st : stats) {
        const auto series = dkf::summarize(st, c.grouping, c.sensors());
        const auto path = dkf::emit_csv(series, a.out);
        std::cout << "wrote " << path.string() << '\n';
    }
    return 0;
}

int cmd_validate(const std::string& scenario, int horizon, int samples) {
    dkf::ScenarioConfig c = dkf::load_scenario(scenario);
    if (horizon >= 0) {
        c.horizon = horizon;
    }
    dkf::ValidationOptions opt;
    if (samples > 0) {
        opt.samples = samples;
    }
    const auto rep = dkf::validate_assumptions(c, opt);
    std::size_t width = 10;
    for (const auto& ch : rep.checks) {
        width = std::max(width, ch.name.size());
    }
    std::cout << "scenario " << c.name << ", verdicts on horizon [0," << rep.horizon << "]\n";
    for (const auto& ch : rep.checks) {
        std::cout << std::left << std::setw(static_cast<int>(width) + 2) << ch.name << std::setw(15)
                  << dkf::to_string(ch.verdict) << (ch.statistical ? "[stat] " : "[exact] ") << ch.detail << '\n';
    }
    std::cout << "structural=" << (rep.structural_pass() ? "pass" : "fail")
              << " overall=" << (rep.all_pass() ? "pass" : "fail") << '\n';
    return rep.all_pass() ? 0 : 3;
}

int cmd_observability(const std::string& scenario, double alpha, int window, int k) {
    const dkf::ScenarioConfig c = dkf::load_scenario(scenario);
    if (alpha <= 0.0) {
        alpha = c.obs_alpha;
    }
    if (window < 0) {
        window = c.obs_window;
    }
    const auto model = dkf::to_system_model(c);
    const auto ext = dkf::build_extended_model(model);
    const auto rep = dkf::check_collective_observability(ext, k, window, alpha);

    dkf::Mat h_stack(0, c.n);
    for (int i = 0; i < c.sensors(); ++i) {
        const dkf::Mat h = model.H_bar(k, i);
        dkf::Mat grown(h_stack.rows() + h.rows(), c.n);
        grown << h_stack, h;
        h_stack = grown;
    }
    const auto rank = dkf::check_rank_condition(model.A_bar(k), model.G_bar(k), h_stack);

    std::cout << std::setprecision(10);
    std::cout << "quantity                 value\n";
    std::cout << "margin1 (Theta11-aI)     " << rep.margin1 << '\n';
    std::cout << "margin2 (Schur-aI)       " << rep.margin2 << '\n';
    std::cout << "observable               " << (rep.holds ? "yes" : "no") << '\n';
    std::cout << "rank                     " << rank.rank << " of " << c.n + c.p << '\n';
    std::cout << "rank condition           " << (rank.holds ? "holds" : "fails") << '\n';
    std::cout << "k=" << k << '\n';
    std::cout << "alpha=" << alpha << '\n';
    std::cout << "window=" << window << '\n';
    std::cout << "margin1=" << rep.margin1 << '\n';
    std::cout << "margin2=" << rep.margin2 << '\n';
    std::cout << "holds=" << (rep.holds ? "true" : "false") << '\n';
    std::cout << "rank=" << rank.rank << '\n';
    std::cout << "rank_holds=" << (rank.holds ? "true" : "false") << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed extended-state Kalman filter simulator"};
    app.require_subcommand(1);

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Monte-Carlo run writing one metrics CSV per algorithm");
    run->add_option("--scenario", ra.scenario, "preset name or JSON file")->required();
    run->add_option("--algo", ra.algos, "comma list of esdkf, esdkf-et, ckf, ceskf, dsea-cp");
    run->add_option("--runs", ra.runs, "number of runs (default: scenario)");
    auto* seed_opt = run->add_option("--seed", ra.seed, "master seed (default: scenario)");
    run->add_option("--out", ra.out, "output directory");
    run->add_option("--delta", ra.delta, "quantization step for every sensor");
    run->add_option("--horizon", ra.horizon, "override the horizon K");
    run->add_option("--tau", ra.tau, "override the trigger threshold");
    run->add_flag("--node-log", ra.node_log, "also write <algo>_nodes.csv per-node records");

    std::string v_scenario;
    int v_horizon = -1;
    int v_samples = 0;
    auto* val = app.add_subcommand("validate", "check the scenario against the model assumptions");
    val->add_option("--scenario", v_scenario, "preset name or JSON file")->required();
    val->add_option("--horizon", v_horizon, "override the horizon K");
    val->add_option("--samples", v_samples, "samples per statistical check");

    std::string o_scenario;
    double o_alpha = 0.0;
    int o_window = -1;
    int o_k = 0;
    auto* obs = app.add_subcommand("check-observability", "observability margins and rank condition");
    obs->add_option("--scenario", o_scenario, "preset name or JSON file")->required();
    obs->add_option("--alpha", o_alpha, "alpha (default: scenario)");
    obs->add_option("--window", o_window, "window length N (default: scenario)");
    obs->add_option("--k", o_k, "start time");

    std::string p_name;
    bool p_list = false;
    auto* pre = app.add_subcommand("preset", "print a preset as a scenario JSON document");
    pre->add_option("name", p_name, "preset name");
    pre->add_flag("--list", p_list, "list preset names");

    CLI11_PARSE(app, argc, argv);
    ra.seed_set = seed_opt->count() > 0;
    try {
        if (*run) {
            return cmd_run(ra);
        }
        if (*val) {
            return cmd_validate(v_scenario, v_horizon, v_samples);
        }
        if (*obs) {
            return cmd_observability(o_scenario, o_alpha, o_window, o_k);
        }
        if (*pre) {
            if (p_list || p_name.empty()) {
                for (const auto& n : dkf::preset_names()) {
                    std::cout << n << '\n';
                }
                return 0;
            }
            std::cout << dkf::scenario_to_json(dkf::preset(p_name)).dump(2) << '\n';
            return 0;
        }
    } catch (const dkf::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
