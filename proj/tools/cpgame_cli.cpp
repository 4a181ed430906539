#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cpgame/analysis.hpp"

namespace fs = std::filesystem;
using namespace cpgame;

namespace {

struct Common {
    std::string config;
    std::string branch = "generic";
    std::string mode = "async";
    std::string thresholds;
    std::string out = "out";
    std::uint64_t seed = 1;
    int paths = 8;
    double horizon = 5000.0;
    double dt = 0.01;
    bool bridge = true;
    double burn_in = -1.0;
    int threads = 0;
    double x0 = std::numeric_limits<double>::quiet_NaN();
    std::string regime = "plus";
};

ModelParams load(const Common& c) {
    if (c.config.empty()) throw InputError("--config is required");
    try {
        return load_config(c.config);
    } catch (const ConfigError& e) {
        throw InputError(fmt::format("{}: {} (key '{}', line {})", c.config, e.what(), e.key(), e.line()));
    } catch (const std::exception& e) {
        throw InputError(fmt::format("{}: {}", c.config, e.what()));
    }
}

Regime parse_regime(const std::string& s) {
    if (s == "plus" || s == "+" || s == "expansion") return Regime::expansion;
    if (s == "minus" || s == "-" || s == "contraction") return Regime::contraction;
    throw InputError("unknown regime '" + s + "' (plus, minus)");
}

Branch branch_of(const Common& c) {
    try {
        return parse_branch(c.branch);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
}

Mode mode_of(const Common& c) {
    try {
        return parse_mode(c.mode);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
}

SimConfig sim_of(const Common& c) {
    SimConfig s;
    s.paths = c.paths;
    s.horizon = c.horizon;
    s.dt = c.dt;
    s.bridge = c.bridge;
    s.seed = c.seed;
    s.threads = c.threads;
    s.burn_in = c.burn_in;
    s.x0 = c.x0;
    s.r0 = parse_regime(c.regime);
    if (s.paths < 1 || !(s.horizon > 0.0) || !(s.dt > 0.0)) throw InputError("--paths, --horizon and --dt must be positive");
    return s;
}

/// Equilibrium from --thresholds when given, otherwise a fresh solve; returns the solve exit code.
int obtain(const Common& c, EquilibriumResult& e) {
    const ModelParams p = load(c);
    if (!c.thresholds.empty()) {
        e = {};
        e.params = p;
        e.strategies = parse_thresholds_csv(read_file(c.thresholds));
        e.type = classify(e.strategies);
        e.converged = true;
        if (e.type == EquilibriumType::III_plus) e.reachable = {true, false};
        if (e.type == EquilibriumType::III_minus) e.reachable = {false, true};
        return exit_ok;
    }
    e = solve_equilibrium(p, branch_of(c), mode_of(c));
    if (!e.converged) {
        std::cerr << "no convergence: " << e.message << "\n";
        return exit_no_convergence;
    }
    return solve_exit_code(e, verify(e));
}

void print_strategies(const StrategyPair& s) {
    for (Regime r : kRegimes) {
        const auto& row = s.producer.row(r);
        fmt::print("C_p{} = [{}, {}, {}, {}]\n", r == Regime::expansion ? "+" : "-", row.x_l.str(), row.x_l_star.str(),
                   row.x_h_star.str(), row.x_h.str());
    }
    fmt::print("C_c  = [{}, {}]\n", s.consumer.y_l.str(), s.consumer.y_h.str());
}

void add_model(CLI::App* app, Common& c, bool branch = true) {
    app->add_option("--config", c.config, "model config file")->required();
    if (branch) {
        app->add_option("--branch", c.branch, "generic, transitory-plus, transitory-minus, preemptive-plus, preemptive-minus");
        app->add_option("--mode", c.mode, "async or sync");
    }
    app->add_option("--out", c.out, "output directory");
}

void add_sim(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--paths", c.paths, "number of paths");
    app->add_option("--horizon", c.horizon, "years per path, burn-in included");
    app->add_option("--dt", c.dt, "time step (yr)");
    app->add_option("--burn-in", c.burn_in, "burn-in years (default 50/beta)");
    app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
    app->add_flag("--bridge,!--no-bridge", c.bridge, "Brownian-bridge barrier detection");
    app->add_option("--x0", c.x0, "starting price (default: middle of the band)");
    app->add_option("--regime", c.regime, "starting regime: plus or minus");
    app->add_option("--thresholds", c.thresholds, "use a thresholds CSV instead of solving");
}

int cmd_solve(const Common& c) {
    const auto p = load(c);
    auto o = run_solve(p, branch_of(c), mode_of(c), c.out);
    fmt::print("branch {} ({}): {}\n", name(o.eq.branch), name(o.eq.mode), o.eq.message);
    fmt::print("type {}\n", name(o.eq.type));
    print_strategies(reported_strategies(o.eq));
    for (const auto& item : o.diagnostics.items)
        if (!item.pass) fmt::print("FAIL {}: {} ({})\n", item.name, item.value, item.detail);
    fmt::print("wrote {} files to {}\n", o.files.size(), c.out);
    return o.exit_code;
}

int cmd_best_response(const Common& c, const std::string& player, const std::string& kind) {
    const auto p = load(c);
    EquilibriumResult e;
    e.params = p;
    bool ok = false;
    std::string msg;
    if (player == "consumer") {
        ProducerStrategy cp;
        if (!c.thresholds.empty()) {
            cp = parse_thresholds_csv(read_file(c.thresholds)).producer;
        } else {
            auto m = monopoly(p);
            if (!m.ok) throw ModelError("monopoly producer failed: " + m.message);
            cp = m.strategy;
        }
        ConsumerBR br;
        if (kind == "auto")
            br = consumer_best_response(p, cp);
        else if (kind == "no-switch")
            br = no_switch_br(p, cp);
        else if (kind == "single-plus")
            br = single_switch_br(p, cp, Regime::expansion);
        else if (kind == "single-minus")
            br = single_switch_br(p, cp, Regime::contraction);
        else if (kind == "double")
            br = double_switch_br(p, cp);
        else if (kind == "alone")
            br = consumer_alone(p);
        else
            throw InputError("unknown consumer kind '" + kind + "'");
        ok = br.ok;
        msg = fmt::format("{}: {}", name(br.kind), br.ok ? "ok" : br.message);
        e.strategies.producer = cp;
        e.strategies.consumer = br.strategy;
        e.consumer_values = br.values;
        for (const auto& d : br.diagnostics) fmt::print("{}\n", d);
    } else {
        ConsumerStrategy cc;
        if (!c.thresholds.empty()) {
            cc = parse_thresholds_csv(read_file(c.thresholds)).consumer;
        } else {
            auto a = consumer_alone(p);
            if (!a.ok) throw ModelError("consumer-alone response failed: " + a.message);
            cc = a.strategy;
        }
        ProducerBR br;
        if (kind == "auto")
            br = producer_best_response(p, cc);
        else if (kind == "monopoly")
            br = monopoly(p);
        else if (kind == "nonpreemptive")
            br = nonpreemptive_br(p, cc);
        else if (kind == "preemptive-plus")
            br = preemptive_br(p, cc, Regime::expansion);
        else if (kind == "preemptive-minus")
            br = preemptive_br(p, cc, Regime::contraction);
        else
            throw InputError("unknown producer kind '" + kind + "'");
        ok = br.ok;
        msg = fmt::format("{}: {}", name(br.kind), br.ok ? "ok" : br.message);
        e.strategies.producer = br.strategy;
        e.strategies.consumer = cc;
        e.producer_values = br.values;
        for (const auto& d : br.diagnostics) fmt::print("{}\n", d);
    }
    fmt::print("{} best response {}\n", player, msg);
    if (!ok) return exit_no_convergence;
    print_strategies(e.strategies);
    write_file(fs::path(c.out) / "br_thresholds.csv", thresholds_csv(e.strategies));
    write_file(fs::path(c.out) / "br_values.csv", value_dump_csv(e));
    return exit_ok;
}

int cmd_simulate(const Common& c, int stride) {
    EquilibriumResult e;
    const int code = obtain(c, e);
    if (code == exit_no_convergence) return code;
    SimConfig s = sim_of(c);
    const Regime r0 = e.reachable[index(s.r0)] ? s.r0 : other(s.r0);
    const double x0 = std::isnan(s.x0) ? band_start(e.strategies, r0) : s.x0;
    SimOptions opt;
    opt.dt = s.dt;
    opt.bridge = s.bridge;
    opt.record_stride = std::max(1, stride);
    auto rec = simulate_path(e, x0, r0, s.horizon, s.seed, opt);
    for (const auto& w : rec.warnings) fmt::print(stderr, "warning: {}\n", w);
    write_file(fs::path(c.out) / "path.csv", path_csv(rec));
    write_file(fs::path(c.out) / "events.csv", events_csv(rec));
    fmt::print("simulated {} years from x0 = {} ({}): {} events\n", s.horizon, x0, name(r0), rec.events.size());
    return code;
}

int cmd_stationary(const Common& c, int bins, bool exact) {
    EquilibriumResult e;
    const int code = obtain(c, e);
    if (code == exit_no_convergence) return code;
    SimConfig s = sim_of(c);
    s.bins = bins;
    if (!e.reachable[index(s.r0)]) s.r0 = other(s.r0);
    auto lr = simulate_long_run(e, s);
    for (const auto& w : lr.stats.warnings) fmt::print(stderr, "warning: {}\n", w);
    write_file(fs::path(c.out) / "density.csv", density_csv(lr.density));
    write_file(fs::path(c.out) / "stats.csv", stats_csv(lr.stats));
    fmt::print("E[X] = {:.6g}, Var[X] = {:.6g}, E[pi_p] = {:.6g}, E[pi_c] = {:.6g}, rho+ = {:.6g} over {:.4g} years\n",
               lr.stats.mean, lr.stats.var, lr.stats.e_pi_p, lr.stats.e_pi_c, lr.stats.rho_plus, lr.stats.years);
    if (exact) {
        auto ex = exact_long_run_stats(e);
        write_file(fs::path(c.out) / "stats_exact.csv", stats_csv(ex));
        std::vector<double> xs = lr.density.centres;
        auto d = exact_density(e.params, e.strategies, xs, e.reachable[0] ? Regime::expansion : Regime::contraction);
        std::string csv = "x (USD),density (1/USD),density_plus (1/USD),density_minus (1/USD)\n";
        for (size_t i = 0; i < xs.size(); ++i)
            csv += fmt::format("{},{},{},{}\n", fmt17(xs[i]), fmt17(d[0][i]), fmt17(d[1][i]), fmt17(d[2][i]));
        write_file(fs::path(c.out) / "density_exact.csv", csv);
        fmt::print("exact:  E[X] = {:.6g}, Var[X] = {:.6g}, E[pi_p] = {:.6g}, E[pi_c] = {:.6g}, rho+ = {:.6g}\n", ex.mean,
                   ex.var, ex.e_pi_p, ex.e_pi_c, ex.rho_plus);
    }
    return code;
}

int cmd_chain(const Common& c) {
    EquilibriumResult e;
    const int code = obtain(c, e);
    if (code == exit_no_convergence) return code;
    auto ch = build_jump_chain(e);
    for (const auto& d : ch.diagnostics) fmt::print("{}\n", d);
    write_file(fs::path(c.out) / "chain.csv", chain_csv(ch));
    auto [rp, rm] = regime_occupation(ch);
    fmt::print("rho+ = {:.6g}, rho- = {:.6g}, stationarity residual {:.3g}\n", rp, rm, ch.stationarity_residual);
    if (e.reachable[0] && e.reachable[1]) {
        const double x0 = std::isnan(c.x0) ? band_start(e.strategies, Regime::expansion) : c.x0;
        try {
            auto t = expected_switch_time(e, x0);
            fmt::print("E[time to contraction | x0 = {:.6g}, expansion] = {:.6g} yr (first-step), {:.6g} yr "
                       "(closed form via I_l+), {:.6g} yr (closed form via I_h+)\n",
                       x0, t.first_step, t.corrected, t.literal);
        } catch (const std::exception& ex) {
            fmt::print("expected switch time unavailable: {}\n", ex.what());
        }
    }
    try {
        write_file(fs::path(c.out) / "stats_exact.csv", stats_csv(exact_long_run_stats(e)));
    } catch (const std::exception& ex) {
        fmt::print("exact statistics unavailable: {}\n", ex.what());
    }
    return code;
}

int cmd_sweep(const Common& c, const std::string& param, const std::string& grid, const std::string& stats) {
    const auto p = load(c);
    SweepSpec spec;
    spec.parameter = param;
    spec.grid = parse_grid(grid);
    spec.branch = branch_of(c);
    spec.mode = mode_of(c);
    spec.stats = parse_stats_source(stats);
    spec.sim = sim_of(c);
    spec.threads = c.threads;
    auto rows = run_sweep(p, spec);
    const int code = write_sweep_outputs(c.out, spec, rows);
    for (const auto& r : rows)
        fmt::print("{} = {:<10g} status {} type {:<12} {}\n", param, r.value, r.status, name(r.eq.type), r.failure);
    fmt::print("wrote {}\n", (fs::path(c.out) / "sweep.csv").string());
    return code;
}

int cmd_integrate(const Common& c, const std::string& p1, const std::string& lambdas, const std::string& stats) {
    const auto p = load(c);
    auto curves = integration_study(p, parse_grid(p1), parse_grid(lambdas), branch_of(c), parse_stats_source(stats),
                                    sim_of(c));
    const int code = write_integration_outputs(c.out, curves);
    for (const auto& cv : curves) {
        if (cv.points.empty())
            fmt::print("p1 = {:<8g} failed: {}\n", cv.p1, cv.failure);
        else
            fmt::print("p1 = {:<8g} lambda* = {:.4f} (grid {:.4f}) type {} {}\n", cv.p1, cv.lambda_star,
                       cv.lambda_star_grid, name(cv.type), cv.failure);
    }
    return code;
}

int cmd_report(const std::string& dir) {
    const auto text = run_report(dir);
    write_file(fs::path(dir) / "report.txt", text);
    std::cout << text;
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Threshold equilibria of the producer-consumer commodity game"};
    app.require_subcommand(1);
    Common c;

    auto* solve = app.add_subcommand("solve", "solve one equilibrium branch and verify it");
    add_model(solve, c);

    std::string player, kind = "auto";
    auto* br = app.add_subcommand("best-response", "one player's best response to a fixed opponent");
    add_model(br, c, false);
    br->add_option("player", player, "consumer or producer")->required()->check(CLI::IsMember({"consumer", "producer"}));
    br->add_option("--kind", kind, "candidate (auto, no-switch, single-plus, single-minus, double, alone | "
                                   "monopoly, nonpreemptive, preemptive-plus, preemptive-minus)");
    br->add_option("--against", c.thresholds, "thresholds CSV holding the opponent's strategy");

    int stride = 10;
    auto* sim = app.add_subcommand("simulate", "simulate one equilibrium price path");
    add_model(sim, c);
    add_sim(sim, c);
    sim->add_option("--stride", stride, "record every n-th step");

    int bins = 100;
    bool exact = false;
    auto* st = app.add_subcommand("stationary", "long-run statistics and stationary histogram by simulation");
    add_model(st, c);
    add_sim(st, c);
    st->add_option("--bins", bins, "histogram bins");
    st->add_flag("--exact", exact, "also write the exact density and statistics");

    auto* ch = app.add_subcommand("chain", "jump chain, regime occupation and expected switch time");
    add_model(ch, c);
    ch->add_option("--thresholds", c.thresholds, "use a thresholds CSV instead of solving");
    ch->add_option("--x0", c.x0, "starting price for the switch time");

    std::string param, grid, stats = "exact";
    auto* sw = app.add_subcommand("sweep", "re-solve along a parameter grid");
    add_model(sw, c);
    add_sim(sw, c);
    sw->add_option("--param", param, "sigma, h0, p1, kappa0, mu_plus, mu_minus")->required();
    sw->add_option("--grid", grid, "lo:hi:n or comma list (empty for none)")->required();
    sw->add_option("--stats", stats, "none, exact or sim");

    std::string p1grid, lambdas = "0:1:21";
    auto* in = app.add_subcommand("integrate", "risk-return curves of the integrated firm across p1");
    add_model(in, c);
    add_sim(in, c);
    in->add_option("--p1", p1grid, "p1 grid: lo:hi:n or comma list")->required();
    in->add_option("--lambda", lambdas, "lambda grid on [0, 1]");
    in->add_option("--stats", stats, "exact or sim");

    std::string dir;
    auto* rep = app.add_subcommand("report", "summarise the artifacts of a previous run");
    rep->add_option("dir", dir, "run output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_input;
    }

    try {
        if (*solve) return cmd_solve(c);
        if (*br) return cmd_best_response(c, player, kind);
        if (*sim) return cmd_simulate(c, stride);
        if (*st) return cmd_stationary(c, bins, exact);
        if (*ch) return cmd_chain(c);
        if (*sw) return cmd_sweep(c, param, grid, stats);
        if (*in) return cmd_integrate(c, p1grid, lambdas, stats);
        if (*rep) return cmd_report(dir);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_input;
    }
    return exit_input;
}
