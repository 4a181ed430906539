#include "cpgame/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

namespace cpgame {

namespace {

using json = nlohmann::json;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

const char* sign(Regime r) { return r == Regime::expansion ? "plus" : "minus"; }

constexpr std::array<const char*, 4> kRowEntries{"x_l", "x_l_star", "x_h_star", "x_h"};

int worse(int a, int b) {
    auto rank = [](int c) { return c == exit_ok ? 0 : c == exit_verification ? 1 : c == exit_no_convergence ? 2 : 3; };
    return rank(a) >= rank(b) ? a : b;
}

std::string threshold_cells(const StrategyPair& s) {
    std::string out;
    for (Regime r : kRegimes)
        for (const auto& t : s.producer.row(r).entries()) out += "," + t.str();
    out += "," + s.consumer.y_l.str() + "," + s.consumer.y_h.str();
    return out;
}

std::string threshold_header() {
    std::string out;
    for (Regime r : kRegimes)
        for (const char* e : kRowEntries) out += fmt::format(",{}_{} (USD)", e, sign(r));
    return out + ",y_l (USD),y_h (USD)";
}

json thresholds_json(const StrategyPair& s) {
    json j;
    for (Regime r : kRegimes) {
        json row = json::array();
        for (const auto& t : s.producer.row(r).entries()) row.push_back(t.str());
        j[fmt::format("producer_{}", sign(r))] = row;
    }
    j["consumer"] = {s.consumer.y_l.str(), s.consumer.y_h.str()};
    return j;
}

const char* parameter_unit(const std::string& name) {
    if (name == "sigma") return "USD/sqrt(yr)";
    if (name == "h0" || name == "kappa0") return "USD";
    if (name == "p1") return "1";
    return "USD/yr";
}

void make_dir(const std::filesystem::path& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw InputError(fmt::format("cannot create output directory {}: {}", out.string(), ec.message()));
}

}  // namespace

std::string fmt17(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", v);
}

std::string thresholds_csv(const StrategyPair& s) {
    std::string out = "player,regime,entry,value (USD)\n";
    for (Regime r : kRegimes) {
        const auto e = s.producer.row(r).entries();
        for (size_t k = 0; k < 4; ++k) out += fmt::format("producer,{},{},{}\n", sign(r), kRowEntries[k], e[k].str());
    }
    out += fmt::format("consumer,all,y_l,{}\n", s.consumer.y_l.str());
    out += fmt::format("consumer,all,y_h,{}\n", s.consumer.y_h.str());
    return out;
}

StrategyPair parse_thresholds_csv(const std::string& text) {
    StrategyPair s;
    std::istringstream in(text);
    std::string line;
    int n = 0, seen = 0;
    while (std::getline(in, line)) {
        ++n;
        if (n == 1 || line.empty() || line == "\r") continue;
        auto f = split_csv_line(line);
        if (f.size() != 4) throw InputError(fmt::format("thresholds line {}: expected 4 fields", n));
        Threshold t;
        try {
            t = Threshold::parse(f[3]);
        } catch (const std::exception&) {
            throw InputError(fmt::format("thresholds line {}: bad value '{}'", n, f[3]));
        }
        if (f[0] == "consumer") {
            if (f[2] == "y_l")
                s.consumer.y_l = t;
            else if (f[2] == "y_h")
                s.consumer.y_h = t;
            else
                throw InputError(fmt::format("thresholds line {}: unknown entry '{}'", n, f[2]));
        } else if (f[0] == "producer") {
            Regime r;
            if (f[1] == "plus")
                r = Regime::expansion;
            else if (f[1] == "minus")
                r = Regime::contraction;
            else
                throw InputError(fmt::format("thresholds line {}: unknown regime '{}'", n, f[1]));
            auto& row = s.producer.row(r);
            if (f[2] == "x_l")
                row.x_l = t;
            else if (f[2] == "x_l_star")
                row.x_l_star = t;
            else if (f[2] == "x_h_star")
                row.x_h_star = t;
            else if (f[2] == "x_h")
                row.x_h = t;
            else
                throw InputError(fmt::format("thresholds line {}: unknown entry '{}'", n, f[2]));
        } else {
            throw InputError(fmt::format("thresholds line {}: unknown player '{}'", n, f[0]));
        }
        ++seen;
    }
    if (seen != 10) throw InputError(fmt::format("thresholds file has {} entries, expected 10", seen));
    return s;
}

std::string diagnostics_csv(const Diagnostics& d) {
    std::string out = "check,pass,value,limit,detail\n";
    for (const auto& c : d.items)
        out += fmt::format("{},{},{},{},{}\n", c.name, c.pass ? "true" : "false", fmt17(c.value), fmt17(c.limit),
                           csv_field(c.detail));
    return out;
}

std::string history_csv(const EquilibriumResult& e) {
    std::string out = "iteration,distance (USD)" + threshold_header() + "\n";
    for (size_t k = 0; k < e.path.size(); ++k) {
        const double d = k == 0 ? kNaN : (k - 1 < e.history.size() ? e.history[k - 1] : kNaN);
        out += fmt::format("{},{}{}\n", k, fmt17(d), threshold_cells(e.path[k]));
    }
    return out;
}

std::string value_dump_csv(const EquilibriumResult& e, int points) {
    const auto [prod, cons] = build_profits(e.params);
    double lo = kInf, hi = -kInf;
    auto take = [&](const Threshold& t) {
        if (t.finite()) {
            lo = std::min(lo, t.value());
            hi = std::max(hi, t.value());
        }
    };
    for (Regime r : kRegimes)
        for (const auto& t : e.strategies.producer.row(r).entries()) take(t);
    take(e.strategies.consumer.y_l);
    take(e.strategies.consumer.y_h);
    if (!(lo < hi)) {
        lo = std::min(prod.x1, cons.x1);
        hi = std::max(prod.x2, cons.x2);
    }
    const double pad = 0.1 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto safe = [](const PiecewiseValue& v, Regime r, double x) {
        try {
            return v.eval(r, x);
        } catch (const std::exception&) {
            return kNaN;
        }
    };
    std::string out = "x (USD),v_plus (USD),v_minus (USD),w_plus (USD),w_minus (USD)\n";
    const int n = std::max(points, 2);
    for (int i = 0; i < n; ++i) {
        const double x = lo + (hi - lo) * i / (n - 1);
        out += fmt::format("{},{},{},{},{}\n", fmt17(x), fmt17(safe(e.producer_values, Regime::expansion, x)),
                           fmt17(safe(e.producer_values, Regime::contraction, x)),
                           fmt17(safe(e.consumer_values, Regime::expansion, x)),
                           fmt17(safe(e.consumer_values, Regime::contraction, x)));
    }
    return out;
}

std::string path_csv(const PathRecord& rec) {
    std::string out = "t (yr),x (USD),regime\n";
    for (size_t i = 0; i < rec.t.size(); ++i)
        out += fmt::format("{},{},{}\n", fmt17(rec.t[i]), fmt17(rec.x[i]), sign(rec.regime[i]));
    return out;
}

std::string events_csv(const PathRecord& rec) {
    std::string out = "t (yr),kind,pre (USD),post (USD),regime_before\n";
    for (const auto& e : rec.events)
        out += fmt::format("{},{},{},{},{}\n", fmt17(e.t), name(e.kind), fmt17(e.pre), fmt17(e.post), sign(e.regime));
    return out;
}

std::string density_csv(const Density& d) {
    std::string out =
        "bin_left (USD),bin_right (USD),mass (1),mass_plus (1),mass_minus (1),centre (USD),smooth (1/USD),"
        "smooth_plus (1/USD),smooth_minus (1/USD)\n";
    for (size_t j = 0; j < d.mass.size(); ++j)
        out += fmt::format("{},{},{},{},{},{},{},{},{}\n", fmt17(d.edges[j]), fmt17(d.edges[j + 1]), fmt17(d.mass[j]),
                           fmt17(d.mass_plus[j]), fmt17(d.mass_minus[j]), fmt17(d.centres[j]), fmt17(d.smooth[j]),
                           fmt17(d.smooth_plus[j]), fmt17(d.smooth_minus[j]));
    return out;
}

std::string stats_csv(const LongRunStats& s) {
    std::string out = "statistic,value,unit\n";
    auto row = [&](const char* k, double v, const char* u) { out += fmt::format("{},{},{}\n", k, fmt17(v), u); };
    row("mean", s.mean, "USD");
    row("var", s.var, "USD^2");
    row("e_pi_p", s.e_pi_p, "USD/yr");
    row("e_pi_c", s.e_pi_c, "USD/yr");
    row("apoo_p", s.apoo_p, "1");
    row("apoo_c", s.apoo_c, "1");
    row("switches_per_year", s.switches_per_year, "1/yr");
    row("impulses_per_year", s.impulses_per_year, "1/yr");
    row("rho_plus", s.rho_plus, "1");
    row("years", s.years, "yr");
    return out;
}

std::string chain_csv(const JumpChain& c) {
    std::string out = "state";
    for (ChainState to : kChainStates) out += fmt::format(",to_{} (1)", name(to));
    out += ",pi (1),zeta (yr),start (USD),defined\n";
    for (ChainState from : kChainStates) {
        const int i = index(from);
        out += name(from);
        for (ChainState to : kChainStates) out += "," + fmt17(c.P[i][index(to)]);
        out += fmt::format(",{},{},{},{}\n", fmt17(c.pi[i]), fmt17(c.zeta[i]), fmt17(c.start[i]),
                           c.defined[i] ? "true" : "false");
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) make_dir(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw InputError("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int solve_exit_code(const EquilibriumResult& e, const Diagnostics& d) {
    if (!e.converged) return exit_no_convergence;
    return d.all_pass() ? exit_ok : exit_verification;
}

SolveOutcome run_solve(const ModelParams& p, Branch branch, Mode mode, const std::filesystem::path& out) {
    SolveOutcome o;
    o.eq = solve_equilibrium(p, branch, mode);
    if (o.eq.converged) o.diagnostics = verify(o.eq);
    o.exit_code = solve_exit_code(o.eq, o.diagnostics);

    make_dir(out);
    auto put = [&](const char* file, const std::string& text) {
        write_file(out / file, text);
        o.files.push_back(out / file);
    };
    put("thresholds.csv", thresholds_csv(reported_strategies(o.eq)));
    put("values.csv", value_dump_csv(o.eq));
    put("verification.csv", diagnostics_csv(o.diagnostics));
    put("history.csv", history_csv(o.eq));

    json j;
    j["kind"] = "solve";
    j["branch"] = name(branch);
    j["mode"] = name(mode);
    j["type"] = name(o.eq.type);
    j["converged"] = o.eq.converged;
    j["iterations"] = o.eq.iterations;
    j["message"] = o.eq.message;
    j["exit_code"] = o.exit_code;
    j["verified"] = o.eq.converged && o.diagnostics.all_pass();
    j["thresholds"] = thresholds_json(reported_strategies(o.eq));
    j["config"] = to_config(p);
    put("summary.json", j.dump(2) + "\n");
    return o;
}

StatsSource parse_stats_source(const std::string& s) {
    if (s == "none") return StatsSource::none;
    if (s == "exact") return StatsSource::exact;
    if (s == "sim" || s == "simulated") return StatsSource::simulated;
    throw InputError("unknown stats source '" + s + "' (none, exact, sim)");
}

const char* name(StatsSource s) {
    switch (s) {
        case StatsSource::none: return "none";
        case StatsSource::exact: return "exact";
        case StatsSource::simulated: return "sim";
    }
    return "?";
}

void set_parameter(ModelParams& p, const std::string& name, double v) {
    if (name == "sigma") {
        p.sigma = v;
    } else if (name == "h0") {
        p.h_plus = p.h_minus = v;
    } else if (name == "kappa0") {
        p.kappa0 = v;
    } else if (name == "mu_plus") {
        p.mu_plus = v;
    } else if (name == "mu_minus") {
        p.mu_minus = v;
    } else if (name == "p1") {
        if (!p.consumer_structural) throw InputError("p1 needs a structural consumer profit in the config");
        p.consumer_structural->p1 = v;
    } else {
        throw InputError("unknown sweep parameter '" + name + "' (sigma, h0, p1, kappa0, mu_plus, mu_minus)");
    }
}

void validate_sweep(const ModelParams& p, const SweepSpec& spec) {
    ModelParams q = p;
    set_parameter(q, spec.parameter, spec.grid.empty() ? 0.0 : spec.grid.front());
    for (size_t i = 1; i < spec.grid.size(); ++i)
        if (!(spec.grid[i] > spec.grid[i - 1]))
            throw InputError(fmt::format("sweep grid must be strictly increasing (entry {} = {} after {})", i,
                                         spec.grid[i], spec.grid[i - 1]));
}

namespace {

template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    int t = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    t = static_cast<int>(std::min<std::size_t>(t, n));
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int k = 0; k < t; ++k)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
    for (auto& th : pool) th.join();
}

LongRunStats stats_for(const EquilibriumResult& e, StatsSource src, SimConfig cfg) {
    if (src == StatsSource::exact) return exact_long_run_stats(e);
    if (!e.reachable[0]) cfg.r0 = Regime::contraction;
    return long_run_stats(e, cfg);
}

}  // namespace

std::vector<SweepRow> run_sweep(const ModelParams& p, const SweepSpec& spec) {
    validate_sweep(p, spec);
    std::vector<SweepRow> rows(spec.grid.size());
    // points run in parallel, so each simulation stays single threaded
    SimConfig sim = spec.sim;
    if (spec.grid.size() > 1) sim.threads = 1;
    parallel_for(spec.grid.size(), spec.threads, [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.index = i;
        row.value = spec.grid[i];
        ModelParams q = p;
        try {
            set_parameter(q, spec.parameter, row.value);
            validate(q);
            row.eq = solve_equilibrium(q, spec.branch, spec.mode);
            if (row.eq.converged) row.diagnostics = verify(row.eq);
            row.status = solve_exit_code(row.eq, row.diagnostics);
            if (!row.eq.converged) {
                row.failure = "no convergence: " + row.eq.message;
            } else if (row.status == exit_verification) {
                std::vector<std::string> bad;
                for (const auto& c : row.diagnostics.items)
                    if (!c.pass) bad.push_back(c.name);
                row.failure = "verification failed: " + fmt::format("{}", fmt::join(bad, " "));
            }
        } catch (const std::exception& ex) {
            row.status = exit_input;
            row.failure = std::string("solve failed: ") + ex.what();
            return;
        }
        if (spec.stats == StatsSource::none) return;
        if (!row.eq.converged) {
            row.stats_note = "not converged";
            return;
        }
        try {
            row.stats = stats_for(row.eq, spec.stats, sim);
            row.has_stats = true;
        } catch (const std::exception& ex) {
            row.stats_note = ex.what();
        }
    });
    return rows;
}

std::string sweep_csv(const SweepSpec& spec, const std::vector<SweepRow>& rows) {
    std::string out = fmt::format(
        "index,{} ({}),status,failure,type,converged,iterations{},mean (USD),var (USD^2),e_pi_p (USD/yr),"
        "e_pi_c (USD/yr),switches_per_year (1/yr),impulses_per_year (1/yr),rho_plus (1),stats_source,stats_note\n",
        spec.parameter, parameter_unit(spec.parameter), threshold_header());
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{},{},{}", r.index, fmt17(r.value), r.status, csv_field(r.failure),
                           name(r.eq.type), r.eq.converged ? "true" : "false", r.eq.iterations);
        out += threshold_cells(reported_strategies(r.eq));
        if (r.has_stats) {
            const auto& s = r.stats;
            out += fmt::format(",{},{},{},{},{},{},{}", fmt17(s.mean), fmt17(s.var), fmt17(s.e_pi_p), fmt17(s.e_pi_c),
                               fmt17(s.switches_per_year), fmt17(s.impulses_per_year), fmt17(s.rho_plus));
        } else {
            out += ",,,,,,,";
        }
        out += fmt::format(",{},{}\n", r.has_stats ? name(spec.stats) : "none", csv_field(r.stats_note));
    }
    return out;
}

int write_sweep_outputs(const std::filesystem::path& out, const SweepSpec& spec, const std::vector<SweepRow>& rows) {
    make_dir(out);
    write_file(out / "sweep.csv", sweep_csv(spec, rows));
    json j;
    j["kind"] = "sweep";
    j["parameter"] = spec.parameter;
    j["branch"] = name(spec.branch);
    j["mode"] = name(spec.mode);
    j["stats"] = name(spec.stats);
    int code = exit_ok;
    json pts = json::array();
    for (const auto& r : rows) {
        code = worse(code, r.status);
        pts.push_back({{"index", r.index},
                       {"value", r.value},
                       {"status", r.status},
                       {"type", name(r.eq.type)},
                       {"converged", r.eq.converged},
                       {"iterations", r.eq.iterations},
                       {"failure", r.failure}});
    }
    j["points"] = pts;
    j["exit_code"] = code;
    write_file(out / "summary.json", j.dump(2) + "\n");
    return code;
}

StationarySample simulated_sample(const EquilibriumResult& e, const SimConfig& cfg, int stride) {
    if (cfg.paths < 1 || !(cfg.horizon > 0.0) || !(cfg.dt > 0.0)) throw InputError("paths, horizon and dt must be positive");
    const double burn = cfg.burn_in < 0.0 ? 50.0 / e.params.beta : cfg.burn_in;
    if (!(cfg.horizon > burn)) throw InputError("horizon must exceed the burn-in");
    const Regime r0 = e.reachable[index(cfg.r0)] ? cfg.r0 : other(cfg.r0);
    const double x0 = std::isnan(cfg.x0) ? band_start(e.strategies, r0) : cfg.x0;
    SimOptions opt;
    opt.dt = cfg.dt;
    opt.bridge = cfg.bridge;
    opt.record_stride = std::max(1, stride);
    std::vector<std::vector<double>> per(cfg.paths);
    parallel_for(static_cast<std::size_t>(cfg.paths), cfg.threads, [&](std::size_t i) {
        auto rec = simulate_path(e, x0, r0, cfg.horizon, path_seed(cfg.seed, i), opt);
        for (size_t k = 0; k < rec.t.size(); ++k)
            if (rec.t[k] >= burn) per[i].push_back(rec.x[k]);
    });
    StationarySample s;
    for (auto& v : per) s.x.insert(s.x.end(), v.begin(), v.end());
    if (s.x.empty()) throw InputError("simulation produced no samples after burn-in");
    s.w.assign(s.x.size(), 1.0 / static_cast<double>(s.x.size()));
    return s;
}

StationarySample exact_sample(const EquilibriumResult& e, int nodes) {
    const auto bands = effective_bands(e.strategies);
    double lo = kInf, hi = -kInf;
    for (Regime r : kRegimes) {
        if (!e.reachable[index(r)]) continue;
        lo = std::min(lo, bands[index(r)].first);
        hi = std::max(hi, bands[index(r)].second);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw ModelError("price band is unbounded; no exact stationary law");
    const int n = std::max(nodes, 3) | 1;
    StationarySample s;
    for (int i = 0; i < n; ++i) s.x.push_back(lo + (hi - lo) * i / (n - 1));
    const auto dens = exact_density(e.params, e.strategies, s.x, e.reachable[0] ? Regime::expansion : Regime::contraction);
    // Simpson weights; the density has kinks only at band edges, which are nodes here or integrable
    const double h = (hi - lo) / (n - 1);
    double total = 0.0;
    s.w.resize(n);
    for (int i = 0; i < n; ++i) {
        const double c = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s.w[i] = c * h / 3.0 * dens[0][i];
        total += s.w[i];
    }
    if (!(total > 0.0)) throw ModelError("exact stationary density integrates to zero");
    for (double& w : s.w) w /= total;
    return s;
}

IntegrationCurve integration_curve(const ModelParams& p, const StationarySample& s, const std::vector<double>& lambdas) {
    const auto [prod, cons] = build_profits(p);
    IntegrationCurve c;
    if (p.consumer_structural) c.p1 = p.consumer_structural->p1;
    double mp = 0.0, mc = 0.0;
    for (size_t i = 0; i < s.x.size(); ++i) {
        mp += s.w[i] * prod(s.x[i]);
        mc += s.w[i] * cons(s.x[i]);
    }
    double vp = 0.0, vc = 0.0, cv = 0.0;
    for (size_t i = 0; i < s.x.size(); ++i) {
        const double dp = prod(s.x[i]) - mp, dc = cons(s.x[i]) - mc;
        vp += s.w[i] * dp * dp;
        vc += s.w[i] * dc * dc;
        cv += s.w[i] * dp * dc;
    }
    c.e_pi_p = mp;
    c.e_pi_c = mc;
    c.var_pi_p = vp;
    c.var_pi_c = vc;
    c.cov = cv;
    const double den = vp + vc - 2.0 * cv;
    if (den > 0.0)
        c.lambda_star = std::clamp((vp - cv) / den, 0.0, 1.0);
    else
        c.lambda_star = vc < vp ? 1.0 : 0.0;

    double best = kInf;
    for (double lam : lambdas) {
        IntegrationPoint pt;
        pt.lambda = lam;
        pt.mean = lam * mc + (1.0 - lam) * mp;
        const double var = lam * lam * vc + (1.0 - lam) * (1.0 - lam) * vp + 2.0 * lam * (1.0 - lam) * cv;
        pt.sd = std::sqrt(std::max(var, 0.0));
        double m = 0.0;
        for (size_t i = 0; i < s.x.size(); ++i) m += s.w[i] * (lam * cons(s.x[i]) + (1.0 - lam) * prod(s.x[i]));
        double v = 0.0;
        for (size_t i = 0; i < s.x.size(); ++i) {
            const double d = lam * cons(s.x[i]) + (1.0 - lam) * prod(s.x[i]) - m;
            v += s.w[i] * d * d;
        }
        pt.var_direct = v;
        if (pt.sd < best) {
            best = pt.sd;
            c.lambda_star_grid = lam;
        }
        c.points.push_back(pt);
    }
    return c;
}

std::vector<IntegrationCurve> integration_study(const ModelParams& p, const std::vector<double>& p1_grid,
                                                const std::vector<double>& lambdas, Branch branch, StatsSource source,
                                                const SimConfig& cfg) {
    if (!p.consumer_structural) throw InputError("integration study needs a structural consumer profit (p1)");
    for (size_t i = 1; i < p1_grid.size(); ++i)
        if (!(p1_grid[i] > p1_grid[i - 1])) throw InputError("p1 grid must be strictly increasing");
    for (double l : lambdas)
        if (!(l >= 0.0 && l <= 1.0)) throw InputError(fmt::format("lambda {} outside [0, 1]", l));
    if (source == StatsSource::none) throw InputError("integration study needs exact or simulated moments");
    std::vector<IntegrationCurve> out(p1_grid.size());
    SimConfig sim = cfg;
    if (p1_grid.size() > 1) sim.threads = 1;
    parallel_for(p1_grid.size(), cfg.threads, [&](std::size_t i) {
        ModelParams q = p;
        q.consumer_structural->p1 = p1_grid[i];
        IntegrationCurve& c = out[i];
        try {
            validate(q);
            auto e = solve_equilibrium(q, branch);
            Diagnostics d;
            if (e.converged) d = verify(e);
            const int code = solve_exit_code(e, d);
            if (!e.converged) {
                c.p1 = p1_grid[i];
                c.status = code;
                c.failure = "no convergence: " + e.message;
                return;
            }
            auto sample = source == StatsSource::exact ? exact_sample(e) : simulated_sample(e, sim);
            c = integration_curve(q, sample, lambdas);
            c.type = e.type;
            c.status = code;
            if (code == exit_verification) c.failure = "verification failed; moments use the unverified fixed point";
        } catch (const std::exception& ex) {
            c = {};
            c.p1 = p1_grid[i];
            c.status = exit_input;
            c.failure = std::string("failed: ") + ex.what();
        }
    });
    return out;
}

std::string integration_csv(const std::vector<IntegrationCurve>& curves) {
    std::string out =
        "p1 (1),lambda (1),pi_p_end (lambda=0),pi_c_end (lambda=1),mean_pi_lambda (USD/yr),sd_pi_lambda (USD/yr),"
        "var_direct (USD^2/yr^2),status\n";
    for (const auto& c : curves) {
        if (c.points.empty()) {
            out += fmt::format("{},,,,,,,{}\n", fmt17(c.p1), c.status);
            continue;
        }
        for (const auto& pt : c.points)
            out += fmt::format("{},{},{},{},{},{},{},{}\n", fmt17(c.p1), fmt17(pt.lambda), fmt17(1.0 - pt.lambda),
                               fmt17(pt.lambda), fmt17(pt.mean), fmt17(pt.sd), fmt17(pt.var_direct), c.status);
    }
    return out;
}

std::string lambda_star_csv(const std::vector<IntegrationCurve>& curves) {
    std::string out =
        "p1 (1),status,failure,type,lambda_star (1),lambda_star_grid (1),e_pi_p (USD/yr),e_pi_c (USD/yr),"
        "var_pi_p (USD^2/yr^2),var_pi_c (USD^2/yr^2),cov (USD^2/yr^2)\n";
    for (const auto& c : curves) {
        out += fmt::format("{},{},{},{}", fmt17(c.p1), c.status, csv_field(c.failure), name(c.type));
        if (c.points.empty()) {
            out += ",,,,,,,\n";
            continue;
        }
        out += fmt::format(",{},{},{},{},{},{},{}\n", fmt17(c.lambda_star), fmt17(c.lambda_star_grid), fmt17(c.e_pi_p),
                           fmt17(c.e_pi_c), fmt17(c.var_pi_p), fmt17(c.var_pi_c), fmt17(c.cov));
    }
    return out;
}

int write_integration_outputs(const std::filesystem::path& out, const std::vector<IntegrationCurve>& curves) {
    make_dir(out);
    write_file(out / "integration.csv", integration_csv(curves));
    write_file(out / "lambda_star.csv", lambda_star_csv(curves));
    json j;
    j["kind"] = "integrate";
    int code = exit_ok;
    json pts = json::array();
    for (const auto& c : curves) {
        code = worse(code, c.status);
        json pt = {{"p1", c.p1}, {"status", c.status}, {"type", name(c.type)}, {"failure", c.failure}};
        if (!c.points.empty()) pt["lambda_star"] = c.lambda_star;
        pts.push_back(pt);
    }
    j["points"] = pts;
    j["exit_code"] = code;
    write_file(out / "summary.json", j.dump(2) + "\n");
    return code;
}

namespace {

std::string table_of_csv(const std::string& text, std::size_t max_rows = 200) {
    std::istringstream in(text);
    std::string line, out;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (n++ > max_rows) {
            out += "  ...\n";
            break;
        }
        out += "  " + line + "\n";
    }
    return out;
}

}  // namespace

std::string run_report(const std::filesystem::path& dir) {
    const auto summary = dir / "summary.json";
    if (!std::filesystem::exists(summary))
        throw InputError(fmt::format(
            "no run artifacts in {}: expected summary.json with thresholds.csv and verification.csv (solve), "
            "sweep.csv (sweep) or integration.csv and lambda_star.csv (integrate)",
            dir.string()));
    json j;
    try {
        j = json::parse(read_file(summary));
    } catch (const json::exception& ex) {
        throw InputError(fmt::format("{} is not valid JSON: {}", summary.string(), ex.what()));
    }
    const std::string kind = j.value("kind", "");
    auto need = [&](const char* file) {
        if (!std::filesystem::exists(dir / file))
            throw InputError(fmt::format("{} run in {} is missing {}", kind, dir.string(), file));
        return read_file(dir / file);
    };
    std::string out;
    if (kind == "solve") {
        const auto thr = need("thresholds.csv");
        const auto ver = need("verification.csv");
        out += fmt::format("Equilibrium solve ({} branch, {} mode)\n\n", j.value("branch", "?"), j.value("mode", "?"));
        out += fmt::format("type: {}\nconverged: {} after {} iterations\nmessage: {}\nexit code: {}\n\n",
                           j.value("type", "?"), j.value("converged", false), j.value("iterations", 0),
                           j.value("message", ""), j.value("exit_code", -1));
        const auto s = parse_thresholds_csv(thr);
        auto row = [](const ProducerRow& r) {
            return fmt::format("[{}, {}, {}, {}]", r.x_l.str(), r.x_l_star.str(), r.x_h_star.str(), r.x_h.str());
        };
        out += "thresholds:\n";
        out += "  C_p+ = " + row(s.producer.row(Regime::expansion)) + "\n";
        out += "  C_p- = " + row(s.producer.row(Regime::contraction)) + "\n";
        out += fmt::format("  C_c  = [{}, {}]\n\n", s.consumer.y_l.str(), s.consumer.y_h.str());
        out += "verification ledger:\n";
        std::istringstream in(ver);
        std::string line;
        std::getline(in, line);
        int fails = 0, total = 0;
        while (std::getline(in, line)) {
            auto f = split_csv_line(line);
            if (f.size() < 5) continue;
            ++total;
            if (f[1] != "true") ++fails;
            out += fmt::format("  {:<18} {:<5} value {:<24} limit {:<8} {}\n", f[0], f[1] == "true" ? "pass" : "FAIL",
                               f[2], f[3], f[4]);
        }
        out += total == 0 ? "  (not run: no converged fixed point)\n"
                          : fmt::format("  {} of {} checks pass\n", total - fails, total);
        if (std::filesystem::exists(dir / "stats.csv")) out += "\nlong-run statistics:\n" + table_of_csv(read_file(dir / "stats.csv"));
    } else if (kind == "sweep") {
        need("sweep.csv");
        out += fmt::format("Parameter sweep over {} ({} branch, stats {})\n\n", j.value("parameter", "?"),
                           j.value("branch", "?"), j.value("stats", "?"));
        out += "per-point convergence:\n";
        out += fmt::format("  {:>5} {:>24} {:>6} {:>12} {:>9} {:>5}  {}\n", "index", "value", "status", "type",
                           "converged", "iter", "failure");
        for (const auto& pt : j["points"])
            out += fmt::format("  {:>5} {:>24} {:>6} {:>12} {:>9} {:>5}  {}\n", pt.value("index", 0),
                               fmt17(pt.value("value", kNaN)), pt.value("status", -1), pt.value("type", "?"),
                               pt.value("converged", false) ? "yes" : "no", pt.value("iterations", 0),
                               pt.value("failure", ""));
        if (j["points"].empty()) out += "  (empty grid)\n";
        out += fmt::format("\nexit code: {}\n", j.value("exit_code", -1));
    } else if (kind == "integrate") {
        need("integration.csv");
        const auto ls = need("lambda_star.csv");
        out += "Vertical integration study (pi_lambda = lambda pi_c + (1 - lambda) pi_p)\n\n";
        out += "risk-minimising mix per p1:\n" + table_of_csv(ls);
        out += fmt::format("\nexit code: {}\n", j.value("exit_code", -1));
    } else {
        throw InputError(fmt::format("{} has unknown run kind '{}'", summary.string(), kind));
    }
    return out;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    if (text.empty()) return out;
    auto num = [&](const std::string& s) {
        double v = 0.0;
        auto b = s.find_first_not_of(' '), e = s.find_last_not_of(' ');
        if (b == std::string::npos) throw InputError("empty entry in grid '" + text + "'");
        const std::string t = s.substr(b, e - b + 1);
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size()) throw InputError("bad number '" + t + "' in grid");
        return v;
    };
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : text) {
            if (c == ':') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(cur);
        if (parts.size() != 3) throw InputError("grid range must be lo:hi:n, got '" + text + "'");
        const double lo = num(parts[0]), hi = num(parts[1]), nn = num(parts[2]);
        const int n = static_cast<int>(nn);
        if (n != nn || n < 1) throw InputError("grid count must be a positive integer in '" + text + "'");
        if (n == 1) return {lo};
        for (int i = 0; i < n; ++i) out.push_back(i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1));
        return out;
    }
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            out.push_back(num(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(num(cur));
    return out;
}

}  // namespace cpgame
