#include "cpgame/consumer_br.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <fmt/format.h>

#include "pasting.hpp"

namespace cpgame {

using detail::Boundary;
using detail::PastingProblem;
using detail::Ref;

const char* name(ConsumerKind k) {
    switch (k) {
        case ConsumerKind::no_switch: return "no_switch";
        case ConsumerKind::single_switch_to_plus: return "single_switch_to_plus";
        case ConsumerKind::single_switch_to_minus: return "single_switch_to_minus";
        case ConsumerKind::double_switch: return "double_switch";
        case ConsumerKind::alone: return "alone";
    }
    return "?";
}

int switch_count(ConsumerKind k) {
    switch (k) {
        case ConsumerKind::no_switch: return 0;
        case ConsumerKind::single_switch_to_plus:
        case ConsumerKind::single_switch_to_minus: return 1;
        default: return 2;
    }
}

namespace {

Boundary producer_lower(const ProducerRow& row) {
    if (row.x_l.finite() && row.x_l_star.finite())
        return Boundary::peg(Ref::at(row.x_l.value()), Ref::at(row.x_l_star.value()));
    return Boundary::open();
}

Boundary producer_upper(const ProducerRow& row) {
    if (row.x_h.finite() && row.x_h_star.finite())
        return Boundary::peg(Ref::at(row.x_h.value()), Ref::at(row.x_h_star.value()));
    return Boundary::open();
}

double finite_or(const Threshold& t, double fallback) { return t.finite() ? t.value() : fallback; }

/// Consumer problem: switch up at y_l in contraction and/or down at y_h in expansion.
struct ConsumerSetup {
    PastingProblem prob;
    int iy_l = -1;
    int iy_h = -1;
};

ConsumerSetup consumer_problem(const ModelParams& p, const ProducerStrategy& cp, bool switch_up, bool switch_down,
                               const char* provenance, double spread = 2.0) {
    auto [prod, cons] = build_profits(p);
    ConsumerSetup s;
    auto& prob = s.prob;
    prob.params = p;
    prob.profit = cons;
    prob.provenance = provenance;
    const double wide = spread * (cons.x2 - cons.x1);
    const auto& plus = cp.row(Regime::expansion);
    const auto& minus = cp.row(Regime::contraction);

    if (switch_up) {
        s.iy_l = prob.n_unknowns++;
        double lo = std::max(finite_or(plus.x_l, -INFINITY), finite_or(minus.x_l, -INFINITY));
        double hi = finite_or(minus.x_h, INFINITY);
        prob.lo.push_back(std::isfinite(lo) ? lo : cons.x1 - wide);
        prob.hi.push_back(std::isfinite(hi) ? hi : cons.x2 + wide);
    }
    if (switch_down) {
        s.iy_h = prob.n_unknowns++;
        double lo = finite_or(plus.x_l, -INFINITY);
        double hi = finite_or(plus.x_h, INFINITY);
        if (switch_up) {
            lo = std::max(lo, finite_or(minus.x_l, -INFINITY));
            hi = std::min(hi, finite_or(minus.x_h, INFINITY));
        }
        prob.lo.push_back(std::isfinite(lo) ? lo : cons.x1 - wide);
        prob.hi.push_back(std::isfinite(hi) ? hi : cons.x2 + wide);
    }
    if (switch_up && switch_down) prob.order.emplace_back(s.iy_l, s.iy_h);

    auto& lp = prob.layout[index(Regime::expansion)];
    lp.present = true;
    lp.lower = producer_lower(plus);
    lp.upper = switch_down ? Boundary::swap(Ref::var(s.iy_h), p.h_plus, true) : producer_upper(plus);
    auto& lm = prob.layout[index(Regime::contraction)];
    lm.present = true;
    lm.lower = switch_up ? Boundary::swap(Ref::var(s.iy_l), p.h_minus, true) : producer_lower(minus);
    lm.upper = producer_upper(minus);
    return s;
}

std::vector<double> seeds(const ConsumerSetup& s, const QuadProfit& cons, const ConsumerOptions& opt) {
    std::vector<double> u(s.prob.n_unknowns);
    if (s.iy_l >= 0) u[s.iy_l] = opt.seed_y_l.value_or(cons.xbar - 0.5);
    if (s.iy_h >= 0) u[s.iy_h] = opt.seed_y_h.value_or(cons.xbar + 0.5);
    return u;
}

/// Index of the candidate whose values dominate the others on the comparison band, else the best on average.
size_t select_dominant(const std::vector<const PiecewiseValue*>& vals, double lo, double hi, int points) {
    const int m = std::max(2, points);
    std::vector<std::vector<double>> grid(vals.size());
    double scale = 1.0;
    for (size_t i = 0; i < vals.size(); ++i)
        for (Regime r : kRegimes)
            for (int k = 0; k < m; ++k) {
                double v = vals[i]->eval(r, lo + (hi - lo) * k / (m - 1));
                grid[i].push_back(v);
                scale = std::max(scale, std::abs(v));
            }
    const double tol = 1e-9 * scale;
    for (size_t a = 0; a < vals.size(); ++a) {
        bool all = true;
        for (size_t b = 0; b < vals.size() && all; ++b)
            for (size_t k = 0; k < grid[a].size() && all; ++k)
                if (grid[a][k] < grid[b][k] - tol) all = false;
        if (all) return a;
    }
    size_t best = 0;
    double best_mean = -INFINITY;
    for (size_t a = 0; a < vals.size(); ++a) {
        double mean = 0.0;
        for (double v : grid[a]) mean += v;
        mean /= static_cast<double>(grid[a].size());
        if (mean > best_mean + tol) {
            best_mean = mean;
            best = a;
        }
    }
    return best;
}

/// Solves from the warm seed, the default seed and a coarse grid over the bracket, keeping the dominant root.
detail::PastingSolution best_root(const ConsumerSetup& s, const ModelParams& p, const ProducerStrategy& cp,
                                  const ConsumerOptions& opt,
                                  const std::function<bool(const std::vector<double>&)>& accept = {}) {
    const auto& prob = s.prob;
    const int n = prob.n_unknowns;
    std::vector<std::vector<double>> starts{seeds(s, prob.profit, opt)};
    if (opt.seed_y_l || opt.seed_y_h) starts.push_back(seeds(s, prob.profit, ConsumerOptions{}));
    const int g = n == 1 ? 8 : 5;
    for (int i = 1; i <= g; ++i) {
        if (n == 1) {
            starts.push_back({prob.lo[0] + (prob.hi[0] - prob.lo[0]) * i / (g + 1)});
            continue;
        }
        for (int j = 1; j <= g; ++j) {
            std::vector<double> u{prob.lo[0] + (prob.hi[0] - prob.lo[0]) * i / (g + 1),
                                  prob.lo[1] + (prob.hi[1] - prob.lo[1]) * j / (g + 1)};
            bool ordered = true;
            for (auto [a, b] : prob.order) ordered = ordered && u[a] < u[b];
            if (ordered) starts.push_back(u);
        }
    }
    auto f = [&](const std::vector<double>& u) { return prob.residual(u); };
    auto proj = [&](std::vector<double> u) { return prob.project(std::move(u)); };
    const double m = 10.0 * prob.margin();
    std::vector<detail::PastingSolution> roots;
    for (const auto& u0 : starts) {
        auto r = detail::newton(f, proj, u0);
        if (!r.converged) continue;
        bool inside = true;
        for (int i = 0; i < n; ++i) inside = inside && r.x[i] > prob.lo[i] + m && r.x[i] < prob.hi[i] - m;
        for (auto [a, b] : prob.order) inside = inside && r.x[a] < r.x[b] - m;
        if (!inside || (accept && !accept(r.x))) continue;
        bool dup = false;
        for (const auto& q : roots) {
            double d = 0.0;
            for (int i = 0; i < n; ++i) d = std::max(d, std::abs(q.u[i] - r.x[i]));
            dup = dup || d < 1e-6;
        }
        if (dup) continue;
        detail::PastingSolution sol;
        try {
            sol.value = prob.build(r.x);
        } catch (const std::exception&) {
            continue;
        }
        sol.ok = true;
        sol.u = r.x;
        sol.residual = detail::pasting_residual(prob, sol.value, r.x);
        sol.iterations = r.iterations;
        roots.push_back(std::move(sol));
    }
    if (roots.empty()) return detail::solve(prob, starts.front(), accept);
    if (roots.size() == 1) return roots.front();
    std::vector<const PiecewiseValue*> vals;
    for (const auto& r : roots) vals.push_back(&r.value);
    auto [lo, hi] = comparison_band(p, cp, prob.profit);
    auto best = roots[select_dominant(vals, lo, hi, opt.grid_points)];
    best.message = fmt::format("best of {} admissible roots", roots.size());
    return best;
}

ConsumerBR finish(ConsumerKind kind, const ConsumerSetup& s, const detail::PastingSolution& sol) {
    ConsumerBR br;
    br.kind = kind;
    br.ok = sol.ok;
    br.message = sol.message;
    br.residual = sol.residual;
    br.iterations = sol.iterations;
    if (!sol.ok) return br;
    br.values = sol.value;
    if (s.iy_l >= 0) br.strategy.y_l = Threshold::at(sol.u[s.iy_l]);
    if (s.iy_h >= 0) br.strategy.y_h = Threshold::at(sol.u[s.iy_h]);
    return br;
}

}  // namespace

PiecewiseValue no_switch_value(const ModelParams& p, const ProducerStrategy& cp, Regime regime) {
    auto s = consumer_problem(p, cp, false, false, "consumer no_switch");
    s.prob.layout[index(other(regime))].present = false;
    return s.prob.build({});
}

ConsumerBR no_switch_br(const ModelParams& p, const ProducerStrategy& cp) {
    auto s = consumer_problem(p, cp, false, false, "consumer no_switch");
    ConsumerBR br;
    try {
        br = finish(ConsumerKind::no_switch, s, detail::solve(s.prob, {}));
    } catch (const std::exception& e) {
        br.kind = ConsumerKind::no_switch;
        br.ok = false;
        br.message = e.what();
    }
    return br;
}

ConsumerBR single_switch_br(const ModelParams& p, const ProducerStrategy& cp, Regime preferred,
                            const ConsumerOptions& opt) {
    bool to_minus = preferred == Regime::contraction;
    auto kind = to_minus ? ConsumerKind::single_switch_to_minus : ConsumerKind::single_switch_to_plus;
    auto s = consumer_problem(p, cp, !to_minus, to_minus, to_minus ? "consumer single_switch_to_minus"
                                                                    : "consumer single_switch_to_plus");
    ConsumerBR br;
    try {
        br = finish(kind, s, best_root(s, p, cp, opt));
    } catch (const std::exception& e) {
        br.kind = kind;
        br.ok = false;
        br.message = e.what();
    }
    if (!br.ok) br.message = "no single-switch best response: " + br.message;
    return br;
}

ConsumerBR double_switch_br(const ModelParams& p, const ProducerStrategy& cp, const ConsumerOptions& opt) {
    auto s = consumer_problem(p, cp, true, true, "consumer double_switch");
    ConsumerBR br;
    try {
        br = finish(ConsumerKind::double_switch, s, best_root(s, p, cp, opt));
    } catch (const std::exception& e) {
        br.kind = ConsumerKind::double_switch;
        br.ok = false;
        br.message = e.what();
    }
    if (!br.ok) {
        br.message = "no double-switch best response: " + br.message;
        return br;
    }
    double yl = br.strategy.y_l.value(), yh = br.strategy.y_h.value();
    const auto& plus = cp.row(Regime::expansion);
    const auto& minus = cp.row(Regime::contraction);
    bool ordered = yl < yh && (!plus.x_l.finite() || plus.x_l.value() < yl) &&
                   (!minus.x_h.finite() || yh < minus.x_h.value());
    br.diagnostics.push_back(fmt::format("ordering x_l+ < y_l < y_h < x_h-: {}", ordered ? "holds" : "violated"));
    if (!ordered) {
        br.ok = false;
        br.message = "no double-switch best response: ordering violated at the root";
    }
    return br;
}

ConsumerBR consumer_alone(const ModelParams& p, const ConsumerOptions& opt) {
    ProducerStrategy none;
    none.rows = {ProducerRow::absent_row(), ProducerRow::absent_row()};
    ConsumerBR br;
    // without a producer the thresholds move away from the habitat as h grows, so widen the bracket on failure
    for (double spread : {2.0, 8.0, 32.0}) {
        auto s = consumer_problem(p, none, true, true, "consumer alone", spread);
        auto cons = s.prob.profit;
        try {
            br = finish(ConsumerKind::alone, s, detail::solve(s.prob, seeds(s, cons, opt)));
        } catch (const std::exception& e) {
            br = {};
            br.kind = ConsumerKind::alone;
            br.ok = false;
            br.message = e.what();
        }
        if (br.ok) break;
    }
    return br;
}

std::pair<double, double> comparison_band(const ModelParams&, const ProducerStrategy& cp, const QuadProfit& profit) {
    std::vector<double> levels;
    for (Regime r : kRegimes) {
        const auto& row = cp.row(r);
        for (const auto& t : {row.x_l, row.x_h})
            if (t.finite()) levels.push_back(t.value());
    }
    if (levels.size() >= 2) {
        auto [lo, hi] = std::minmax_element(levels.begin(), levels.end());
        if (*lo < *hi) return {*lo, *hi};
    }
    double lo = profit.x1, hi = profit.x2;
    for (double l : levels) {
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    return {lo, hi};
}

ConsumerBR consumer_best_response(const ModelParams& p, const ProducerStrategy& cp, const ConsumerOptions& opt) {
    std::vector<ConsumerBR> cands;
    std::vector<std::string> notes;
    auto keep = [&](ConsumerBR br) {
        if (br.ok)
            cands.push_back(std::move(br));
        else
            notes.push_back(fmt::format("{} unavailable: {}", name(br.kind), br.message));
    };
    if (opt.allow_no_switch) keep(no_switch_br(p, cp));
    if (opt.allow_single_minus) keep(single_switch_br(p, cp, Regime::contraction, opt));
    if (opt.allow_single_plus) keep(single_switch_br(p, cp, Regime::expansion, opt));
    if (opt.allow_double) keep(double_switch_br(p, cp, opt));
    if (cands.empty()) {
        ConsumerBR br;
        br.ok = false;
        br.message = "no consumer candidate could be solved";
        br.diagnostics = notes;
        return br;
    }

    auto cons = build_profits(p).second;
    auto [lo, hi] = comparison_band(p, cp, cons);
    const int m = std::max(2, opt.grid_points);
    std::vector<std::vector<double>> vals(cands.size());
    double scale = 1.0;
    for (size_t i = 0; i < cands.size(); ++i)
        for (Regime r : kRegimes)
            for (int k = 0; k < m; ++k) {
                double v = cands[i].values.eval(r, lo + (hi - lo) * k / (m - 1));
                vals[i].push_back(v);
                scale = std::max(scale, std::abs(v));
            }
    const double tol = 1e-9 * scale;
    auto dominates = [&](size_t a, size_t b) {
        for (size_t k = 0; k < vals[a].size(); ++k)
            if (vals[a][k] < vals[b][k] - tol) return false;
        return true;
    };
    std::vector<size_t> order(cands.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return switch_count(cands[a].kind) < switch_count(cands[b].kind); });
    for (size_t a : order) {
        bool all = true;
        for (size_t b = 0; b < cands.size() && all; ++b)
            if (b != a && !dominates(a, b)) all = false;
        if (all) {
            ConsumerBR best = cands[a];
            best.diagnostics.insert(best.diagnostics.end(), notes.begin(), notes.end());
            best.diagnostics.push_back(
                fmt::format("selected {} by pointwise dominance over {} candidate(s)", name(best.kind), cands.size()));
            return best;
        }
    }
    size_t best_i = order.front();
    double best_mean = -INFINITY;
    for (size_t a : order) {
        double mean = 0.0;
        for (double v : vals[a]) mean += v;
        mean /= static_cast<double>(vals[a].size());
        if (mean > best_mean + tol) {
            best_mean = mean;
            best_i = a;
        }
    }
    ConsumerBR best = cands[best_i];
    best.diagnostics.insert(best.diagnostics.end(), notes.begin(), notes.end());
    best.diagnostics.push_back(
        fmt::format("no candidate dominates pointwise; selected {} by grid-average payoff", name(best.kind)));
    return best;
}

}  // namespace cpgame
