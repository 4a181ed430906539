#include "cpgame/producer_br.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pasting.hpp"

namespace cpgame {

using detail::Boundary;
using detail::PastingProblem;
using detail::Ref;

const char* name(ProducerKind k) {
    switch (k) {
        case ProducerKind::monopoly: return "monopoly";
        case ProducerKind::non_preemptive: return "non_preemptive";
        case ProducerKind::preemptive_plus: return "preemptive_plus";
        case ProducerKind::preemptive_minus: return "preemptive_minus";
    }
    return "?";
}

double impulse_cost(double xi, const ModelParams& p) { return p.kappa0 + p.kappa1 * std::abs(xi); }

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// How the producer's continuation band ends on one side.
enum class Edge { impulse, pinned, consumer_switch };

struct EdgePlan {
    Edge kind = Edge::impulse;
    double level = kNaN;  // fixed level for pinned / consumer_switch
};

struct RegimePlan {
    bool present = true;
    EdgePlan lower;
    EdgePlan upper;
};

struct Indices {
    int x_l = -1, t_l = -1, t_h = -1, x_h = -1;
};

struct ProducerSetup {
    PastingProblem prob;
    std::array<Indices, 2> idx;
    std::array<RegimePlan, 2> plan;
};

ProducerSetup producer_problem(const ModelParams& p, const std::array<RegimePlan, 2>& plan, const char* provenance) {
    auto [prod, cons] = build_profits(p);
    ProducerSetup s;
    s.plan = plan;
    auto& prob = s.prob;
    prob.params = p;
    prob.profit = prod;
    prob.provenance = provenance;
    const double wide = prod.x2 - prod.x1;
    const double lo_all = prod.x1 - wide, hi_all = prod.x2 + wide;
    auto add = [&](double lo, double hi) {
        prob.lo.push_back(lo);
        prob.hi.push_back(hi);
        return prob.n_unknowns++;
    };
    const bool shared_targets = p.kappa1 == 0.0;

    for (Regime r : kRegimes) {
        const auto& rp = plan[index(r)];
        auto& L = prob.layout[index(r)];
        auto& id = s.idx[index(r)];
        L.present = rp.present;
        if (!rp.present) continue;
        double lo_bound = rp.lower.kind == Edge::impulse ? lo_all : rp.lower.level;
        double hi_bound = rp.upper.kind == Edge::impulse ? hi_all : rp.upper.level;

        if (rp.lower.kind == Edge::impulse) {
            id.x_l = add(lo_all, hi_bound);
            id.t_l = add(lo_all, hi_bound);
            prob.order.emplace_back(id.x_l, id.t_l);
        }
        bool upper_has_target = rp.upper.kind != Edge::consumer_switch;
        if (upper_has_target) {
            if (shared_targets && id.t_l >= 0) {
                id.t_h = id.t_l;
            } else {
                id.t_h = add(std::max(lo_all, lo_bound), hi_all);
            }
            if (rp.upper.kind == Edge::impulse) {
                id.x_h = add(std::max(lo_all, lo_bound), hi_all);
                prob.order.emplace_back(id.t_h, id.x_h);
            } else {
                prob.hi[id.t_h] = std::min(prob.hi[id.t_h], rp.upper.level);
            }
        }

        switch (rp.lower.kind) {
            case Edge::impulse:
                L.lower = Boundary::peg(Ref::var(id.x_l), Ref::var(id.t_l), p.kappa0, p.kappa1, true, true);
                break;
            case Edge::pinned:
                // mirrored preemption: the target sits above the pinned level
                id.t_l = id.t_h >= 0 && shared_targets ? id.t_h : add(rp.lower.level, hi_all);
                L.lower = Boundary::peg(Ref::at(rp.lower.level), Ref::var(id.t_l), p.kappa0, p.kappa1, false, true);
                break;
            case Edge::consumer_switch: L.lower = Boundary::swap(Ref::at(rp.lower.level), 0.0); break;
        }
        bool upper_foc = !(shared_targets && id.t_h == id.t_l);
        switch (rp.upper.kind) {
            case Edge::impulse:
                L.upper = Boundary::peg(Ref::var(id.x_h), Ref::var(id.t_h), p.kappa0, p.kappa1, true, upper_foc);
                break;
            case Edge::pinned:
                L.upper = Boundary::peg(Ref::at(rp.upper.level), Ref::var(id.t_h), p.kappa0, p.kappa1, false, upper_foc);
                break;
            case Edge::consumer_switch: L.upper = Boundary::swap(Ref::at(rp.upper.level), 0.0); break;
        }
    }
    return s;
}

std::vector<double> producer_seed(const ProducerSetup& s, const QuadProfit& prod, const std::optional<ProducerStrategy>& seed) {
    std::vector<double> u(s.prob.n_unknowns);
    const double half = 0.5 * (prod.x2 - prod.x1);
    for (Regime r : kRegimes) {
        const auto& id = s.idx[index(r)];
        const ProducerRow* row = seed ? &seed->row(r) : nullptr;
        auto pick = [&](int i, const Threshold* t, double fallback) {
            if (i < 0) return;
            u[i] = (t && t->finite()) ? t->value() : fallback;
        };
        pick(id.x_l, row ? &row->x_l : nullptr, prod.xbar - half);
        pick(id.t_l, row ? &row->x_l_star : nullptr, prod.xbar);
        if (id.t_h != id.t_l) pick(id.t_h, row ? &row->x_h_star : nullptr, prod.xbar);
        pick(id.x_h, row ? &row->x_h : nullptr, prod.xbar + half);
    }
    return s.prob.project(u);
}

ProducerBR finish(ProducerKind kind, const ProducerSetup& s, const detail::PastingSolution& sol) {
    ProducerBR br;
    br.kind = kind;
    br.ok = sol.ok;
    br.message = sol.message;
    br.residual = sol.residual;
    br.iterations = sol.iterations;
    br.soc_lower = {kNaN, kNaN};
    br.soc_upper = {kNaN, kNaN};
    if (!sol.ok) return br;
    br.values = sol.value;
    br.soc_ok = true;
    for (Regime r : kRegimes) {
        const auto& rp = s.plan[index(r)];
        const auto& id = s.idx[index(r)];
        auto& row = br.strategy.row(r);
        if (!rp.present) {
            row = ProducerRow::absent_row();
            continue;
        }
        auto at = [&](int i) { return Threshold::at(sol.u[i]); };
        switch (rp.lower.kind) {
            case Edge::impulse:
                row.x_l = at(id.x_l);
                row.x_l_star = at(id.t_l);
                break;
            case Edge::pinned:
                row.x_l = Threshold::at(rp.lower.level);
                row.x_l_star = at(id.t_l);
                break;
            case Edge::consumer_switch:
                row.x_l = Threshold::minus_inf();
                row.x_l_star = Threshold::none();
                break;
        }
        switch (rp.upper.kind) {
            case Edge::impulse:
                row.x_h = at(id.x_h);
                row.x_h_star = at(id.t_h);
                break;
            case Edge::pinned:
                row.x_h = Threshold::at(rp.upper.level);
                row.x_h_star = at(id.t_h);
                break;
            case Edge::consumer_switch:
                row.x_h = Threshold::plus_inf();
                row.x_h_star = Threshold::none();
                break;
        }
        if (row.x_l_star.finite()) {
            br.soc_lower[index(r)] = br.values.deriv2(r, row.x_l_star.value());
            br.soc_ok = br.soc_ok && br.soc_lower[index(r)] < 0.0;
        }
        if (row.x_h_star.finite()) {
            br.soc_upper[index(r)] = br.values.deriv2(r, row.x_h_star.value());
            br.soc_ok = br.soc_ok && br.soc_upper[index(r)] < 0.0;
        }
    }
    if (!br.soc_ok) {
        br.ok = false;
        br.message = "second-order condition fails at an impulse target";
    }
    return br;
}

ProducerBR run(ProducerKind kind, const ModelParams& p, const std::array<RegimePlan, 2>& plan, const char* provenance,
               const std::optional<ProducerStrategy>& seed) {
    ProducerBR br;
    try {
        auto s = producer_problem(p, plan, provenance);
        auto prod = s.prob.profit;
        auto u0 = producer_seed(s, prod, seed);
        br = finish(kind, s, detail::solve(s.prob, u0));
    } catch (const std::exception& e) {
        br.kind = kind;
        br.ok = false;
        br.message = e.what();
    }
    return br;
}

RegimePlan two_sided() { return {true, {Edge::impulse, kNaN}, {Edge::impulse, kNaN}}; }

}  // namespace

ProducerBR monopoly_two_sided(const ModelParams& p, Regime regime, const ProducerOptions& opt) {
    std::array<RegimePlan, 2> plan{two_sided(), two_sided()};
    plan[index(other(regime))].present = false;
    auto br = run(ProducerKind::monopoly, p, plan, "producer monopoly", opt.seed);
    if (!br.ok) br.message = "no monopoly impulse policy in the search region: " + br.message;
    return br;
}

ProducerBR monopoly(const ModelParams& p, const ProducerOptions& opt) {
    auto plus = monopoly_two_sided(p, Regime::expansion, opt);
    auto minus = monopoly_two_sided(p, Regime::contraction, opt);
    ProducerBR br = plus;
    br.ok = plus.ok && minus.ok;
    if (!minus.ok) {
        br.message = minus.message;
        return br;
    }
    if (!plus.ok) return br;
    br.values.regime(Regime::contraction) = minus.values.regime(Regime::contraction);
    br.strategy.row(Regime::contraction) = minus.strategy.row(Regime::contraction);
    br.soc_lower[1] = minus.soc_lower[1];
    br.soc_upper[1] = minus.soc_upper[1];
    br.residual = std::max(plus.residual, minus.residual);
    br.iterations = plus.iterations + minus.iterations;
    return br;
}

ProducerBR nonpreemptive_br(const ModelParams& p, const ConsumerStrategy& cc, const ProducerOptions& opt) {
    std::array<RegimePlan, 2> plan{two_sided(), two_sided()};
    if (cc.y_h.finite()) plan[0].upper = {Edge::consumer_switch, cc.y_h.value()};
    if (cc.y_l.finite()) plan[1].lower = {Edge::consumer_switch, cc.y_l.value()};
    auto seed = opt.seed;
    if (!seed) {
        auto mono = monopoly(p);
        if (mono.ok) seed = mono.strategy;
    }
    auto br = run(ProducerKind::non_preemptive, p, plan, "producer non_preemptive", seed);
    if (!br.ok) {
        br.message = "non-preemptive response infeasible: " + br.message;
        return br;
    }
    const auto& plus = br.strategy.row(Regime::expansion);
    const auto& minus = br.strategy.row(Regime::contraction);
    bool ordered = true;
    if (cc.y_l.finite() && plus.x_l.finite()) ordered = ordered && plus.x_l.value() < cc.y_l.value();
    if (cc.y_h.finite() && minus.x_h.finite()) ordered = ordered && minus.x_h.value() > cc.y_h.value();
    br.diagnostics.push_back(fmt::format("ordering x_l+ < y_l < y_h < x_h-: {}", ordered ? "holds" : "violated"));
    if (!ordered && opt.enforce_ordering) {
        br.ok = false;
        br.message = "non-preemptive response infeasible: ordering violated";
    }
    return br;
}

ProducerBR preemptive_br(const ModelParams& p, const ConsumerStrategy& cc, Regime regime, const ProducerOptions& opt) {
    std::array<RegimePlan, 2> plan{two_sided(), two_sided()};
    ProducerKind kind = regime == Regime::expansion ? ProducerKind::preemptive_plus : ProducerKind::preemptive_minus;
    ProducerBR fail;
    fail.kind = kind;
    if (regime == Regime::expansion) {
        if (!cc.y_h.finite()) {
            fail.message = "preemption needs a finite y_h";
            return fail;
        }
        plan[0].upper = {Edge::pinned, cc.y_h.value()};
        if (cc.y_l.finite()) plan[1].lower = {Edge::consumer_switch, cc.y_l.value()};
    } else {
        if (!cc.y_l.finite()) {
            fail.message = "preemption needs a finite y_l";
            return fail;
        }
        plan[1].lower = {Edge::pinned, cc.y_l.value()};
        if (cc.y_h.finite()) plan[0].upper = {Edge::consumer_switch, cc.y_h.value()};
    }
    auto seed = opt.seed;
    if (!seed) {
        auto mono = monopoly(p);
        if (mono.ok) seed = mono.strategy;
    }
    auto br = run(kind, p, plan, kind == ProducerKind::preemptive_plus ? "producer preemptive_plus"
                                                                        : "producer preemptive_minus",
                  seed);
    if (!br.ok) br.message = "no preemptive response: " + br.message;
    return br;
}

ProducerBR producer_best_response(const ModelParams& p, const ConsumerStrategy& cc, const ProducerOptions& opt) {
    if (!cc.y_l.finite() && !cc.y_h.finite()) {
        auto br = monopoly(p, opt);
        br.diagnostics.push_back("consumer never switches; monopoly rows");
        return br;
    }
    std::vector<ProducerBR> pre;
    std::vector<std::string> notes;
    std::optional<ProducerBR> non;
    if (opt.allow_non_preemptive) {
        auto br = nonpreemptive_br(p, cc, opt);
        if (br.ok)
            non = std::move(br);
        else
            notes.push_back(br.message);
    }
    auto try_pre = [&](Regime r) {
        auto br = preemptive_br(p, cc, r, opt);
        if (br.ok)
            pre.push_back(std::move(br));
        else
            notes.push_back(fmt::format("{}: {}", name(br.kind), br.message));
    };
    if (opt.allow_preemptive_plus && cc.y_h.finite()) try_pre(Regime::expansion);
    if (opt.allow_preemptive_minus && cc.y_l.finite()) try_pre(Regime::contraction);
    if (opt.allow_non_preemptive) {
        // monopoly rows are exact when they keep the price away from both consumer triggers
        auto mono = monopoly(p, opt);
        const auto& up = mono.strategy.row(Regime::expansion);
        const auto& down = mono.strategy.row(Regime::contraction);
        const bool clear = mono.ok && up.has_upper() && down.has_lower() &&
                           (!cc.y_h.finite() || up.x_h.value() < cc.y_h.value()) &&
                           (!cc.y_l.finite() || down.x_l.value() > cc.y_l.value());
        if (clear) pre.push_back(std::move(mono));
    }

    std::vector<const ProducerBR*> all;
    if (non) all.push_back(&*non);
    for (const auto& b : pre) all.push_back(&b);
    if (all.empty()) {
        ProducerBR br;
        br.ok = false;
        br.message = "no producer candidate could be solved";
        br.diagnostics = notes;
        return br;
    }

    double lo = INFINITY, hi = -INFINITY;
    for (const auto* b : all)
        for (Regime r : kRegimes)
            for (const auto& t : {b->strategy.row(r).x_l, b->strategy.row(r).x_h})
                if (t.finite()) {
                    lo = std::min(lo, t.value());
                    hi = std::max(hi, t.value());
                }
    if (!(lo < hi)) {
        auto prod = build_profits(p).first;
        lo = prod.x1;
        hi = prod.x2;
    }
    const int m = std::max(2, opt.grid_points);
    auto grid_values = [&](const ProducerBR& b) {
        std::vector<double> v;
        for (Regime r : kRegimes)
            for (int k = 0; k < m; ++k) v.push_back(b.values.eval(r, lo + (hi - lo) * k / (m - 1)));
        return v;
    };
    std::vector<std::vector<double>> vals;
    double scale = 1.0;
    for (const auto* b : all) {
        vals.push_back(grid_values(*b));
        for (double v : vals.back()) scale = std::max(scale, std::abs(v));
    }
    const double tol = 1e-9 * scale;
    auto dominates = [&](size_t a, size_t b) {
        bool strict = false;
        for (size_t k = 0; k < vals[a].size(); ++k) {
            if (vals[a][k] < vals[b][k] - tol) return false;
            if (vals[a][k] > vals[b][k] + tol) strict = true;
        }
        return strict;
    };

    size_t pick = 0;
    std::string why;
    if (non) {
        why = "non-preemptive is not dominated";
        for (size_t i = 1; i < all.size(); ++i)
            if (dominates(i, 0)) {
                pick = i;
                why = fmt::format("{} dominates non-preemptive on the grid", name(all[i]->kind));
                break;
            }
    } else {
        why = "non-preemptive infeasible";
        double best = -INFINITY;
        for (size_t i = 0; i < all.size(); ++i) {
            double mean = 0.0;
            for (double v : vals[i]) mean += v;
            if (mean > best) {
                best = mean;
                pick = i;
            }
        }
    }
    ProducerBR out = *all[pick];
    out.diagnostics.insert(out.diagnostics.end(), notes.begin(), notes.end());
    out.diagnostics.push_back(fmt::format("selected {}: {}", name(out.kind), why));
    return out;
}

}  // namespace cpgame
