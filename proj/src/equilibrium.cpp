#include "cpgame/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace cpgame {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_preemptive(Branch b) { return b == Branch::preemptive_plus || b == Branch::preemptive_minus; }

/// Producer row the consumer plans against in a preemptive branch: the pinned impulse is removed.
ProducerStrategy hide_pinned(const ProducerStrategy& cp, Branch b) {
    ProducerStrategy out = cp;
    if (b == Branch::preemptive_plus) {
        auto& row = out.row(Regime::expansion);
        if (!row.x_h.absent()) {
            row.x_h = Threshold::plus_inf();
            row.x_h_star = Threshold::none();
        }
    } else if (b == Branch::preemptive_minus) {
        auto& row = out.row(Regime::contraction);
        if (!row.x_l.absent()) {
            row.x_l = Threshold::minus_inf();
            row.x_l_star = Threshold::none();
        }
    }
    return out;
}

double threshold_distance(const Threshold& a, const Threshold& b) {
    if (a.finite() != b.finite()) return kInf;
    if (!a.finite()) return a == b ? 0.0 : kInf;
    return std::abs(a.value() - b.value());
}

std::vector<double> finite_levels(const StrategyPair& s) {
    std::vector<double> out;
    for (Regime r : kRegimes)
        for (const auto& t : s.producer.row(r).entries())
            if (t.finite()) out.push_back(t.value());
    if (s.consumer.y_l.finite()) out.push_back(s.consumer.y_l.value());
    if (s.consumer.y_h.finite()) out.push_back(s.consumer.y_h.value());
    return out;
}

std::string dump(const StrategyPair& s) {
    std::string out;
    for (Regime r : kRegimes) {
        auto e = s.producer.row(r).entries();
        out += fmt::format("C_p{}=[{}, {}, {}, {}] ", r == Regime::expansion ? "+" : "-", e[0].str(), e[1].str(),
                           e[2].str(), e[3].str());
    }
    out += fmt::format("C_c=[{}, {}]", s.consumer.y_l.str(), s.consumer.y_h.str());
    return out;
}

}  // namespace

const char* name(Branch b) {
    switch (b) {
        case Branch::generic: return "generic";
        case Branch::transitory_plus: return "transitory-plus";
        case Branch::transitory_minus: return "transitory-minus";
        case Branch::preemptive_plus: return "preemptive-plus";
        case Branch::preemptive_minus: return "preemptive-minus";
    }
    return "?";
}

const char* name(EquilibriumType t) {
    switch (t) {
        case EquilibriumType::I: return "I";
        case EquilibriumType::II_to_plus: return "II_to_plus";
        case EquilibriumType::II_to_minus: return "II_to_minus";
        case EquilibriumType::III_plus: return "III_plus";
        case EquilibriumType::III_minus: return "III_minus";
        case EquilibriumType::unclassified: return "unclassified";
    }
    return "?";
}

const char* name(Mode m) { return m == Mode::sync ? "sync" : "async"; }

Branch parse_branch(const std::string& s) {
    for (Branch b : {Branch::generic, Branch::transitory_plus, Branch::transitory_minus, Branch::preemptive_plus,
                     Branch::preemptive_minus})
        if (s == name(b)) return b;
    throw std::invalid_argument("unknown branch '" + s + "'");
}

Mode parse_mode(const std::string& s) {
    if (s == "sync") return Mode::sync;
    if (s == "async") return Mode::async;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

bool Diagnostics::all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const CheckItem& c) { return c.pass; });
}

const CheckItem* Diagnostics::find(const std::string& n) const {
    for (const auto& c : items)
        if (c.name == n) return &c;
    return nullptr;
}

StrategyPair default_seed(const ModelParams& p) {
    StrategyPair s;
    auto mono = monopoly(p);
    if (!mono.ok) throw ModelError("monopoly seed failed: " + mono.message);
    auto alone = consumer_alone(p);
    if (!alone.ok) throw ModelError("consumer-alone seed failed: " + alone.message);
    s.producer = mono.strategy;
    s.consumer = alone.strategy;
    return s;
}

ConsumerBR consumer_step(const ModelParams& p, const ProducerStrategy& cp, Branch b,
                         const std::optional<ConsumerStrategy>& warm) {
    ConsumerOptions opt;
    if (warm) {
        if (warm->y_l.finite()) opt.seed_y_l = warm->y_l.value();
        if (warm->y_h.finite()) opt.seed_y_h = warm->y_h.value();
    }
    switch (b) {
        case Branch::generic: return consumer_best_response(p, cp, opt);
        case Branch::transitory_plus: return single_switch_br(p, cp, Regime::expansion, opt);
        case Branch::transitory_minus: return single_switch_br(p, cp, Regime::contraction, opt);
        case Branch::preemptive_plus: return single_switch_br(p, hide_pinned(cp, b), Regime::contraction, opt);
        case Branch::preemptive_minus: return single_switch_br(p, hide_pinned(cp, b), Regime::expansion, opt);
    }
    return {};
}

ProducerBR producer_step(const ModelParams& p, const ConsumerStrategy& cc, Branch b,
                         const std::optional<ProducerStrategy>& warm) {
    ProducerOptions opt;
    opt.seed = warm;
    opt.enforce_ordering = false;
    switch (b) {
        case Branch::generic: return producer_best_response(p, cc, opt);
        case Branch::transitory_plus:
        case Branch::transitory_minus: return nonpreemptive_br(p, cc, opt);
        case Branch::preemptive_plus: return preemptive_br(p, cc, Regime::expansion, opt);
        case Branch::preemptive_minus: return preemptive_br(p, cc, Regime::contraction, opt);
    }
    return {};
}

double strategy_distance(const StrategyPair& a, const StrategyPair& b) {
    double d = 0.0;
    for (Regime r : kRegimes) {
        auto ea = a.producer.row(r).entries();
        auto eb = b.producer.row(r).entries();
        for (size_t k = 0; k < ea.size(); ++k) d = std::max(d, threshold_distance(ea[k], eb[k]));
    }
    d = std::max(d, threshold_distance(a.consumer.y_l, b.consumer.y_l));
    d = std::max(d, threshold_distance(a.consumer.y_h, b.consumer.y_h));
    return d;
}

EquilibriumResult tatonnement(const ModelParams& p, const StrategyPair& init, Mode mode, Branch branch, int max_iter,
                              double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    validate(p);
    EquilibriumResult res;
    res.params = p;
    res.branch = branch;
    res.mode = mode;
    res.strategies = init;
    StrategyPair cur = init;
    if (branch == Branch::transitory_minus || branch == Branch::preemptive_plus) cur.consumer.y_l = Threshold::minus_inf();
    if (branch == Branch::transitory_plus || branch == Branch::preemptive_minus) cur.consumer.y_h = Threshold::plus_inf();
    res.path.push_back(cur);
    for (int it = 1; it <= max_iter; ++it) {
        StrategyPair next;
        auto pbr = producer_step(p, cur.consumer, branch, cur.producer);
        if (!pbr.ok) {
            res.message = fmt::format("producer best response failed at iteration {}: {}", it, pbr.message);
            res.iterations = it;
            return res;
        }
        next.producer = pbr.strategy;
        const ProducerStrategy& facing = mode == Mode::async ? next.producer : cur.producer;
        auto cbr = consumer_step(p, facing, branch, cur.consumer);
        if (!cbr.ok) {
            res.message = fmt::format("consumer best response failed at iteration {}: {}", it, cbr.message);
            res.iterations = it;
            return res;
        }
        next.consumer = cbr.strategy;

        const double delta = strategy_distance(cur, next);
        res.history.push_back(delta);
        res.path.push_back(next);
        res.iterations = it;
        res.strategies = next;
        res.producer_kind = pbr.kind;
        res.consumer_kind = cbr.kind;
        res.producer_values = pbr.values;
        res.consumer_values = cbr.values;

        if (delta < tol) {
            res.converged = true;
            break;
        }
        if (res.path.size() >= 3) {
            const auto& two_back = res.path[res.path.size() - 3];
            if (strategy_distance(two_back, next) < tol) {
                res.cycle = std::make_pair(cur, next);
                res.message = fmt::format("period-2 cycle detected at iteration {}: {} <-> {}", it, dump(cur), dump(next));
                return res;
            }
        }
        cur = next;
    }
    if (!res.converged) {
        res.message = fmt::format("no convergence after {} iterations (last delta {:.3e})", res.iterations,
                                  res.history.empty() ? kInf : res.history.back());
        return res;
    }
    if (is_preemptive(branch)) {
        // the last consumer step can move the trigger by rounding; keep the shared level exact
        auto& sc = res.strategies.consumer;
        const auto& pinned = branch == Branch::preemptive_plus ? res.strategies.producer.row(Regime::expansion).x_h
                                                               : res.strategies.producer.row(Regime::contraction).x_l;
        Threshold& trigger = branch == Branch::preemptive_plus ? sc.y_h : sc.y_l;
        if (pinned.finite() && trigger.finite() && std::abs(pinned.value() - trigger.value()) < tol) trigger = pinned;
        // the producer moves first at the shared level, so the consumer never actually switches
        auto ns = no_switch_br(p, res.strategies.producer);
        if (ns.ok) res.consumer_values = ns.values;
    }
    res.type = classify(res.strategies);
    if (res.type == EquilibriumType::III_plus) res.reachable[index(Regime::contraction)] = false;
    if (res.type == EquilibriumType::III_minus) res.reachable[index(Regime::expansion)] = false;
    res.message = fmt::format("converged in {} iterations, type {}", res.iterations, name(res.type));
    return res;
}

StrategyPair reported_strategies(const EquilibriumResult& e) {
    StrategyPair s = e.strategies;
    if (!e.reachable[index(Regime::contraction)]) {
        s.producer.row(Regime::contraction) = ProducerRow::absent_row();
        s.consumer.y_l = Threshold::none();
    }
    if (!e.reachable[index(Regime::expansion)]) {
        s.producer.row(Regime::expansion) = ProducerRow::absent_row();
        s.consumer.y_h = Threshold::none();
    }
    return s;
}

EquilibriumResult solve_equilibrium(const ModelParams& p, Branch branch, Mode mode, int max_iter, double tol) {
    return tatonnement(p, default_seed(p), mode, branch, max_iter, tol);
}

EquilibriumType classify(const StrategyPair& s, double tol) {
    const auto& plus = s.producer.row(Regime::expansion);
    const auto& minus = s.producer.row(Regime::contraction);
    const auto& yl = s.consumer.y_l;
    const auto& yh = s.consumer.y_h;
    auto same = [&](const Threshold& a, const Threshold& b) {
        return a.finite() && b.finite() && std::abs(a.value() - b.value()) < tol;
    };
    const bool pre_plus = same(plus.x_h, yh);
    const bool pre_minus = same(minus.x_l, yl);
    if (yl.finite() && yh.finite()) {
        if (pre_plus) return EquilibriumType::III_plus;
        if (pre_minus) return EquilibriumType::III_minus;
        if (minus.x_h.finite() && plus.x_l.finite() && yl.value() <= minus.x_h.value() &&
            plus.x_l.value() <= yh.value())
            return EquilibriumType::I;
        return EquilibriumType::unclassified;
    }
    if (yh.finite()) return pre_plus ? EquilibriumType::III_plus : EquilibriumType::II_to_minus;
    if (yl.finite()) return pre_minus ? EquilibriumType::III_minus : EquilibriumType::II_to_plus;
    return EquilibriumType::unclassified;
}

EquilibriumType classify(const EquilibriumResult& e) { return classify(e.strategies); }

Diagnostics verify(const EquilibriumResult& e, int grid_points) {
    Diagnostics d;
    const ModelParams& p = e.params;
    const auto [prod, cons] = build_profits(p);
    const auto& s = e.strategies;

    auto levels = finite_levels(s);
    double lo = std::min(prod.x1, cons.x1), hi = std::max(prod.x2, cons.x2);
    for (double v : levels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const int m = std::max(3, grid_points);
    std::vector<double> grid(m);
    for (int k = 0; k < m; ++k) grid[k] = lo + (hi - lo) * k / (m - 1);

    struct Player {
        const char* tag;
        const PiecewiseValue* v;
        const QuadProfit* profit;
        bool producer;
    };
    const Player players[2] = {{"producer", &e.producer_values, &prod, true},
                               {"consumer", &e.consumer_values, &cons, false}};

    auto knots = [](const RegimeValue& rv) {
        std::vector<std::pair<double, const Extension*>> out;
        if (std::isfinite(rv.lo)) out.push_back({rv.lo, &rv.below});
        if (std::isfinite(rv.hi)) out.push_back({rv.hi, &rv.above});
        return out;
    };

    double ode = 0.0, c0 = 0.0, c1 = 0.0, foc = 0.0;
    double soc_worst = -kInf;
    bool soc_any = false;
    for (const auto& pl : players) {
        for (Regime r : kRegimes) {
            const auto& rv = pl.v->regime(r);
            if (!rv.present) continue;
            const double a = std::max(lo, rv.lo), b = std::min(hi, rv.hi);
            for (int k = 0; k <= 20 && a < b; ++k) {
                double x = a + (b - a) * k / 20.0;
                if (!pl.v->in_analytic(r, x)) continue;
                ode = std::max(ode, std::abs(pl.v->ode_residual(r, x, *pl.profit, p)));
            }
            for (auto [x, ext] : knots(rv)) {
                if (ext->kind == ExtensionKind::none) continue;
                const double l = pl.v->eval_side(r, x, Side::left), rr = pl.v->eval_side(r, x, Side::right);
                c0 = std::max(c0, std::abs(l - rr));
                if (ext->smooth) {
                    const double dl = pl.v->eval_side(r, x, Side::left, 1), dr = pl.v->eval_side(r, x, Side::right, 1);
                    c1 = std::max(c1, std::abs(dl - dr));
                }
                if (pl.producer && ext->kind == ExtensionKind::pegged) {
                    const double sign = ext == &rv.below ? 1.0 : -1.0;
                    foc = std::max(foc, std::abs(pl.v->deriv(r, ext->target) - sign * ext->cost1));
                    soc_worst = std::max(soc_worst, pl.v->deriv2(r, ext->target));
                    soc_any = true;
                }
            }
        }
    }
    d.items.push_back({"ode_residual", ode < 1e-8, ode, 1e-8, "max |L w + pi| on the continuation pieces"});
    d.items.push_back({"value_matching", c0 < 1e-7, c0, 1e-7, "max jump at a knot"});
    d.items.push_back({"smooth_pasting", c1 < 1e-7, c1, 1e-7, "max derivative jump at a smooth knot"});
    d.items.push_back({"first_order", foc < 1e-7, foc, 1e-7, "max |v'(target) -+ kappa1|"});
    d.items.push_back({"second_order", !soc_any || soc_worst < 0.0, soc_any ? soc_worst : 0.0, 0.0,
                       "max v'' at the impulse targets"});

    // orderings
    double ord = kInf;
    std::string ord_detail = "all orderings hold";
    auto need = [&](bool has, double a, double b, const std::string& what) {
        if (!has) return;
        const double margin = b - a;
        if (margin < ord) {
            ord = margin;
            ord_detail = what;
        }
    };
    for (Regime r : kRegimes) {
        if (!e.reachable[index(r)]) continue;
        const auto& row = s.producer.row(r);
        const char* sg = r == Regime::expansion ? "+" : "-";
        need(row.x_l.finite() && row.x_l_star.finite(), row.x_l.as_double(), row.x_l_star.as_double(),
             fmt::format("x_l{} < x_l{}*", sg, sg));
        need(row.x_h.finite() && row.x_h_star.finite(), row.x_h_star.as_double(), row.x_h.as_double(),
             fmt::format("x_h{}* < x_h{}", sg, sg));
        need(row.x_l.finite() && s.consumer.y_l.finite(), row.x_l.as_double(), s.consumer.y_l.as_double() + 1e-9,
             fmt::format("x_l{} <= y_l", sg));
        need(row.x_h.finite() && s.consumer.y_h.finite(), s.consumer.y_h.as_double(), row.x_h.as_double() + 1e-9,
             fmt::format("y_h <= x_h{}", sg));
    }
    need(s.consumer.y_l.finite() && s.consumer.y_h.finite(), s.consumer.y_l.as_double(), s.consumer.y_h.as_double(),
         "y_l < y_h");
    const bool ord_ok = !(ord <= 0.0);
    d.items.push_back({"ordering", ord_ok, std::isfinite(ord) ? ord : 0.0, 0.0,
                       ord_ok ? std::string("all orderings hold") : "violated: " + ord_detail});

    // obstacle slackness inside each continuation piece
    double vi_c = kInf, vi_p = kInf;
    for (Regime r : kRegimes) {
        if (!e.reachable[index(r)]) continue;
        const auto& wv = e.consumer_values;
        if (wv.regime(r).present && wv.regime(other(r)).present)
            for (double x : grid)
                if (wv.in_analytic(r, x))
                    vi_c = std::min(vi_c, wv.eval(r, x) - (wv.eval(other(r), x) - p.h(r)));
        const auto& vv = e.producer_values;
        if (!vv.regime(r).present) continue;
        std::vector<double> inside;
        for (double x : grid)
            if (vv.in_analytic(r, x)) inside.push_back(x);
        for (double x : inside) {
            double best = -kInf;
            for (double z : inside)
                if (z != x) best = std::max(best, vv.eval(r, z) - p.kappa0 - p.kappa1 * std::abs(z - x));
            if (std::isfinite(best)) vi_p = std::min(vi_p, vv.eval(r, x) - best);
        }
    }
    const double vi_tol = 1e-7;
    d.items.push_back({"consumer_obstacle", !(vi_c < -vi_tol), std::isfinite(vi_c) ? vi_c : 0.0, -vi_tol,
                       "min w_r - (w_other - h_r) where the consumer waits"});
    d.items.push_back({"producer_obstacle", !(vi_p < -vi_tol), std::isfinite(vi_p) ? vi_p : 0.0, -vi_tol,
                       "min v_r - M v_r where the producer waits"});

    // fixed point
    double fp = kInf;
    std::string fp_detail;
    try {
        auto pbr = producer_step(p, s.consumer, e.branch, s.producer);
        auto cbr = consumer_step(p, e.mode == Mode::async ? pbr.strategy : s.producer, e.branch, s.consumer);
        if (cbr.ok && pbr.ok) {
            fp = strategy_distance(s, StrategyPair{pbr.strategy, cbr.strategy});
            fp_detail = "one more best-response round";
        } else {
            fp_detail = "best response failed: " + (cbr.ok ? pbr.message : cbr.message);
        }
    } catch (const std::exception& ex) {
        fp_detail = ex.what();
    }
    d.items.push_back({"fixed_point", fp < 1e-6, std::isfinite(fp) ? fp : -1.0, 1e-6, fp_detail});

    const auto t = classify(s);
    d.items.push_back({"classified", t != EquilibriumType::unclassified, 0.0, 0.0,
                       t == EquilibriumType::unclassified ? "unclassified: " + dump(s) : std::string(name(t))});
    return d;
}

}  // namespace cpgame
