#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cpgame/dynamics.hpp"

using namespace cpgame;

namespace {

const EquilibriumResult& type1() {
    static const auto e = solve_equilibrium(table2_params(), Branch::generic);
    return e;
}

const EquilibriumResult& type3() {
    static const auto e = solve_equilibrium(table2_params(), Branch::preemptive_plus);
    return e;
}

/// Strategies symmetric about 3 under x -> 6 - x with the regimes exchanged.
StrategyPair mirrored_pair() {
    StrategyPair s;
    s.producer.row(Regime::expansion) = {Threshold::at(2.0), Threshold::at(3.6), Threshold::none(), Threshold::plus_inf()};
    s.producer.row(Regime::contraction) = {Threshold::minus_inf(), Threshold::none(), Threshold::at(2.4),
                                           Threshold::at(4.0)};
    s.consumer = {Threshold::at(2.2), Threshold::at(3.8)};
    return s;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("hitting probabilities") {
    CHECK(hitting_prob(2.0, 2.0, 4.4, 0.1, 0.25) == 1.0);
    CHECK(hitting_prob(4.4, 2.0, 4.4, 0.1, 0.25) == 0.0);
    CHECK(hitting_prob(3.0, 2.0, 4.0, 0.0, 0.25) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(hitting_prob(3.0, 2.0, 4.4, 0.1, 0.25) == doctest::Approx(0.040).epsilon(0.01));
    CHECK(hitting_prob(3.0, 2.0, 4.0, 1e-12, 0.25) == doctest::Approx(0.5).epsilon(1e-9));
    SUBCASE("steep drifts stay finite and monotone") {
        double prev = 1.0;
        for (double x = 0.5; x < 10.0; x += 0.5) {
            const double h = hitting_prob(x, 0.0, 10.0, -50.0, 0.1);
            CHECK(std::isfinite(h));
            CHECK(h <= prev);
            prev = h;
        }
        CHECK(hitting_prob(5.0, 0.0, 10.0, 50.0, 0.1) == doctest::Approx(0.0));
        CHECK(hitting_prob(5.0, 0.0, 10.0, -50.0, 0.1) == doctest::Approx(1.0));
    }
    SUBCASE("one infinite barrier") {
        CHECK(hitting_prob(3.0, 2.0, INFINITY, -0.1, 0.25) == doctest::Approx(1.0));
        CHECK(hitting_prob(3.0, 2.0, INFINITY, 0.1, 0.25) < 1.0);
    }
}

TEST_CASE("expected exit times") {
    CHECK(expected_exit_time(2.0, 2.0, 4.0, 0.1, 0.25) == 0.0);
    CHECK(expected_exit_time(4.0, 2.0, 4.0, 0.1, 0.25) == 0.0);
    CHECK(expected_exit_time(3.0, 2.0, 4.0, 0.0, 0.25) == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(expected_exit_time(3.0, 2.0, 4.0, 1e-10, 0.25) == doctest::Approx(16.0).epsilon(1e-8));
    CHECK(expected_exit_time(3.0, 2.0, INFINITY, -0.1, 0.25) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(std::isinf(expected_exit_time(3.0, 2.0, INFINITY, 0.1, 0.25)));
}

TEST_CASE("occupation integral of one is the exit time") {
    for (double mu : {-0.1, 0.0, 0.1})
        for (double x : {2.2, 3.0, 4.1}) {
            const double t = expected_exit_time(x, 2.0, 4.4, mu, 0.25);
            CHECK(occupation_integral([](double) { return 1.0; }, x, 2.0, 4.4, mu, 0.25) ==
                  doctest::Approx(t).epsilon(1e-9));
            CHECK(green_density(x, 3.3, 2.0, 4.4, mu, 0.25) >= 0.0);
        }
}

TEST_CASE("deterministic drift reaches the consumer trigger on schedule") {
    ModelParams p = table2_params();
    p.sigma = 0.0;
    const auto& s = type1().strategies;
    const double yh = s.consumer.y_h.value();
    SimOptions opt;
    opt.dt = 1e-3;
    const auto rec = simulate_path(p, s, 3.0, Regime::expansion, 20.0, 1, opt);
    REQUIRE(rec.events.size() == 1);
    CHECK(rec.events[0].kind == EventKind::switch_to_minus);
    CHECK(rec.events[0].t == doctest::Approx((yh - 3.0) / p.mu_plus).epsilon(1e-3));
    CHECK(rec.events[0].pre == rec.events[0].post);
}

TEST_CASE("Type I paths stay in the band and alternate regimes") {
    const auto& e = type1();
    const auto& s = e.strategies;
    SimOptions opt;
    opt.dt = 0.01;
    opt.bridge = true;
    const auto rec = simulate_path(e, 3.0, Regime::expansion, 3000.0, 42, opt);
    const double lo = s.producer.row(Regime::expansion).x_l.value();
    const double hi = s.producer.row(Regime::contraction).x_h.value();
    for (double x : rec.x) {
        CHECK(x >= lo - 1e-12);
        CHECK(x <= hi + 1e-12);
    }
    int switches = 0;
    EventKind last = EventKind::switch_to_plus;
    for (const auto& ev : rec.events) {
        if (ev.kind == EventKind::impulse_down) {
            CHECK(ev.post == s.producer.row(ev.regime).x_h_star.value());
            CHECK(ev.pre == s.producer.row(ev.regime).x_h.value());
        }
        if (ev.kind == EventKind::impulse_up) CHECK(ev.post == s.producer.row(ev.regime).x_l_star.value());
        if (ev.kind == EventKind::switch_to_minus || ev.kind == EventKind::switch_to_plus) {
            CHECK(ev.kind != last);
            CHECK(ev.pre == ev.post);
            last = ev.kind;
            ++switches;
        }
    }
    CHECK(switches > 10);
}

TEST_CASE("Type III paths never leave expansion") {
    const auto& e = type3();
    SimOptions opt;
    opt.dt = 0.01;
    opt.bridge = true;
    const auto rec = simulate_path(e, 3.0, Regime::expansion, 2000.0, 3, opt);
    for (auto r : rec.regime) CHECK(r == Regime::expansion);
    const auto& row = e.strategies.producer.row(Regime::expansion);
    for (double x : rec.x) {
        CHECK(x >= row.x_l.value() - 1e-12);
        CHECK(x <= row.x_h.value() + 1e-12);
    }
    for (const auto& ev : rec.events) CHECK((ev.kind == EventKind::impulse_up || ev.kind == EventKind::impulse_down));
}

TEST_CASE("Type III keeps expansion across volatilities") {
    for (double sigma : {0.25, 0.3, 0.35, 0.4}) {
        ModelParams p = table2_params();
        p.sigma = sigma;
        const auto e = solve_equilibrium(p, Branch::preemptive_plus);
        REQUIRE(e.type == EquilibriumType::III_plus);
        CHECK(e.strategies.consumer.y_h == e.strategies.producer.row(Regime::expansion).x_h);
        const auto st = exact_long_run_stats(e);
        CHECK(st.rho_plus == 1.0);
        CHECK(st.switches_per_year == 0.0);
    }
}

TEST_CASE("jump chain of the Type I equilibrium") {
    const auto& e = type1();
    const auto c = build_jump_chain(e);
    for (auto st : kChainStates) {
        const auto& row = c.P[index(st)];
        CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(c.stationarity_residual < 1e-10);
    CHECK(std::accumulate(c.pi.begin(), c.pi.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.pi[index(ChainState::I_h_plus)] == 0.0);
    CHECK(c.pi[index(ChainState::I_l_minus)] == 0.0);
    const auto& s = e.strategies;
    const double yl = s.consumer.y_l.value(), yh = s.consumer.y_h.value();
    const double xl = s.producer.row(Regime::expansion).x_l.value();
    CHECK(c.P[index(ChainState::S_plus)][index(ChainState::S_minus)] ==
          doctest::Approx(1.0 - hitting_prob(yl, xl, yh, e.params.mu_plus, e.params.sigma)).epsilon(1e-12));
}

TEST_CASE("regime occupation") {
    auto [rp, rm] = regime_occupation(build_jump_chain(table2_params(), mirrored_pair()));
    CHECK(rp == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rp + rm == doctest::Approx(1.0));
    auto [r3, m3] = regime_occupation(build_jump_chain(type3()));
    CHECK(r3 == 1.0);
    CHECK(m3 == 0.0);
}

TEST_CASE("expected time to the first switch") {
    const auto& e = type1();
    const double yh = e.strategies.consumer.y_h.value();
    CHECK(expected_switch_time(e, yh).first_step == doctest::Approx(0.0));
    const auto t = expected_switch_time(e, 3.0);
    CHECK(t.first_step > 0.0);
    CHECK(t.corrected == doctest::Approx(t.first_step).epsilon(1e-10));
    CHECK(std::isnan(t.literal));
    double prev = INFINITY;
    for (double sigma : {0.25, 0.3, 0.4}) {
        ModelParams p = e.params;
        p.sigma = sigma;
        const double v = expected_switch_time(p, e.strategies, 3.0).first_step;
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("exact density integrates to one and its moments match the exact statistics") {
    const auto& e = type1();
    const auto bands = effective_bands(e.strategies);
    const double lo = std::min(bands[0].first, bands[1].first), hi = std::max(bands[0].second, bands[1].second);
    std::vector<double> xs;
    const int n = 4000;
    for (int i = 0; i <= n; ++i) xs.push_back(lo + (hi - lo) * i / n);
    const auto d = exact_density(e.params, e.strategies, xs);
    double mass = 0, plus = 0, mean = 0;
    for (int i = 0; i < n; ++i) {
        const double w = (xs[i + 1] - xs[i]) / 2;
        mass += w * (d[0][i] + d[0][i + 1]);
        plus += w * (d[1][i] + d[1][i + 1]);
        mean += w * (xs[i] * d[0][i] + xs[i + 1] * d[0][i + 1]);
    }
    const auto st = exact_long_run_stats(e);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(plus == doctest::Approx(st.rho_plus).epsilon(1e-5));
    CHECK(mean == doctest::Approx(st.mean).epsilon(1e-5));
}

TEST_CASE("simulated statistics agree with the exact ones") {
    const auto& e = type1();
    SimConfig cfg;
    cfg.paths = 4;
    cfg.horizon = 25000;
    cfg.dt = 0.01;
    cfg.bridge = true;
    cfg.seed = 11;
    const auto sim = long_run_stats(e, cfg);
    const auto ex = exact_long_run_stats(e);
    CHECK(std::abs(sim.mean - ex.mean) < 0.03);
    CHECK(std::abs(sim.var - ex.var) < 0.03);
    CHECK(std::abs(sim.e_pi_c - ex.e_pi_c) < 0.03);
    CHECK(std::abs(sim.rho_plus - ex.rho_plus) < 0.02);
    CHECK(sim.apoo_p == doctest::Approx(sim.e_pi_p / 1.0));
    CHECK(sim.apoo_c == doctest::Approx(sim.e_pi_c / 3.0));
}

TEST_CASE("simulation is independent of the worker count") {
    const auto& e = type1();
    SimConfig cfg;
    cfg.paths = 6;
    cfg.horizon = 700;
    cfg.dt = 0.01;
    cfg.seed = 5;
    cfg.threads = 1;
    const auto a = simulate_long_run(e, cfg);
    cfg.threads = 4;
    const auto b = simulate_long_run(e, cfg);
    CHECK(a.stats.mean == b.stats.mean);
    CHECK(a.stats.var == b.stats.var);
    CHECK(a.stats.switches_per_year == b.stats.switches_per_year);
    CHECK(a.density.mass == b.density.mass);
    CHECK(path_seed(5, 0) != path_seed(5, 1));
    CHECK(path_seed(5, 0) != path_seed(6, 0));
}

TEST_CASE("non-ergodic strategies are rejected") {
    SimConfig cfg;
    cfg.horizon = 1000;
    CHECK_THROWS_AS(simulate_long_run(table2_params(), StrategyPair{}, cfg), ModelError);
}

}
