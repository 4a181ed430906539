#include <doctest.h>

#include <cmath>

#include "cpgame/equilibrium.hpp"

using namespace cpgame;

namespace {

const EquilibriumResult& solved(Branch b) {
    static const auto generic = solve_equilibrium(table2_params(), Branch::generic);
    static const auto transitory = solve_equilibrium(table2_params(), Branch::transitory_minus);
    static const auto preemptive = solve_equilibrium(table2_params(), Branch::preemptive_plus);
    switch (b) {
        case Branch::transitory_minus: return transitory;
        case Branch::preemptive_plus: return preemptive;
        default: return generic;
    }
}

void check_near(const Threshold& t, double v, double tol = 0.05) {
    if (std::isinf(v)) {
        CHECK(t.as_double() == v);
        return;
    }
    REQUIRE(t.finite());
    CHECK(std::abs(t.value() - v) < tol);
}

}  // namespace

TEST_SUITE("equilibrium") {

TEST_CASE("generic branch reaches the Type I fixed point and verifies") {
    const auto& e = solved(Branch::generic);
    REQUIRE(e.converged);
    CHECK(e.type == EquilibriumType::I);
    const auto& s = e.strategies;
    check_near(s.producer.row(Regime::expansion).x_l, 2.0);
    check_near(s.producer.row(Regime::expansion).x_l_star, 3.6);
    check_near(s.producer.row(Regime::expansion).x_h, INFINITY);
    check_near(s.producer.row(Regime::contraction).x_l, -INFINITY);
    check_near(s.producer.row(Regime::contraction).x_h_star, 4.5);
    check_near(s.producer.row(Regime::contraction).x_h, 6.1);
    check_near(s.consumer.y_l, 2.2);
    check_near(s.consumer.y_h, 4.4);
    const auto d = verify(e);
    for (const auto& item : d.items) CHECK_MESSAGE(item.pass, item.name, ": ", item.detail);
    CHECK(d.find("ode_residual")->value < 1e-8);
    CHECK(d.find("value_matching")->value < 1e-7);
    CHECK(d.find("smooth_pasting")->value < 1e-7);
}

TEST_CASE("Type II and Type III branches") {
    const auto& t2 = solved(Branch::transitory_minus);
    REQUIRE(t2.converged);
    CHECK(t2.type == EquilibriumType::II_to_minus);
    check_near(t2.strategies.consumer.y_l, -INFINITY);
    check_near(t2.strategies.consumer.y_h, 4.3);
    CHECK(verify(t2).all_pass());

    const auto& t3 = solved(Branch::preemptive_plus);
    REQUIRE(t3.converged);
    CHECK(t3.type == EquilibriumType::III_plus);
    const auto& row = t3.strategies.producer.row(Regime::expansion);
    check_near(row.x_l, 1.7);
    check_near(row.x_l_star, 3.1);
    check_near(row.x_h, 4.3);
    CHECK(row.x_h.value() == doctest::Approx(t3.strategies.consumer.y_h.value()).epsilon(1e-9));
    CHECK_FALSE(t3.reachable[index(Regime::contraction)]);
    const auto d = verify(t3);
    CHECK(d.all_pass());
    CHECK(d.find("second_order")->pass);
    const auto shown = reported_strategies(t3);
    CHECK(shown.producer.row(Regime::contraction).x_l.absent());
}

TEST_CASE("classification of threshold patterns") {
    CHECK(classify(solved(Branch::generic)) == EquilibriumType::I);
    CHECK(classify(solved(Branch::transitory_minus).strategies) == EquilibriumType::II_to_minus);
    CHECK(classify(solved(Branch::preemptive_plus).strategies) == EquilibriumType::III_plus);
    StrategyPair none;
    CHECK(classify(none) == EquilibriumType::unclassified);
}

TEST_CASE("a fixed point seed converges at once") {
    const auto& e = solved(Branch::generic);
    const auto again = tatonnement(e.params, e.strategies, Mode::async, Branch::generic);
    REQUIRE(again.converged);
    CHECK(again.iterations <= 1);
    CHECK(strategy_distance(again.strategies, e.strategies) < 1e-9);
}

TEST_CASE("sync iteration") {
    const ModelParams p = table2_params();
    SUBCASE("from the default seed it cycles with period two") {
        const auto e = solve_equilibrium(p, Branch::generic, Mode::sync);
        CHECK_FALSE(e.converged);
        CHECK(e.cycle.has_value());
    }
    SUBCASE("from a staggered seed it meets the async fixed point") {
        StrategyPair seed = default_seed(p);
        seed.producer = producer_step(p, seed.consumer, Branch::generic).strategy;
        const auto e = tatonnement(p, seed, Mode::sync, Branch::generic);
        REQUIRE(e.converged);
        CHECK(strategy_distance(e.strategies, solved(Branch::generic).strategies) < 1e-5);
    }
}

TEST_CASE("a corrupted strategy fails the named ordering check") {
    auto e = solved(Branch::generic);
    auto& row = e.strategies.producer.row(Regime::expansion);
    row.x_l = Threshold::at(e.strategies.consumer.y_l.value() + 0.1);
    const auto d = verify(e);
    CHECK_FALSE(d.all_pass());
    REQUIRE(d.find("ordering") != nullptr);
    CHECK_FALSE(d.find("ordering")->pass);
}

TEST_CASE("value dominance across the three equilibria") {
    const auto& e1 = solved(Branch::generic);
    const auto& e2 = solved(Branch::transitory_minus);
    const auto& e3 = solved(Branch::preemptive_plus);
    for (int i = 0; i <= 400; ++i) {
        const double x = 1.0 + 6.0 * i / 400.0;
        for (Regime r : kRegimes) {
            CHECK(e1.producer_values.eval(r, x) >= e2.producer_values.eval(r, x) - 1e-9);
            CHECK(e1.producer_values.eval(r, x) >= e3.producer_values.eval(r, x) - 1e-9);
        }
        CHECK(e3.consumer_values.eval(Regime::expansion, x) >= e1.consumer_values.eval(Regime::expansion, x) - 1e-9);
        CHECK(e3.consumer_values.eval(Regime::expansion, x) >= e2.consumer_values.eval(Regime::expansion, x) - 1e-9);
    }
}

TEST_CASE("branch and mode names parse") {
    CHECK(parse_branch("transitory-minus") == Branch::transitory_minus);
    CHECK(parse_branch("preemptive-plus") == Branch::preemptive_plus);
    CHECK(parse_mode("sync") == Mode::sync);
    CHECK_THROWS_AS(parse_branch("type-iv"), std::invalid_argument);
}

}
