#include <doctest.h>

#include <cmath>
#include <limits>

#include "cpgame/consumer_br.hpp"
#include "cpgame/producer_br.hpp"

using namespace cpgame;

namespace {

ProducerStrategy fig2_rows() {
    ProducerStrategy s;
    s.row(Regime::contraction) = {Threshold::at(1.2), Threshold::at(2.5), Threshold::at(2.6), Threshold::at(4.2)};
    s.row(Regime::expansion) = {Threshold::at(1.5), Threshold::at(3.0), Threshold::at(2.8), Threshold::at(4.5)};
    return s;
}

ProducerStrategy type1_rows() {
    ProducerStrategy s;
    s.row(Regime::expansion) = {Threshold::at(2.0), Threshold::at(3.6), Threshold::none(), Threshold::plus_inf()};
    s.row(Regime::contraction) = {Threshold::minus_inf(), Threshold::none(), Threshold::at(4.5), Threshold::at(6.1)};
    return s;
}

}  // namespace

TEST_SUITE("piecewise_value") {

TEST_CASE("threshold text round-trips bit-exactly") {
    for (double v : {0.1, 1.0 / 3.0, 4.3879384382666382, -2.5e-300, 6.0739261803431965}) {
        const auto t = Threshold::at(v);
        CHECK(Threshold::parse(t.str()) == t);
        CHECK(Threshold::parse(t.str()).value() == v);
    }
    CHECK(Threshold::parse("+inf") == Threshold::plus_inf());
    CHECK(Threshold::parse("-inf") == Threshold::minus_inf());
    CHECK(Threshold::parse("-") == Threshold::none());
    CHECK(std::isnan(Threshold::none().as_double()));
    CHECK(Threshold::plus_inf().as_double() == std::numeric_limits<double>::infinity());
    CHECK_THROWS(Threshold::none().value());
    CHECK_THROWS(Threshold::parse("4.3x"));
}

TEST_CASE("natural ordering is enforced") {
    StrategyPair s;
    s.producer = type1_rows();
    s.consumer = {Threshold::at(2.2), Threshold::at(4.4)};
    CHECK_NOTHROW(check_natural_ordering(s));
    s.producer.row(Regime::expansion).x_l_star = Threshold::at(1.9);
    CHECK_THROWS_AS(check_natural_ordering(s), ModelError);
    s.producer = type1_rows();
    s.consumer = {Threshold::at(4.4), Threshold::at(2.2)};
    CHECK_THROWS_AS(check_natural_ordering(s), ModelError);
}

TEST_CASE("analytic piece without exponentials is the particular quadratic") {
    const ModelParams p = table2_params();
    const auto cons = build_profits(p).second;
    PiecewiseValue v;
    for (Regime r : kRegimes) v.regime(r) = analytic_piece(fundamentals(cons, r, p), 0.0, 6.0);
    for (Regime r : kRegimes) {
        const auto q = particular_solution(cons, p.mu(r), p);
        for (double x : {0.5, 2.0, 3.3, 5.9}) {
            CHECK(v.eval(r, x) == doctest::Approx(q[2] + x * (q[1] + x * q[0])).epsilon(1e-13));
            CHECK(std::abs(v.ode_residual(r, x, cons, p)) < 1e-9);
        }
    }
    SUBCASE("homogeneous terms keep the residual at zero") {
        v.set_coefficients({0.7, -1.3, 2.1, 0.4});
        for (Regime r : kRegimes)
            for (double x : {0.5, 2.0, 3.3, 5.9}) CHECK(std::abs(v.ode_residual(r, x, cons, p)) < 1e-9);
    }
    SUBCASE("a perturbed quadratic is detected") {
        v.regime(Regime::expansion).q[0] += 1e-3;
        const double x = 3.0;
        const double expected = -p.beta * 1e-3 * x * x + p.mu_plus * 2e-3 * x + p.sigma * p.sigma * 1e-3;
        CHECK(v.ode_residual(Regime::expansion, x, cons, p) == doctest::Approx(expected).epsilon(1e-6));
    }
    CHECK_THROWS_AS(v.ode_residual(Regime::expansion, 7.0, cons, p), std::invalid_argument);
}

TEST_CASE("no-switch values meet their boundary conditions and are pegged outside the band") {
    const ModelParams p = table2_params();
    const auto cp = fig2_rows();
    for (Regime r : kRegimes) {
        const auto v = no_switch_value(p, cp, r);
        const auto& row = cp.row(r);
        CHECK(std::abs(v.eval(r, row.x_l.value()) - v.eval(r, row.x_l_star.value())) < 1e-7);
        CHECK(std::abs(v.eval(r, row.x_h.value()) - v.eval(r, row.x_h_star.value())) < 1e-7);
        for (double d : {0.1, 0.7}) {
            CHECK(v.deriv(r, row.x_l.value() - d) == 0.0);
            CHECK(v.deriv(r, row.x_h.value() + d) == 0.0);
            CHECK(v.eval(r, row.x_h.value() + d) == doctest::Approx(v.eval(r, row.x_h_star.value())));
        }
    }
}

TEST_CASE("derivatives agree with centred differences on solved values") {
    const ModelParams p = table2_params();
    const auto br = double_switch_br(p, type1_rows());
    REQUIRE(br.ok);
    const auto mono = monopoly(p);
    REQUIRE(mono.ok);
    const double h = 1e-5;
    for (const auto* v : {&br.values, &mono.values})
        for (Regime r : kRegimes) {
            const auto& piece = v->regime(r);
            for (int i = 1; i < 10; ++i) {
                const double lo = std::max(piece.lo, 0.0), hi = std::min(piece.hi, 7.0);
                const double x = lo + (hi - lo) * i / 10.0;
                const double fd1 = (v->eval(r, x + h) - v->eval(r, x - h)) / (2 * h);
                const double fd2 = (v->deriv(r, x + h) - v->deriv(r, x - h)) / (2 * h);
                CHECK(fd1 == doctest::Approx(v->deriv(r, x)).epsilon(1e-5).scale(1.0));
                CHECK(fd2 == doctest::Approx(v->deriv2(r, x)).epsilon(1e-5).scale(1.0));
            }
        }
}

TEST_CASE("json round-trips values and strategies") {
    const ModelParams p = table2_params();
    const auto br = double_switch_br(p, type1_rows());
    REQUIRE(br.ok);
    const auto back = value_from_json(to_json(br.values));
    for (Regime r : kRegimes)
        for (double x : {1.0, 2.5, 4.0, 6.5}) CHECK(back.eval(r, x) == br.values.eval(r, x));
    CHECK(back.provenance == br.values.provenance);

    StrategyPair s;
    s.producer = type1_rows();
    s.consumer = br.strategy;
    const auto t = strategy_from_json(to_json(s));
    for (Regime r : kRegimes)
        for (int k = 0; k < 4; ++k) CHECK(t.producer.row(r).entries()[k] == s.producer.row(r).entries()[k]);
    CHECK(t.consumer.y_l == s.consumer.y_l);
    CHECK(t.consumer.y_h == s.consumer.y_h);
}

}
