#include <doctest.h>

#include <cmath>

#include "cpgame/consumer_br.hpp"
#include "cpgame/producer_br.hpp"

using namespace cpgame;

namespace {

ProducerStrategy type1_rows() {
    ProducerStrategy s;
    s.row(Regime::expansion) = {Threshold::at(2.0), Threshold::at(3.6), Threshold::none(), Threshold::plus_inf()};
    s.row(Regime::contraction) = {Threshold::minus_inf(), Threshold::none(), Threshold::at(4.5), Threshold::at(6.1)};
    return s;
}

ProducerStrategy type2_rows() {
    ProducerStrategy s;
    s.row(Regime::expansion) = {Threshold::at(1.9656473856855583), Threshold::at(3.5889587592883263),
                                Threshold::none(), Threshold::plus_inf()};
    s.row(Regime::contraction) = {Threshold::at(2.4104696145346947), Threshold::at(4.5255062350305018),
                                  Threshold::at(4.5255062350305018), Threshold::at(6.0889766570557429)};
    return s;
}

/// Switching obstacle w_r(y) = w_other(y) - h at a finite consumer threshold.
double pasting_gap(const ConsumerBR& br, const ModelParams& p, Regime from, double y) {
    return br.values.eval(from, y) - (br.values.eval(other(from), y) - p.h(from));
}

}  // namespace

TEST_SUITE("consumer_br") {

TEST_CASE("double switch against the generic producer rows") {
    const ModelParams p = table2_params();
    const auto br = double_switch_br(p, type1_rows());
    REQUIRE(br.ok);
    CHECK(br.kind == ConsumerKind::double_switch);
    CHECK(std::abs(br.strategy.y_l.value() - 2.2) < 0.05);
    CHECK(std::abs(br.strategy.y_h.value() - 4.4) < 0.05);
    CHECK(br.residual < 1e-8);
    CHECK(std::abs(pasting_gap(br, p, Regime::expansion, br.strategy.y_h.value())) < 1e-7);
    CHECK(std::abs(pasting_gap(br, p, Regime::contraction, br.strategy.y_l.value())) < 1e-7);
}

TEST_CASE("best response to the generic producer rows is the double switch") {
    const auto br = consumer_best_response(table2_params(), type1_rows());
    REQUIRE(br.ok);
    CHECK(br.kind == ConsumerKind::double_switch);
    CHECK(std::abs(br.strategy.y_l.value() - 2.2) < 0.05);
    CHECK(std::abs(br.strategy.y_h.value() - 4.4) < 0.05);
}

TEST_CASE("consumer alone") {
    const ModelParams p = table2_params();
    const auto br = consumer_alone(p);
    REQUIRE(br.ok);
    CHECK(std::abs(br.strategy.y_l.value() - 1.7) < 0.05);
    CHECK(std::abs(br.strategy.y_h.value() - 4.3) < 0.05);
    CHECK(std::abs(pasting_gap(br, p, Regime::expansion, br.strategy.y_h.value())) < 1e-7);
    CHECK(std::abs(pasting_gap(br, p, Regime::contraction, br.strategy.y_l.value())) < 1e-7);
    SUBCASE("prohibitive switching cost leaves no interior root") {
        ModelParams q = p;
        q.h_plus = q.h_minus = 1e6;
        CHECK_FALSE(consumer_alone(q).ok);
    }
}

TEST_CASE("single switch into contraction") {
    const ModelParams p = table2_params();
    const auto br = single_switch_br(p, type2_rows(), Regime::contraction);
    REQUIRE(br.ok);
    CHECK(br.kind == ConsumerKind::single_switch_to_minus);
    CHECK_FALSE(br.strategy.y_l.finite());
    CHECK(std::abs(br.strategy.y_h.value() - 4.3) < 0.05);
    CHECK(std::abs(pasting_gap(br, p, Regime::expansion, br.strategy.y_h.value())) < 1e-7);
    SUBCASE("prohibitive switching cost") {
        ModelParams q = p;
        q.h_plus = q.h_minus = 1e6;
        CHECK_FALSE(single_switch_br(q, type2_rows(), Regime::contraction).ok);
    }
}

TEST_CASE("mirrored model gives mirrored thresholds") {
    // consumer habitat (1, 5) and the producer rows are symmetric about 3; drifts are opposite
    const ModelParams p = table2_params();
    ProducerStrategy s;
    s.row(Regime::expansion) = {Threshold::at(2.0), Threshold::at(3.6), Threshold::none(), Threshold::plus_inf()};
    s.row(Regime::contraction) = {Threshold::minus_inf(), Threshold::none(), Threshold::at(2.4), Threshold::at(4.0)};
    const auto br = double_switch_br(p, s);
    REQUIRE(br.ok);
    CHECK(br.strategy.y_l.value() + br.strategy.y_h.value() == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("cheap switching makes the double switch beat inaction where it continues") {
    ModelParams p = table2_params();
    p.h_plus = p.h_minus = 0.01;
    const auto cp = monopoly(table2_params()).strategy;
    const auto dbl = double_switch_br(p, cp);
    const auto none = no_switch_br(p, cp);
    REQUIRE(dbl.ok);
    REQUIRE(none.ok);
    const double yl = dbl.strategy.y_l.value(), yh = dbl.strategy.y_h.value();
    for (Regime r : kRegimes) {
        const auto& row = cp.row(r);
        const double lo = r == Regime::expansion ? row.x_l.value() : yl;
        const double hi = r == Regime::expansion ? yh : row.x_h.value();
        for (int i = 0; i <= 400; ++i) {
            const double x = lo + (hi - lo) * i / 400.0;
            CHECK(dbl.values.eval(r, x) >= none.values.eval(r, x) - 1e-9);
        }
    }
    CHECK(consumer_best_response(p, cp).kind == ConsumerKind::double_switch);
}

TEST_CASE("continuation value stays above the switching obstacle") {
    const ModelParams p = table2_params();
    const auto br = double_switch_br(p, type1_rows());
    REQUIRE(br.ok);
    const double yl = br.strategy.y_l.value(), yh = br.strategy.y_h.value();
    for (int i = 1; i < 200; ++i) {
        const double x = 1.0 + 6.0 * i / 200.0;
        if (x < yh) CHECK(pasting_gap(br, p, Regime::expansion, x) > -1e-7);
        if (x > yl) CHECK(pasting_gap(br, p, Regime::contraction, x) > -1e-7);
    }
}

}
