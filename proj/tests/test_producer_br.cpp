#include <doctest.h>

#include <array>
#include <cmath>

#include "cpgame/producer_br.hpp"

using namespace cpgame;

namespace {

void check_row(const ProducerRow& row, std::array<double, 4> expected, double tol) {
    const auto e = row.entries();
    for (int k = 0; k < 4; ++k) {
        if (std::isnan(expected[k])) {
            CHECK_FALSE(e[k].finite());
            continue;
        }
        if (std::isinf(expected[k])) {
            CHECK(e[k].as_double() == expected[k]);
            continue;
        }
        REQUIRE(e[k].finite());
        CHECK(std::abs(e[k].value() - expected[k]) < tol);
    }
}

/// Value matching across impulses, first-order conditions and curvature at the targets.
void check_impulse_conditions(const ProducerBR& br, const ModelParams& p) {
    for (Regime r : kRegimes) {
        const auto& row = br.strategy.row(r);
        if (row.has_lower()) {
            const double a = row.x_l.value(), t = row.x_l_star.value();
            CHECK(std::abs(br.values.eval(r, a) - (br.values.eval(r, t) - impulse_cost(t - a, p))) < 1e-8);
            CHECK(std::abs(br.values.deriv(r, t) - p.kappa1) < 1e-8);
            CHECK(br.values.deriv2(r, t) < 0.0);
        }
        if (row.has_upper()) {
            const double b = row.x_h.value(), t = row.x_h_star.value();
            CHECK(std::abs(br.values.eval(r, b) - (br.values.eval(r, t) - impulse_cost(b - t, p))) < 1e-8);
            CHECK(std::abs(br.values.deriv(r, t) + p.kappa1) < 1e-8);
            CHECK(br.values.deriv2(r, t) < 0.0);
        }
    }
    CHECK(br.soc_ok);
}

constexpr double inf = INFINITY;
constexpr double na = NAN;

}  // namespace

TEST_SUITE("producer_br") {

TEST_CASE("monopoly rows") {
    const ModelParams p = table2_params();
    const auto br = monopoly(p);
    REQUIRE(br.ok);
    check_row(br.strategy.row(Regime::expansion), {1.9, 3.5, 3.5, 5.6}, 0.05);
    check_row(br.strategy.row(Regime::contraction), {2.4, 4.5, 4.5, 6.1}, 0.05);
    check_impulse_conditions(br, p);
    SUBCASE("prohibitive impulse cost") {
        ModelParams q = p;
        q.kappa0 = 1e6;
        const auto none = monopoly(q);
        CHECK_FALSE(none.ok);
        for (Regime r : kRegimes) {
            CHECK_FALSE(none.strategy.row(r).has_lower());
            CHECK_FALSE(none.strategy.row(r).has_upper());
        }
    }
}

TEST_CASE("proportional cost shifts the target conditions") {
    ModelParams p = table2_params();
    p.kappa1 = 0.2;
    const auto br = monopoly(p);
    REQUIRE(br.ok);
    check_impulse_conditions(br, p);
    const auto& row = br.strategy.row(Regime::expansion);
    CHECK(row.x_l_star.value() < row.x_h_star.value());
}

TEST_CASE("non-preemptive response to the generic consumer") {
    const ModelParams p = table2_params();
    ConsumerStrategy cc{Threshold::at(2.1913), Threshold::at(4.3879)};
    const auto br = nonpreemptive_br(p, cc);
    REQUIRE(br.ok);
    check_row(br.strategy.row(Regime::expansion), {2.0, 3.6, na, inf}, 0.05);
    check_row(br.strategy.row(Regime::contraction), {-inf, na, 4.5, 6.1}, 0.05);
    check_impulse_conditions(br, p);
    CHECK(br.residual < 1e-8);
    CHECK(producer_best_response(p, cc).kind == ProducerKind::non_preemptive);
}

TEST_CASE("a consumer that never switches leaves the monopoly rows") {
    const ModelParams p = table2_params();
    const auto mono = monopoly(p);
    const auto br = nonpreemptive_br(p, ConsumerStrategy{});
    REQUIRE(br.ok);
    for (Regime r : kRegimes)
        for (int k = 0; k < 4; ++k)
            CHECK(br.strategy.row(r).entries()[k].as_double() ==
                  doctest::Approx(mono.strategy.row(r).entries()[k].as_double()).epsilon(1e-9));
}

TEST_CASE("consumer thresholds outside the producer band give the monopoly rows") {
    const ModelParams p = table2_params();
    const auto mono = monopoly(p);
    const auto br = producer_best_response(p, ConsumerStrategy{Threshold::at(0.5), Threshold::at(8.0)});
    REQUIRE(br.ok);
    CHECK(br.kind == ProducerKind::monopoly);
    for (Regime r : kRegimes)
        for (int k = 0; k < 4; ++k)
            CHECK(br.strategy.row(r).entries()[k].as_double() ==
                  doctest::Approx(mono.strategy.row(r).entries()[k].as_double()).epsilon(1e-9));
}

TEST_CASE("preemption at the consumer's expansion trigger") {
    const ModelParams p = table2_params();
    ConsumerStrategy cc{Threshold::minus_inf(), Threshold::at(4.3)};
    const auto br = preemptive_br(p, cc, Regime::expansion);
    REQUIRE(br.ok);
    CHECK(br.kind == ProducerKind::preemptive_plus);
    check_row(br.strategy.row(Regime::expansion), {1.7, 3.1, 3.1, 4.3}, 0.05);
    CHECK(br.strategy.row(Regime::expansion).x_h.value() == 4.3);
    check_impulse_conditions(br, p);
    SUBCASE("prohibitive impulse cost") {
        ModelParams q = p;
        q.kappa0 = 1e6;
        CHECK_FALSE(preemptive_br(q, cc, Regime::expansion).ok);
    }
}

}
