#include <doctest.h>

#include <cmath>

#include "cpgame/core_model.hpp"
#include "cpgame/producer_br.hpp"

using namespace cpgame;

TEST_SUITE("core_model") {

TEST_CASE("direct profits give the stated peaks and preferred levels") {
    const auto [prod, cons] = build_profits(table2_params());
    CHECK(prod.xbar == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(cons.xbar == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(prod.peak == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cons.peak == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(prod.x1 == doctest::Approx(2.0));
    CHECK(prod.x2 == doctest::Approx(6.0));
    CHECK(prod.xbar == doctest::Approx((prod.x1 + prod.x2) / 2));
    CHECK(prod(prod.xbar) == doctest::Approx(prod.peak));
}

TEST_CASE("structural producer expands to a quadratic with habitat {30, 100}") {
    ModelParams p = table2_params();
    p.producer_direct.reset();
    p.producer_structural = ProducerStructural{30.0, 1.0, 0.01};
    const auto prod = build_profits(p).first;
    CHECK(prod.x1 == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(prod.x2 == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(prod.xbar == doctest::Approx(65.0).epsilon(1e-12));
    CHECK(prod.peak == doctest::Approx(12.25).epsilon(1e-12));
    CHECK(2.0 * prod.peak == doctest::Approx(case_study_params().kappa0).epsilon(1e-12));
}

TEST_CASE("structural consumer habitat rounds to {11, 82}") {
    const auto cons = build_profits(case_study_params()).second;
    CHECK(std::round(cons.x1) == 11.0);
    CHECK(std::round(cons.x2) == 82.0);
    CHECK(cons.g2 < 0.0);
}

TEST_CASE("concavity violation names p1 and alpha") {
    ModelParams p = case_study_params();
    p.consumer_structural->p1 = 1.0;
    try {
        build_profits(p);
        FAIL("expected a ModelError");
    } catch (const ModelError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("p1") != std::string::npos);
        CHECK(msg.find("alpha") != std::string::npos);
    }
}

TEST_CASE("characteristic roots") {
    ModelParams p = table2_params();
    SUBCASE("drift-free case is symmetric") {
        auto [t1, t2] = char_roots(0.0, p);
        CHECK(t1 == doctest::Approx(std::sqrt(0.2) / 0.25).epsilon(1e-14));
        CHECK(t2 == doctest::Approx(-std::sqrt(0.2) / 0.25).epsilon(1e-14));
    }
    SUBCASE("positive and negative drift mirror each other") {
        auto [a1, a2] = char_roots(0.1, p);
        auto [b1, b2] = char_roots(-0.1, p);
        CHECK(a1 == doctest::Approx(0.8).epsilon(1e-14));
        CHECK(a2 == doctest::Approx(-4.0).epsilon(1e-14));
        CHECK(b1 == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(b2 == doctest::Approx(-0.8).epsilon(1e-14));
    }
    SUBCASE("roots solve the characteristic equation and satisfy Vieta") {
        for (double sigma : {0.1, 0.25, 1.0, 10.0})
            for (double mu : {-0.3, -0.1, 0.0, 0.15, 2.0}) {
                p.sigma = sigma;
                auto [t1, t2] = char_roots(mu, p);
                CHECK(t1 > 0.0);
                CHECK(t2 < 0.0);
                for (double t : {t1, t2}) CHECK(std::abs(-p.beta + mu * t + 0.5 * sigma * sigma * t * t) < 1e-12);
                CHECK(t1 * t2 == doctest::Approx(-2.0 * p.beta / (sigma * sigma)).epsilon(1e-12));
                CHECK(t1 + t2 == doctest::Approx(-2.0 * mu / (sigma * sigma)).epsilon(1e-12).scale(1.0));
            }
    }
}

TEST_CASE("particular solutions") {
    const ModelParams p = table2_params();
    const auto [prod, cons] = build_profits(p);
    const auto c = particular_solution(cons, 0.1, p);
    CHECK(c[0] == doctest::Approx(-7.5).epsilon(1e-14));
    CHECK(c[1] == doctest::Approx(30.0).epsilon(1e-14));
    CHECK(c[2] == doctest::Approx(-12.1875).epsilon(1e-14));
    const auto q = particular_solution(prod, 0.1, p);
    CHECK(q[0] == doctest::Approx(-2.5).epsilon(1e-14));
    CHECK(q[1] == doctest::Approx(15.0).epsilon(1e-14));
    CHECK(q[2] == doctest::Approx(-16.5625).epsilon(1e-14));
    const auto z = particular_solution(cons, 0.0, p);
    CHECK(z[1] == doctest::Approx(cons.g1 / p.beta));

    for (const auto& profit : {prod, cons})
        for (Regime r : kRegimes) {
            const auto f = fundamentals(profit, r, p);
            const auto& k = f.particular;
            for (int i = 0; i <= 20; ++i) {
                const double x = profit.x1 - 1.0 + (profit.x2 - profit.x1 + 2.0) * i / 20.0;
                const double w = k[2] + x * (k[1] + x * k[0]);
                const double wx = k[1] + 2.0 * k[0] * x;
                CHECK(std::abs(ode_operator(w, wx, 2.0 * k[0], x, f.mu, profit, p)) < 1e-9);
            }
        }
}

TEST_CASE("validation names the violated invariant") {
    ModelParams p = table2_params();
    p.sigma = 0.0;
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("sigma"), ModelError);
    p = table2_params();
    p.mu_minus = 0.05;
    CHECK_THROWS_AS(validate(p), ModelError);
    p = table2_params();
    p.kappa0 = 0.0;
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("kappa0"), ModelError);
    CHECK_NOTHROW(validate(table2_params()));
    CHECK_NOTHROW(validate(case_study_params()));
}

TEST_CASE("config text round-trips and reports bad keys with their line") {
    for (const auto& p : {table2_params(), case_study_params()}) {
        const auto q = parse_config(to_config(p));
        CHECK(to_config(q) == to_config(p));
    }
    const std::string bad = "[market]\nbeta = 0.1\nsigma = 0.25\nmu_plus = 0.1\nmu_minus = -0.1\nvolatility = 2\n";
    try {
        parse_config(bad);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "volatility");
        CHECK(e.line() == 6);
    }
    try {
        parse_config("[market]\nbeta = fast\n");
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "beta");
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_config("[prices]\n"), ConfigError);
}

TEST_CASE("shipped configs match the built-in parameter sets") {
    const std::string dir = CPGAME_SOURCE_DIR "/configs/";
    CHECK(to_config(load_config(dir + "table2.ini")) == to_config(table2_params()));
    CHECK(to_config(load_config(dir + "case_study.ini")) == to_config(case_study_params()));
    CHECK_THROWS_AS(load_config(dir + "missing.ini"), ConfigError);
}

TEST_CASE("impulse cost") {
    ModelParams p = table2_params();
    CHECK(impulse_cost(0.0, p) == 3.0);
    CHECK(impulse_cost(-1.7, p) == 3.0);
    p.kappa1 = 0.5;
    CHECK(impulse_cost(-2.0, p) == doctest::Approx(4.0));
}

}
