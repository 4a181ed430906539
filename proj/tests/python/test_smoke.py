import math

import pytest

import cpgame


def test_type1_thresholds_and_checks():
    eq = cpgame.solve(cpgame.table2_params())
    assert eq.converged
    assert eq.type == "I"
    t = eq.thresholds()
    xl, xl_star, xh_star, xh = t["producer"]["expansion"]
    assert xl == pytest.approx(2.0, abs=0.05)
    assert xl_star == pytest.approx(3.6, abs=0.05)
    assert math.isnan(xh_star)
    assert xh == math.inf
    yl, yh = t["consumer"]
    assert (yl, yh) == pytest.approx((2.2, 4.4), abs=0.05)
    assert all(c["pass"] for c in eq.verify())
    assert eq.exit_code() == 0


def test_value_matching_at_consumer_trigger():
    p = cpgame.table2_params()
    eq = cpgame.solve(p)
    _, yh = eq.thresholds()["consumer"]
    above = eq.value("consumer", "expansion", yh)
    switched = eq.value("consumer", "contraction", yh) - p.h_plus
    assert above == pytest.approx(switched, abs=1e-7)


def test_benchmarks():
    p = cpgame.table2_params()
    mono = cpgame.monopoly(p)
    assert mono["ok"]
    assert mono["contraction"] == pytest.approx([2.4, 4.5, 4.5, 6.1], abs=0.05)
    ok, yl, yh = cpgame.consumer_alone(p)
    assert ok
    assert (yl, yh) == pytest.approx((1.7, 4.3), abs=0.05)


def test_sync_from_default_seed_does_not_converge():
    eq = cpgame.solve(cpgame.table2_params(), mode="sync")
    assert not eq.converged
    assert eq.exit_code() == 2


def test_bad_inputs_raise():
    with pytest.raises(ValueError):
        cpgame.parse_config("[model]\nbeta = fast\n")
    with pytest.raises(ValueError):
        cpgame.solve(cpgame.table2_params(), branch="type-iv")
    p = cpgame.table2_params()
    p.sigma = -1.0
    with pytest.raises(cpgame.ModelError):
        p.validate()


def test_hitting_and_exit_time():
    assert cpgame.hitting_prob(3.0, 2.0, 4.0, 0.0, 0.25) == pytest.approx(0.5)
    assert cpgame.expected_exit_time(3.0, 2.0, 4.0, 0.0, 0.25) == pytest.approx(16.0)


def test_chain_and_statistics():
    eq = cpgame.solve(cpgame.table2_params())
    chain = cpgame.jump_chain(eq)
    assert chain["residual"] < 1e-10
    assert sum(chain["pi"]) == pytest.approx(1.0)
    exact = cpgame.exact_stats(eq)
    sim = cpgame.simulate_stats(eq, paths=2, horizon=3000.0, seed=3, threads=1)
    assert sim["mean"] == pytest.approx(exact["mean"], abs=0.1)
    again = cpgame.simulate_stats(eq, paths=2, horizon=3000.0, seed=3, threads=2)
    assert sim == again
    first, corrected, literal = cpgame.expected_switch_time(eq, 3.0)
    assert first == pytest.approx(corrected)
    assert math.isnan(literal)
