"""Solver for threshold equilibria of the producer-consumer impulse and switching game."""

from ._cpgame import (
    ConfigError,
    Equilibrium,
    InputError,
    ModelError,
    ModelParams,
    case_study_params,
    consumer_alone,
    exact_stats,
    expected_exit_time,
    expected_switch_time,
    hitting_prob,
    jump_chain,
    load_config,
    monopoly,
    parse_config,
    simulate_stats,
    solve,
    table2_params,
)

__all__ = [
    "ConfigError",
    "Equilibrium",
    "InputError",
    "ModelError",
    "ModelParams",
    "case_study_params",
    "consumer_alone",
    "exact_stats",
    "expected_exit_time",
    "expected_switch_time",
    "hitting_prob",
    "jump_chain",
    "load_config",
    "monopoly",
    "parse_config",
    "simulate_stats",
    "solve",
    "table2_params",
]
