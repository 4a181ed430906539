#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cpgame/analysis.hpp"

namespace py = pybind11;
using namespace cpgame;

namespace {

py::list row_list(const ProducerRow& row) {
    py::list out;
    for (const auto& t : row.entries()) out.append(t.as_double());
    return out;
}

/// Thresholds as floats: +-inf for infinite entries, NaN for absent ones.
py::dict strategy_dict(const StrategyPair& s) {
    py::dict producer;
    for (Regime r : kRegimes) producer[name(r)] = row_list(s.producer.row(r));
    py::dict out;
    out["producer"] = producer;
    out["consumer"] = py::make_tuple(s.consumer.y_l.as_double(), s.consumer.y_h.as_double());
    return out;
}

Regime regime_arg(const std::string& s) {
    if (s == "expansion" || s == "plus" || s == "+") return Regime::expansion;
    if (s == "contraction" || s == "minus" || s == "-") return Regime::contraction;
    throw py::value_error("regime must be 'expansion' or 'contraction'");
}

py::dict stats_dict(const LongRunStats& s) {
    py::dict d;
    d["mean"] = s.mean;
    d["var"] = s.var;
    d["e_pi_p"] = s.e_pi_p;
    d["e_pi_c"] = s.e_pi_c;
    d["apoo_p"] = s.apoo_p;
    d["apoo_c"] = s.apoo_c;
    d["switches_per_year"] = s.switches_per_year;
    d["impulses_per_year"] = s.impulses_per_year;
    d["rho_plus"] = s.rho_plus;
    d["years"] = s.years;
    return d;
}

}  // namespace

PYBIND11_MODULE(_cpgame, m) {
    m.doc() = "Threshold equilibria of the producer-consumer impulse and switching game";

    py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init<>())
        .def_readwrite("beta", &ModelParams::beta)
        .def_readwrite("sigma", &ModelParams::sigma)
        .def_readwrite("mu_plus", &ModelParams::mu_plus)
        .def_readwrite("mu_minus", &ModelParams::mu_minus)
        .def_readwrite("h_plus", &ModelParams::h_plus)
        .def_readwrite("h_minus", &ModelParams::h_minus)
        .def_readwrite("kappa0", &ModelParams::kappa0)
        .def_readwrite("kappa1", &ModelParams::kappa1)
        .def("set", [](ModelParams& p, const std::string& key, double v) { set_parameter(p, key, v); })
        .def("validate", [](const ModelParams& p) { validate(p); })
        .def("to_config", [](const ModelParams& p) { return to_config(p); });

    m.def("table2_params", &table2_params);
    m.def("case_study_params", &case_study_params);
    m.def("parse_config", &parse_config, py::arg("text"));
    m.def("load_config", &load_config, py::arg("path"));

    py::class_<EquilibriumResult>(m, "Equilibrium")
        .def_readonly("params", &EquilibriumResult::params)
        .def_readonly("converged", &EquilibriumResult::converged)
        .def_readonly("iterations", &EquilibriumResult::iterations)
        .def_readonly("history", &EquilibriumResult::history)
        .def_readonly("message", &EquilibriumResult::message)
        .def_property_readonly("type", [](const EquilibriumResult& e) { return name(e.type); })
        .def_property_readonly("branch", [](const EquilibriumResult& e) { return name(e.branch); })
        .def("thresholds", [](const EquilibriumResult& e) { return strategy_dict(reported_strategies(e)); })
        .def("value",
             [](const EquilibriumResult& e, const std::string& player, const std::string& regime, double x) {
                 const Regime r = regime_arg(regime);
                 if (player == "producer") return e.producer_values.eval(r, x);
                 if (player == "consumer") return e.consumer_values.eval(r, x);
                 throw py::value_error("player must be 'producer' or 'consumer'");
             },
             py::arg("player"), py::arg("regime"), py::arg("x"))
        .def("verify",
             [](const EquilibriumResult& e) {
                 py::list out;
                 for (const auto& c : verify(e).items) {
                     py::dict d;
                     d["name"] = c.name;
                     d["pass"] = c.pass;
                     d["value"] = c.value;
                     d["limit"] = c.limit;
                     d["detail"] = c.detail;
                     out.append(d);
                 }
                 return out;
             })
        .def("exit_code", [](const EquilibriumResult& e) { return solve_exit_code(e, verify(e)); })
        .def("thresholds_csv", [](const EquilibriumResult& e) { return thresholds_csv(e.strategies); });

    m.def(
        "solve",
        [](const ModelParams& p, const std::string& branch, const std::string& mode) {
            py::gil_scoped_release release;
            return solve_equilibrium(p, parse_branch(branch), parse_mode(mode));
        },
        py::arg("params"), py::arg("branch") = "generic", py::arg("mode") = "async");

    m.def("monopoly", [](const ModelParams& p) {
        const auto br = monopoly(p);
        py::dict d;
        d["ok"] = br.ok;
        for (Regime r : kRegimes) d[name(r)] = row_list(br.strategy.row(r));
        return d;
    });
    m.def("consumer_alone", [](const ModelParams& p) {
        const auto br = consumer_alone(p);
        return py::make_tuple(br.ok, br.strategy.y_l.as_double(), br.strategy.y_h.as_double());
    });

    m.def("hitting_prob", &hitting_prob, py::arg("x"), py::arg("a"), py::arg("b"), py::arg("mu"), py::arg("sigma"));
    m.def("expected_exit_time", &expected_exit_time, py::arg("x"), py::arg("a"), py::arg("b"), py::arg("mu"),
          py::arg("sigma"));

    m.def("exact_stats", [](const EquilibriumResult& e) { return stats_dict(exact_long_run_stats(e)); });
    m.def(
        "simulate_stats",
        [](const EquilibriumResult& e, int paths, double horizon, double dt, std::uint64_t seed, bool bridge,
           int threads) {
            SimConfig cfg;
            cfg.paths = paths;
            cfg.horizon = horizon;
            cfg.dt = dt;
            cfg.seed = seed;
            cfg.bridge = bridge;
            cfg.threads = threads;
            LongRunStats s;
            {
                py::gil_scoped_release release;
                s = long_run_stats(e, cfg);
            }
            return stats_dict(s);
        },
        py::arg("eq"), py::arg("paths") = 8, py::arg("horizon") = 5000.0, py::arg("dt") = 0.01, py::arg("seed") = 1,
        py::arg("bridge") = true, py::arg("threads") = 0);

    m.def("jump_chain", [](const EquilibriumResult& e) {
        const auto c = build_jump_chain(e);
        py::dict d;
        py::list states;
        for (auto st : kChainStates) states.append(name(st));
        d["states"] = states;
        d["P"] = c.P;
        d["pi"] = c.pi;
        d["residual"] = c.stationarity_residual;
        return d;
    });
    m.def("expected_switch_time", [](const EquilibriumResult& e, double x0) {
        const auto t = expected_switch_time(e, x0);
        return py::make_tuple(t.first_step, t.corrected, t.literal);
    });
}
