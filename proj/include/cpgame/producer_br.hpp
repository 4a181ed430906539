#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cpgame/core_model.hpp"
#include "cpgame/piecewise_value.hpp"

namespace cpgame {

enum class ProducerKind { monopoly, non_preemptive, preemptive_plus, preemptive_minus };

const char* name(ProducerKind k);

struct ProducerBR {
    ProducerKind kind = ProducerKind::monopoly;
    bool ok = false;
    ProducerStrategy strategy;
    /// v+ and v-
    PiecewiseValue values;
    /// v'' at the impulse targets (NaN where the row has none)
    std::array<double, 2> soc_lower{};
    std::array<double, 2> soc_upper{};
    bool soc_ok = false;
    double residual = 0.0;
    int iterations = 0;
    std::string message;
    std::vector<std::string> diagnostics;

    double payoff_at(Regime r, double x) const { return values.eval(r, x); }
};

struct ProducerOptions {
    bool allow_non_preemptive = true;
    bool allow_preemptive_plus = true;
    bool allow_preemptive_minus = true;
    /// warm start (x_l, x_l*, x_h*, x_h) per regime, used where finite
    std::optional<ProducerStrategy> seed;
    int grid_points = 401;
    /// reject non-preemptive solutions with x_l+ >= y_l or x_h- <= y_h
    bool enforce_ordering = true;
};

/// kappa0 + kappa1 |xi|
double impulse_cost(double xi, const ModelParams& p);

/// Two-sided impulse policy when the consumer never switches; only `regime` is solved.
ProducerBR monopoly_two_sided(const ModelParams& p, Regime regime, const ProducerOptions& opt = {});
/// Both regimes of the monopoly benchmark.
ProducerBR monopoly(const ModelParams& p, const ProducerOptions& opt = {});

/// One-sided impulses that leave the consumer's switches alone. A regime the consumer never leaves
/// gets a two-sided row.
ProducerBR nonpreemptive_br(const ModelParams& p, const ConsumerStrategy& cc, const ProducerOptions& opt = {});

/// Impulse at the consumer's switching level in `regime` (x_h+ = y_h for expansion, x_l- = y_l for contraction).
ProducerBR preemptive_br(const ModelParams& p, const ConsumerStrategy& cc, Regime regime,
                         const ProducerOptions& opt = {});

/// Non-preemptive unless it is infeasible or dominated on the comparison grid by a preemptive candidate.
ProducerBR producer_best_response(const ModelParams& p, const ConsumerStrategy& cc, const ProducerOptions& opt = {});

}  // namespace cpgame
