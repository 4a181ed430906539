#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cpgame/core_model.hpp"
#include "cpgame/piecewise_value.hpp"

namespace cpgame {

enum class ConsumerKind { no_switch, single_switch_to_plus, single_switch_to_minus, double_switch, alone };

const char* name(ConsumerKind k);
int switch_count(ConsumerKind k);

struct ConsumerBR {
    ConsumerKind kind = ConsumerKind::no_switch;
    bool ok = false;
    ConsumerStrategy strategy;
    /// w+ and w-
    PiecewiseValue values;
    double residual = 0.0;
    int iterations = 0;
    std::string message;
    std::vector<std::string> diagnostics;

    double payoff_at(Regime r, double x) const { return values.eval(r, x); }
};

/// Allowed candidate kinds plus optional warm start for the switching thresholds.
struct ConsumerOptions {
    bool allow_no_switch = true;
    bool allow_single_plus = true;
    bool allow_single_minus = true;
    bool allow_double = true;
    std::optional<double> seed_y_l;
    std::optional<double> seed_y_h;
    int grid_points = 401;
};

/// Inactive consumer facing the producer row of `regime`; pegged outside the impulse band.
PiecewiseValue no_switch_value(const ModelParams& p, const ProducerStrategy& cp, Regime regime);

ConsumerBR no_switch_br(const ModelParams& p, const ProducerStrategy& cp);
/// One switch into `preferred`, after which the consumer stays there.
ConsumerBR single_switch_br(const ModelParams& p, const ProducerStrategy& cp, Regime preferred,
                            const ConsumerOptions& opt = {});
ConsumerBR double_switch_br(const ModelParams& p, const ProducerStrategy& cp, const ConsumerOptions& opt = {});
/// Consumer without a producer.
ConsumerBR consumer_alone(const ModelParams& p, const ConsumerOptions& opt = {});

/// Solves every allowed candidate and keeps the one that dominates the others on the comparison grid;
/// ties go to fewer switches. Returns an ok=false result when no candidate can be solved.
ConsumerBR consumer_best_response(const ModelParams& p, const ProducerStrategy& cp, const ConsumerOptions& opt = {});

/// Comparison interval per regime: the span of the producer's finite levels, or the habitat if there are none.
std::pair<double, double> comparison_band(const ModelParams& p, const ProducerStrategy& cp, const QuadProfit& profit);

}  // namespace cpgame
