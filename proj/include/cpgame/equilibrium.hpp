#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpgame/consumer_br.hpp"
#include "cpgame/core_model.hpp"
#include "cpgame/piecewise_value.hpp"
#include "cpgame/producer_br.hpp"

namespace cpgame {

enum class Branch { generic, transitory_plus, transitory_minus, preemptive_plus, preemptive_minus };
enum class EquilibriumType { I, II_to_plus, II_to_minus, III_plus, III_minus, unclassified };
enum class Mode { sync, async };

const char* name(Branch b);
const char* name(EquilibriumType t);
const char* name(Mode m);
/// Accepts the CLI spellings (generic, transitory-plus, ...); throws std::invalid_argument otherwise.
Branch parse_branch(const std::string& s);
Mode parse_mode(const std::string& s);

struct CheckItem {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double limit = 0.0;
    std::string detail;
};

struct Diagnostics {
    std::vector<CheckItem> items;
    bool all_pass() const;
    const CheckItem* find(const std::string& name) const;
};

struct EquilibriumResult {
    ModelParams params;
    Branch branch = Branch::generic;
    Mode mode = Mode::async;
    StrategyPair strategies;
    EquilibriumType type = EquilibriumType::unclassified;
    ProducerKind producer_kind = ProducerKind::monopoly;
    ConsumerKind consumer_kind = ConsumerKind::no_switch;
    PiecewiseValue producer_values;
    PiecewiseValue consumer_values;
    bool converged = false;
    int iterations = 0;
    /// sup-norm threshold change per iteration (inf when the finite/infinite pattern changed)
    std::vector<double> history;
    /// strategies after each iteration, starting with the seed
    std::vector<StrategyPair> path;
    std::optional<std::pair<StrategyPair, StrategyPair>> cycle;
    std::string message;
    /// regimes visited when the market starts in the preempted regime
    std::array<bool, 2> reachable{true, true};
};

/// Strategies with the rows and thresholds of unreachable regimes shown as absent.
StrategyPair reported_strategies(const EquilibriumResult& e);

/// Monopoly producer rows and consumer-alone thresholds.
StrategyPair default_seed(const ModelParams& p);

/// Branch-constrained best responses.
ConsumerBR consumer_step(const ModelParams& p, const ProducerStrategy& cp, Branch b,
                         const std::optional<ConsumerStrategy>& warm = std::nullopt);
ProducerBR producer_step(const ModelParams& p, const ConsumerStrategy& cc, Branch b,
                         const std::optional<ProducerStrategy>& warm = std::nullopt);

/// Sup-norm distance over finite entries; infinity when the entry kinds differ.
double strategy_distance(const StrategyPair& a, const StrategyPair& b);

EquilibriumResult tatonnement(const ModelParams& p, const StrategyPair& init, Mode mode, Branch branch,
                              int max_iter = 100, double tol = 1e-9);

/// Seeds from default_seed and classifies the result.
EquilibriumResult solve_equilibrium(const ModelParams& p, Branch branch, Mode mode = Mode::async, int max_iter = 100,
                                    double tol = 1e-9);

EquilibriumType classify(const StrategyPair& s, double tol = 1e-6);
EquilibriumType classify(const EquilibriumResult& e);

/// Re-evaluates residuals, orderings, curvature, obstacle slackness and the fixed-point property.
Diagnostics verify(const EquilibriumResult& e, int grid_points = 401);

}  // namespace cpgame
