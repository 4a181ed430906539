#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cpgame/core_model.hpp"
#include "cpgame/piecewise_value.hpp"

namespace cpgame::detail {

class SingularSystem : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A level that is either fixed or the i-th unknown of the outer problem.
struct Ref {
    int unknown = -1;
    double fixed = 0.0;

    static Ref var(int i) { return {i, 0.0}; }
    static Ref at(double v) { return {-1, v}; }
    double get(const std::vector<double>& u) const { return unknown >= 0 ? u[unknown] : fixed; }
};

struct Boundary {
    enum class Kind { open, peg, swap };
    Kind kind = Kind::open;
    Ref at;
    Ref target;
    double cost0 = 0.0;
    double cost1 = 0.0;
    /// impose C1 at `at` as an outer equation
    bool smooth = false;
    /// impose the first-order condition at `target` as an outer equation
    bool foc = false;

    static Boundary open() { return {}; }
    static Boundary peg(Ref at, Ref target, double cost0 = 0.0, double cost1 = 0.0, bool smooth = false,
                        bool foc = false) {
        return {Kind::peg, at, target, cost0, cost1, smooth, foc};
    }
    static Boundary swap(Ref at, double cost, bool smooth = false) {
        return {Kind::swap, at, Ref{}, cost, 0.0, smooth, false};
    }
};

struct RegimeLayout {
    bool present = false;
    Boundary lower;
    Boundary upper;
};

/// Value-matching conditions are solved exactly for the four exponential coefficients given the
/// unknown levels; smooth-pasting and first-order conditions form the outer residual.
struct PastingProblem {
    ModelParams params;
    QuadProfit profit;
    std::array<RegimeLayout, 2> layout{};
    int n_unknowns = 0;
    std::vector<double> lo;
    std::vector<double> hi;
    /// pairs (a, b) requiring u[a] < u[b]
    std::vector<std::pair<int, int>> order;
    std::string provenance;

    PiecewiseValue build(const std::vector<double>& u) const;
    std::vector<double> residual(const std::vector<double>& u) const;
    std::vector<double> residual(const PiecewiseValue& v, const std::vector<double>& u) const;
    std::vector<double> project(std::vector<double> u) const;
    double margin() const;
};

struct NewtonResult {
    bool converged = false;
    std::vector<double> x;
    double residual = 0.0;
    int iterations = 0;
    std::string message;
};

struct NewtonOptions {
    double tol = 1e-8;
    int max_iter = 100;
    /// a stalled line search still counts as converged below this residual
    double stall_tol = 0.0;
};

using VecFn = std::function<std::vector<double>(const std::vector<double>&)>;
using ProjectFn = std::function<std::vector<double>(std::vector<double>)>;

/// Damped Newton with a central finite-difference Jacobian and projection after each step.
NewtonResult newton(const VecFn& f, const ProjectFn& project, std::vector<double> x0, const NewtonOptions& opt = {});

struct PastingSolution {
    bool ok = false;
    std::vector<double> u;
    PiecewiseValue value;
    double residual = 0.0;
    int iterations = 0;
    std::string message;
};

/// Newton from the seed, then from a grid of seeds over the bracket. `accept` can reject roots.
PastingSolution solve(const PastingProblem& prob, const std::vector<double>& seed,
                      const std::function<bool(const std::vector<double>&)>& accept = {},
                      const NewtonOptions& opt = {}, int grid = 6);

/// Largest absolute pasting residual (value matching, smooth pasting, FOC) of a built value.
double pasting_residual(const PastingProblem& prob, const PiecewiseValue& v, const std::vector<double>& u);

}  // namespace cpgame::detail
