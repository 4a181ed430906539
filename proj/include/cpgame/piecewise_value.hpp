#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cpgame/core_model.hpp"

namespace cpgame {

/// A strategy entry: a finite level, +inf/-inf (never reached), or absent (not part of the strategy).
class Threshold {
public:
    enum class Kind : std::uint8_t { finite, pos_inf, neg_inf, absent };

    Threshold() = default;
    static Threshold at(double v) { return Threshold(Kind::finite, v); }
    static Threshold plus_inf() { return Threshold(Kind::pos_inf, 0.0); }
    static Threshold minus_inf() { return Threshold(Kind::neg_inf, 0.0); }
    static Threshold none() { return Threshold(Kind::absent, 0.0); }

    Kind kind() const { return kind_; }
    bool finite() const { return kind_ == Kind::finite; }
    bool absent() const { return kind_ == Kind::absent; }
    /// Throws if not finite.
    double value() const;
    /// Finite value, or +-inf for the infinite kinds; NaN when absent.
    double as_double() const;

    std::string str() const;
    static Threshold parse(const std::string& s);

    friend bool operator==(const Threshold& a, const Threshold& b) {
        return a.kind_ == b.kind_ && (a.kind_ != Kind::finite || a.value_ == b.value_);
    }

private:
    Threshold(Kind k, double v) : kind_(k), value_(v) {}
    Kind kind_ = Kind::absent;
    double value_ = 0.0;
};

/// (x_l, x_l*, x_h*, x_h) for one regime.
struct ProducerRow {
    Threshold x_l = Threshold::minus_inf();
    Threshold x_l_star = Threshold::none();
    Threshold x_h_star = Threshold::none();
    Threshold x_h = Threshold::plus_inf();

    bool has_lower() const { return x_l.finite(); }
    bool has_upper() const { return x_h.finite(); }
    std::array<Threshold, 4> entries() const { return {x_l, x_l_star, x_h_star, x_h}; }
    static ProducerRow inactive() { return {}; }
    static ProducerRow absent_row() {
        return {Threshold::none(), Threshold::none(), Threshold::none(), Threshold::none()};
    }
};

struct ProducerStrategy {
    std::array<ProducerRow, 2> rows{};
    ProducerRow& row(Regime r) { return rows[index(r)]; }
    const ProducerRow& row(Regime r) const { return rows[index(r)]; }
};

struct ConsumerStrategy {
    Threshold y_l = Threshold::minus_inf();
    Threshold y_h = Threshold::plus_inf();
};

struct StrategyPair {
    ProducerStrategy producer;
    ConsumerStrategy consumer;
};

/// Throws ModelError when a present row violates x_l < x_l* or x_h* < x_h, or y_l >= y_h.
void check_natural_ordering(const StrategyPair& s);

/// constant + sum coef[k] * c[k] over the four exponential coefficients
/// (c1, c2 of expansion, then c1, c2 of contraction).
struct LinearForm {
    double constant = 0.0;
    std::array<double, 4> coef{};

    double apply(const std::array<double, 4>& c) const {
        return constant + coef[0] * c[0] + coef[1] * c[1] + coef[2] * c[2] + coef[3] * c[3];
    }
    LinearForm& operator+=(const LinearForm& o);
    LinearForm& operator-=(const LinearForm& o);
    friend LinearForm operator-(LinearForm a, const LinearForm& b) { return a -= b; }
};

enum class ExtensionKind : std::uint8_t {
    /// the analytic piece extends to infinity on this side
    none,
    /// value(x) = value(target) - cost0 - cost1 * |target - x|
    pegged,
    /// value(x) = other regime's value(x) - cost0
    delegate,
};

struct Extension {
    ExtensionKind kind = ExtensionKind::none;
    double target = 0.0;
    double cost0 = 0.0;
    double cost1 = 0.0;
    /// whether the solver imposed C1 at the adjoining knot
    bool smooth = false;
};

/// Particular quadratic + c1 exp(theta1 (x - anchor1)) + c2 exp(theta2 (x - anchor2)) on [lo, hi].
struct RegimeValue {
    bool present = false;
    double mu = 0.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    std::array<double, 3> q{};
    double theta1 = 0.0;
    double theta2 = 0.0;
    double anchor1 = 0.0;
    double anchor2 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    Extension below;
    Extension above;

    /// Place anchors at the interval ends so both exponentials stay <= 1 inside.
    void set_anchors();
};

enum class Side : std::uint8_t { left, right };

class PiecewiseValue {
public:
    PiecewiseValue() = default;

    RegimeValue& regime(Regime r) { return parts_[index(r)]; }
    const RegimeValue& regime(Regime r) const { return parts_[index(r)]; }

    std::array<double, 4> coefficients() const;
    void set_coefficients(const std::array<double, 4>& c);

    /// Value (order 0), slope (1) or curvature (2) as an affine form in the coefficients.
    /// Knots take the limit from the analytic (continuation) side.
    LinearForm form(Regime r, double x, int order = 0) const;
    /// The analytic formula of regime r evaluated at x regardless of its interval.
    LinearForm analytic_form(Regime r, double x, int order = 0) const;
    /// Value of the piece adjoining a knot from the given side.
    LinearForm side_form(Regime r, double x, Side side, int order = 0) const;

    double eval(Regime r, double x) const { return form(r, x, 0).apply(coefficients()); }
    double deriv(Regime r, double x) const { return form(r, x, 1).apply(coefficients()); }
    double deriv2(Regime r, double x) const { return form(r, x, 2).apply(coefficients()); }
    double eval_side(Regime r, double x, Side side, int order = 0) const {
        return side_form(r, x, side, order).apply(coefficients());
    }

    /// -beta v + mu v' + sigma^2 v'' / 2 + profit; rejects x outside the analytic piece.
    double ode_residual(Regime r, double x, const QuadProfit& profit, const ModelParams& p) const;

    bool in_analytic(Regime r, double x) const;

    std::string provenance;

private:
    LinearForm form_impl(Regime r, double x, int order, int depth) const;
    LinearForm extension_form(Regime r, const Extension& e, double x, int order, int depth) const;
    std::array<RegimeValue, 2> parts_{};
};

/// Analytic piece on [lo, hi] with zero exponential coefficients and no extensions.
RegimeValue analytic_piece(const RegimeFundamentals& f, double lo, double hi);

std::string to_json(const PiecewiseValue& v, int indent = 2);
PiecewiseValue value_from_json(const std::string& text);
std::string to_json(const StrategyPair& s, int indent = 2);
StrategyPair strategy_from_json(const std::string& text);

}  // namespace cpgame
