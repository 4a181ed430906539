#include "cpgame/piecewise_value.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace cpgame {

using nlohmann::json;

double Threshold::value() const {
    if (kind_ != Kind::finite) throw std::logic_error("threshold " + str() + " has no finite value");
    return value_;
}

double Threshold::as_double() const {
    switch (kind_) {
        case Kind::finite: return value_;
        case Kind::pos_inf: return std::numeric_limits<double>::infinity();
        case Kind::neg_inf: return -std::numeric_limits<double>::infinity();
        case Kind::absent: break;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

std::string Threshold::str() const {
    switch (kind_) {
        case Kind::finite: return fmt::format("{:.17g}", value_);
        case Kind::pos_inf: return "+inf";
        case Kind::neg_inf: return "-inf";
        case Kind::absent: break;
    }
    return "-";
}

Threshold Threshold::parse(const std::string& s) {
    if (s == "+inf" || s == "inf") return plus_inf();
    if (s == "-inf") return minus_inf();
    if (s == "-" || s == "absent" || s.empty()) return none();
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad threshold '" + s + "'");
    return at(v);
}

void check_natural_ordering(const StrategyPair& s) {
    for (Regime r : kRegimes) {
        const auto& row = s.producer.row(r);
        if (row.x_l.finite() && row.x_l_star.finite() && !(row.x_l.value() < row.x_l_star.value()))
            throw ModelError(fmt::format("{} row: x_l must be below x_l*", name(r)));
        if (row.x_h.finite() && row.x_h_star.finite() && !(row.x_h_star.value() < row.x_h.value()))
            throw ModelError(fmt::format("{} row: x_h* must be below x_h", name(r)));
    }
    if (s.consumer.y_l.finite() && s.consumer.y_h.finite() && !(s.consumer.y_l.value() < s.consumer.y_h.value()))
        throw ModelError("consumer thresholds must satisfy y_l < y_h");
}

LinearForm& LinearForm::operator+=(const LinearForm& o) {
    constant += o.constant;
    for (int k = 0; k < 4; ++k) coef[k] += o.coef[k];
    return *this;
}

LinearForm& LinearForm::operator-=(const LinearForm& o) {
    constant -= o.constant;
    for (int k = 0; k < 4; ++k) coef[k] -= o.coef[k];
    return *this;
}

void RegimeValue::set_anchors() {
    anchor1 = std::isfinite(hi) ? hi : (std::isfinite(lo) ? lo : 0.0);
    anchor2 = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
}

RegimeValue analytic_piece(const RegimeFundamentals& f, double lo, double hi) {
    RegimeValue v;
    v.present = true;
    v.mu = f.mu;
    v.lo = lo;
    v.hi = hi;
    v.q = f.particular;
    v.theta1 = f.theta1;
    v.theta2 = f.theta2;
    v.set_anchors();
    return v;
}

std::array<double, 4> PiecewiseValue::coefficients() const {
    return {parts_[0].c1, parts_[0].c2, parts_[1].c1, parts_[1].c2};
}

void PiecewiseValue::set_coefficients(const std::array<double, 4>& c) {
    parts_[0].c1 = c[0];
    parts_[0].c2 = c[1];
    parts_[1].c1 = c[2];
    parts_[1].c2 = c[3];
}

LinearForm PiecewiseValue::analytic_form(Regime r, double x, int order) const {
    const auto& v = parts_[index(r)];
    if (!v.present) throw std::logic_error(fmt::format("value has no {} piece", name(r)));
    LinearForm f;
    const auto& q = v.q;
    double e1 = std::exp(v.theta1 * (x - v.anchor1));
    double e2 = std::exp(v.theta2 * (x - v.anchor2));
    int k = 2 * index(r);
    switch (order) {
        case 0:
            f.constant = q[2] + x * (q[1] + x * q[0]);
            f.coef[k] = e1;
            f.coef[k + 1] = e2;
            break;
        case 1:
            f.constant = q[1] + 2.0 * q[0] * x;
            f.coef[k] = v.theta1 * e1;
            f.coef[k + 1] = v.theta2 * e2;
            break;
        case 2:
            f.constant = 2.0 * q[0];
            f.coef[k] = v.theta1 * v.theta1 * e1;
            f.coef[k + 1] = v.theta2 * v.theta2 * e2;
            break;
        default: throw std::invalid_argument("derivative order must be 0, 1 or 2");
    }
    return f;
}

LinearForm PiecewiseValue::extension_form(Regime r, const Extension& e, double x, int order, int depth) const {
    switch (e.kind) {
        case ExtensionKind::none: return analytic_form(r, x, order);
        case ExtensionKind::pegged: {
            LinearForm f;
            if (order == 0) {
                f = form_impl(r, e.target, 0, depth + 1);
                f.constant -= e.cost0 + e.cost1 * std::abs(e.target - x);
            } else if (order == 1) {
                f.constant = e.cost1 * ((e.target > x) - (e.target < x));
            }
            return f;
        }
        case ExtensionKind::delegate: {
            LinearForm f = form_impl(other(r), x, order, depth + 1);
            if (order == 0) f.constant -= e.cost0;
            return f;
        }
    }
    return {};
}

LinearForm PiecewiseValue::form_impl(Regime r, double x, int order, int depth) const {
    if (depth > 4) throw std::logic_error("value extensions refer to each other in a cycle");
    const auto& v = parts_[index(r)];
    if (!v.present) throw std::logic_error(fmt::format("value has no {} piece", name(r)));
    if (x < v.lo) return extension_form(r, v.below, x, order, depth);
    if (x > v.hi) return extension_form(r, v.above, x, order, depth);
    return analytic_form(r, x, order);
}

LinearForm PiecewiseValue::form(Regime r, double x, int order) const { return form_impl(r, x, order, 0); }

LinearForm PiecewiseValue::side_form(Regime r, double x, Side side, int order) const {
    const auto& v = parts_[index(r)];
    if (!v.present) throw std::logic_error(fmt::format("value has no {} piece", name(r)));
    if (side == Side::left) {
        if (x <= v.lo) return extension_form(r, v.below, x, order, 0);
        if (x <= v.hi) return analytic_form(r, x, order);
        return extension_form(r, v.above, x, order, 0);
    }
    if (x < v.lo) return extension_form(r, v.below, x, order, 0);
    if (x < v.hi) return analytic_form(r, x, order);
    return extension_form(r, v.above, x, order, 0);
}

bool PiecewiseValue::in_analytic(Regime r, double x) const {
    const auto& v = parts_[index(r)];
    return v.present && x >= v.lo && x <= v.hi;
}

double PiecewiseValue::ode_residual(Regime r, double x, const QuadProfit& profit, const ModelParams& p) const {
    if (!in_analytic(r, x))
        throw std::invalid_argument(fmt::format("ODE residual requested outside the analytic piece at x = {}", x));
    auto c = coefficients();
    return ode_operator(analytic_form(r, x, 0).apply(c), analytic_form(r, x, 1).apply(c),
                        analytic_form(r, x, 2).apply(c), x, parts_[index(r)].mu, profit, p);
}

namespace {

json num(double v) {
    if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
    return v;
}

double from_num(const json& j) {
    if (j.is_string()) {
        auto s = j.get<std::string>();
        if (s == "+inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw std::invalid_argument("bad number '" + s + "'");
    }
    return j.get<double>();
}

const char* kind_name(ExtensionKind k) {
    switch (k) {
        case ExtensionKind::none: return "none";
        case ExtensionKind::pegged: return "pegged";
        case ExtensionKind::delegate: return "delegate";
    }
    return "none";
}

ExtensionKind kind_from(const std::string& s) {
    if (s == "none") return ExtensionKind::none;
    if (s == "pegged") return ExtensionKind::pegged;
    if (s == "delegate") return ExtensionKind::delegate;
    throw std::invalid_argument("unknown extension kind '" + s + "'");
}

json ext_json(const Extension& e) {
    return {{"kind", kind_name(e.kind)}, {"target", e.target}, {"cost0", e.cost0}, {"cost1", e.cost1},
            {"smooth", e.smooth}};
}

Extension ext_from(const json& j) {
    Extension e;
    e.kind = kind_from(j.at("kind").get<std::string>());
    e.target = j.at("target").get<double>();
    e.cost0 = j.at("cost0").get<double>();
    e.cost1 = j.at("cost1").get<double>();
    e.smooth = j.at("smooth").get<bool>();
    return e;
}

json row_json(const ProducerRow& r) {
    json a = json::array();
    for (const auto& t : r.entries()) a.push_back(t.finite() ? json(t.value()) : json(t.str()));
    return a;
}

Threshold thr_from(const json& j) {
    if (j.is_number()) return Threshold::at(j.get<double>());
    return Threshold::parse(j.get<std::string>());
}

}  // namespace

std::string to_json(const PiecewiseValue& v, int indent) {
    json j;
    j["provenance"] = v.provenance;
    for (Regime r : kRegimes) {
        const auto& p = v.regime(r);
        json jr;
        jr["present"] = p.present;
        if (p.present) {
            jr["mu"] = p.mu;
            jr["knots"] = {num(p.lo), num(p.hi)};
            jr["particular"] = {{"q2", p.q[0]}, {"q1", p.q[1]}, {"q0", p.q[2]}};
            jr["theta"] = {p.theta1, p.theta2};
            jr["anchor"] = {p.anchor1, p.anchor2};
            jr["coef"] = {p.c1, p.c2};
            jr["below"] = ext_json(p.below);
            jr["above"] = ext_json(p.above);
        }
        j[name(r)] = jr;
    }
    return j.dump(indent);
}

PiecewiseValue value_from_json(const std::string& text) {
    json j = json::parse(text);
    PiecewiseValue v;
    v.provenance = j.value("provenance", "");
    for (Regime r : kRegimes) {
        const auto& jr = j.at(name(r));
        auto& p = v.regime(r);
        p.present = jr.at("present").get<bool>();
        if (!p.present) continue;
        p.mu = jr.at("mu").get<double>();
        p.lo = from_num(jr.at("knots")[0]);
        p.hi = from_num(jr.at("knots")[1]);
        p.q = {jr.at("particular").at("q2").get<double>(), jr.at("particular").at("q1").get<double>(),
               jr.at("particular").at("q0").get<double>()};
        p.theta1 = jr.at("theta")[0].get<double>();
        p.theta2 = jr.at("theta")[1].get<double>();
        p.anchor1 = jr.at("anchor")[0].get<double>();
        p.anchor2 = jr.at("anchor")[1].get<double>();
        p.c1 = jr.at("coef")[0].get<double>();
        p.c2 = jr.at("coef")[1].get<double>();
        p.below = ext_from(jr.at("below"));
        p.above = ext_from(jr.at("above"));
    }
    return v;
}

std::string to_json(const StrategyPair& s, int indent) {
    json j;
    j["producer"] = {{name(Regime::expansion), row_json(s.producer.row(Regime::expansion))},
                     {name(Regime::contraction), row_json(s.producer.row(Regime::contraction))}};
    auto t = [](const Threshold& x) { return x.finite() ? json(x.value()) : json(x.str()); };
    j["consumer"] = {t(s.consumer.y_l), t(s.consumer.y_h)};
    return j.dump(indent);
}

StrategyPair strategy_from_json(const std::string& text) {
    json j = json::parse(text);
    StrategyPair s;
    for (Regime r : kRegimes) {
        const auto& a = j.at("producer").at(name(r));
        s.producer.row(r) = {thr_from(a[0]), thr_from(a[1]), thr_from(a[2]), thr_from(a[3])};
    }
    s.consumer.y_l = thr_from(j.at("consumer")[0]);
    s.consumer.y_h = thr_from(j.at("consumer")[1]);
    return s;
}

}  // namespace cpgame
