#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace cpgame {

enum class Regime { expansion = 0, contraction = 1 };

inline constexpr std::array<Regime, 2> kRegimes{Regime::expansion, Regime::contraction};

inline int index(Regime r) { return static_cast<int>(r); }
inline Regime other(Regime r) { return r == Regime::expansion ? Regime::contraction : Regime::expansion; }
const char* name(Regime r);

/// a * (x - x1) * (x2 - x)
struct DirectProfit {
    double a = 0.0;
    double x1 = 0.0;
    double x2 = 0.0;
};

/// (x - c_p) * (d0 - d1 x)
struct ProducerStructural {
    double c_p = 0.0;
    double d0 = 0.0;
    double d1 = 0.0;
};

/// (d0' - d1' P(x)) * (P(x) - (x + c_c) / alpha), P(x) = p0 + p1 x
struct ConsumerStructural {
    double d0_prime = 0.0;
    double d1_prime = 0.0;
    double p0 = 0.0;
    double p1 = 0.0;
    double alpha = 1.0;
    double c_c = 0.0;
};

struct ModelParams {
    double beta = 0.1;
    double sigma = 0.25;
    double mu_plus = 0.1;
    double mu_minus = -0.1;

    std::optional<DirectProfit> producer_direct;
    std::optional<ProducerStructural> producer_structural;
    std::optional<DirectProfit> consumer_direct;
    std::optional<ConsumerStructural> consumer_structural;

    /// paid when leaving expansion (switch at y_h)
    double h_plus = 10.0;
    /// paid when leaving contraction (switch at y_l)
    double h_minus = 10.0;
    double kappa0 = 3.0;
    double kappa1 = 0.0;

    double mu(Regime r) const { return r == Regime::expansion ? mu_plus : mu_minus; }
    /// cost of switching out of regime r
    double h(Regime r) const { return r == Regime::expansion ? h_plus : h_minus; }
};

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws ModelError naming the first violated invariant.
void validate(const ModelParams& p);

struct QuadProfit {
    double g0 = 0.0;
    double g1 = 0.0;
    double g2 = 0.0;
    double x1 = 0.0;
    double x2 = 0.0;
    double xbar = 0.0;
    double peak = 0.0;

    double operator()(double x) const { return g0 + x * (g1 + x * g2); }
    double deriv(double x) const { return g1 + 2.0 * g2 * x; }
};

QuadProfit make_profit(double g0, double g1, double g2);
QuadProfit make_profit(const DirectProfit& d);

/// (producer, consumer)
std::pair<QuadProfit, QuadProfit> build_profits(const ModelParams& p);

/// Roots of -beta + mu z + sigma^2 z^2 / 2 = 0, returned as (theta1 > 0, theta2 < 0).
std::pair<double, double> char_roots(double mu, const ModelParams& p);

/// (q2, q1, q0) of the quadratic solving -beta w + mu w' + sigma^2 w'' / 2 + profit = 0.
std::array<double, 3> particular_solution(const QuadProfit& profit, double mu, const ModelParams& p);

struct RegimeFundamentals {
    Regime regime = Regime::expansion;
    double mu = 0.0;
    double theta1 = 0.0;
    double theta2 = 0.0;
    std::array<double, 3> particular{};
};

RegimeFundamentals fundamentals(const QuadProfit& profit, Regime r, const ModelParams& p);

double ode_operator(double w, double wx, double wxx, double x, double mu, const QuadProfit& profit,
                    const ModelParams& p);

/// Table 2 parameterisation.
ModelParams table2_params();
/// Case-study parameterisation (structural profits).
ModelParams case_study_params();

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& msg, std::string key, int line)
        : std::runtime_error(msg), key_(std::move(key)), line_(line) {}
    const std::string& key() const { return key_; }
    int line() const { return line_; }

private:
    std::string key_;
    int line_;
};

/// Sectioned key = value text: [market], [producer], [consumer], [costs].
ModelParams parse_config(const std::string& text);
ModelParams load_config(const std::string& path);
std::string to_config(const ModelParams& p);

}  // namespace cpgame
