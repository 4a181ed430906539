#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cpgame/core_model.hpp"
#include "cpgame/equilibrium.hpp"
#include "cpgame/piecewise_value.hpp"

namespace cpgame {

/// Probability that x + mu t + sigma W_t hits a before b. Infinite endpoints are allowed.
double hitting_prob(double x, double a, double b, double mu, double sigma);
/// Expected first exit time from (a, b); infinite when the exit is not certain.
double expected_exit_time(double x, double a, double b, double mu, double sigma);
/// Expected integral of f(X_t) up to the exit from (a, b), by Green's-function quadrature.
double occupation_integral(const std::function<double(double)>& f, double x, double a, double b, double mu,
                           double sigma);
/// Green's function density g(x, y) of the killed process on a finite interval.
double green_density(double x, double y, double a, double b, double mu, double sigma);

/// (lower, upper) barrier per regime once producer impulses and consumer switches are combined.
std::array<std::pair<double, double>, 2> effective_bands(const StrategyPair& s);
/// Middle of the regime's band, or one unit inside its only finite barrier.
double band_start(const StrategyPair& s, Regime r);

enum class EventKind : std::uint8_t { impulse_up, impulse_down, switch_to_plus, switch_to_minus };
const char* name(EventKind k);

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::impulse_up;
    double pre = 0.0;
    double post = 0.0;
    /// regime in force just before the event
    Regime regime = Regime::expansion;
};

struct SimOptions {
    double dt = 1.0 / 3650.0;
    /// detect barrier crossings between grid points with the Brownian-bridge probability
    bool bridge = false;
    /// keep every n-th grid point in the record (events are always kept)
    int record_stride = 1;
};

struct PathRecord {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<Regime> regime;
    std::vector<Event> events;
    std::vector<std::string> warnings;
};

/// Per-path generator seed derived from a master seed.
std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path);

PathRecord simulate_path(const ModelParams& p, const StrategyPair& s, double x0, Regime r0, double horizon,
                         std::uint64_t seed, const SimOptions& opt = {});
PathRecord simulate_path(const EquilibriumResult& e, double x0, Regime r0, double horizon, std::uint64_t seed,
                         const SimOptions& opt = {});

/// Configuration for multi-path simulations.
struct SimConfig {
    int paths = 8;
    double horizon = 5000.0;
    /// negative means 50 / beta
    double burn_in = -1.0;
    double dt = 1.0 / 3650.0;
    bool bridge = false;
    std::uint64_t seed = 1;
    /// 0 means hardware concurrency
    int threads = 0;
    /// NaN means the middle of the starting regime's band
    double x0 = std::numeric_limits<double>::quiet_NaN();
    Regime r0 = Regime::expansion;
    int bins = 100;
};

struct LongRunStats {
    double mean = 0.0;
    double var = 0.0;
    double e_pi_p = 0.0;
    double e_pi_c = 0.0;
    double apoo_p = 0.0;
    double apoo_c = 0.0;
    /// consumer regime switches per year
    double switches_per_year = 0.0;
    /// producer impulses per year
    double impulses_per_year = 0.0;
    double rho_plus = 0.0;
    double years = 0.0;
    std::vector<std::string> warnings;
};

struct Density {
    double lo = 0.0;
    double hi = 0.0;
    /// bin_left, bin_right, mass, mass_plus, mass_minus; mass_plus + mass_minus = mass
    std::vector<double> edges;
    std::vector<double> mass;
    std::vector<double> mass_plus;
    std::vector<double> mass_minus;
    /// Gaussian kernel smoothing of the histogram at the bin centres
    std::vector<double> centres;
    std::vector<double> smooth;
    std::vector<double> smooth_plus;
    std::vector<double> smooth_minus;
    double bandwidth = 0.0;
};

struct LongRun {
    LongRunStats stats;
    Density density;
};

/// One simulation pass producing both the long-run statistics and the stationary histogram.
LongRun simulate_long_run(const ModelParams& p, const StrategyPair& s, const SimConfig& cfg);
LongRun simulate_long_run(const EquilibriumResult& e, const SimConfig& cfg);
LongRunStats long_run_stats(const EquilibriumResult& e, const SimConfig& cfg);
Density stationary_density(const EquilibriumResult& e, const SimConfig& cfg);

struct PayoffEstimate {
    double mean = 0.0;
    double se = 0.0;
    int paths = 0;
};

struct PayoffOracle {
    PayoffEstimate producer;
    PayoffEstimate consumer;
};

/// Discounted realised payoffs of both players from (x0, r0); horizon defaults to 40 / beta when cfg.horizon <= 0.
PayoffOracle discounted_payoff(const ModelParams& p, const StrategyPair& s, double x0, Regime r0,
                               const SimConfig& cfg);

enum class ChainState : std::uint8_t { S_plus, S_minus, I_l_minus, I_h_minus, I_l_plus, I_h_plus };
constexpr std::array<ChainState, 6> kChainStates{ChainState::S_plus,    ChainState::S_minus,  ChainState::I_l_minus,
                                                 ChainState::I_h_minus, ChainState::I_l_plus, ChainState::I_h_plus};
const char* name(ChainState s);
inline int index(ChainState s) { return static_cast<int>(s); }
Regime regime_of(ChainState s);
/// Chain state entered by a simulated event.
ChainState state_of(const Event& e);

struct JumpChain {
    std::array<std::array<double, 6>, 6> P{};
    std::array<double, 6> pi{};
    /// expected sojourn (years) after entering each state
    std::array<double, 6> zeta{};
    /// starting price after the event
    std::array<double, 6> start{};
    /// false when the state's target is absent and its row was copied
    std::array<bool, 6> defined{};
    /// max |(pi P - pi)_j|
    double stationarity_residual = 0.0;
    std::vector<std::string> diagnostics;
};

/// Stationary law over the states reachable from (x0, r0); x0 = NaN uses the band middle.
JumpChain build_jump_chain(const ModelParams& p, const StrategyPair& s, Regime r0 = Regime::expansion,
                           double x0 = std::numeric_limits<double>::quiet_NaN());
JumpChain build_jump_chain(const EquilibriumResult& e);

/// (rho_plus, rho_minus)
std::pair<double, double> regime_occupation(const JumpChain& c);

struct SwitchTime {
    /// first-step analysis on the chain
    double first_step = 0.0;
    /// closed form dividing by the I_h+ -> S- transition; NaN when I_h+ is not a state of the chain
    double literal = 0.0;
    /// the same closed form dividing by the I_l+ -> S- transition
    double corrected = 0.0;
};

/// Expected time until the first switch into contraction, from (x0, expansion).
SwitchTime expected_switch_time(const ModelParams& p, const StrategyPair& s, double x0);
SwitchTime expected_switch_time(const EquilibriumResult& e, double x0);

/// Long-run moments from the chain and occupation integrals (no simulation).
LongRunStats exact_long_run_stats(const ModelParams& p, const StrategyPair& s, Regime r0 = Regime::expansion);
LongRunStats exact_long_run_stats(const EquilibriumResult& e);
/// Exact stationary density (total, plus, minus) at the given points.
std::array<std::vector<double>, 3> exact_density(const ModelParams& p, const StrategyPair& s,
                                                 const std::vector<double>& xs, Regime r0 = Regime::expansion);

}  // namespace cpgame
