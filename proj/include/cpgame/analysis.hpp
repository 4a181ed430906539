#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpgame/dynamics.hpp"
#include "cpgame/equilibrium.hpp"

namespace cpgame {

/// Exit codes shared by the CLI subcommands.
enum ExitCode : int { exit_ok = 0, exit_input = 1, exit_no_convergence = 2, exit_verification = 3 };

/// Thrown for unreadable inputs, unwritable outputs and malformed requests (exit code 1).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 17 significant digits, so the text re-parses to the same double; "inf", "-inf" or "nan" otherwise.
std::string fmt17(double v);

// ---- CSV emitters; all quantities carry their unit in the header ----

/// Long format: player, regime, entry, value. Round-trips bit-exactly through parse_thresholds_csv.
std::string thresholds_csv(const StrategyPair& s);
StrategyPair parse_thresholds_csv(const std::string& text);

std::string diagnostics_csv(const Diagnostics& d);
std::string history_csv(const EquilibriumResult& e);
/// Values of both players in both regimes on an even grid covering the thresholds.
std::string value_dump_csv(const EquilibriumResult& e, int points = 401);
std::string path_csv(const PathRecord& rec);
std::string events_csv(const PathRecord& rec);
std::string density_csv(const Density& d);
std::string stats_csv(const LongRunStats& s);
std::string chain_csv(const JumpChain& c);

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

/// Exit code for a solved equilibrium: 0 verified, 2 not converged, 3 verification failed.
int solve_exit_code(const EquilibriumResult& e, const Diagnostics& d);

struct SolveOutcome {
    EquilibriumResult eq;
    Diagnostics diagnostics;
    int exit_code = exit_ok;
    std::vector<std::filesystem::path> files;
};

/// Solves one branch and writes thresholds.csv, values.csv, verification.csv, history.csv and summary.json.
SolveOutcome run_solve(const ModelParams& p, Branch branch, Mode mode, const std::filesystem::path& out);

enum class StatsSource { none, exact, simulated };
StatsSource parse_stats_source(const std::string& s);
const char* name(StatsSource s);

struct SweepSpec {
    /// sigma, h0, p1, kappa0, mu_plus or mu_minus
    std::string parameter;
    std::vector<double> grid;
    Branch branch = Branch::generic;
    Mode mode = Mode::async;
    StatsSource stats = StatsSource::exact;
    SimConfig sim;
    /// 0 means hardware concurrency
    int threads = 0;
};

/// Throws InputError for unknown names, unsupported profit forms or a grid that is not strictly increasing.
void validate_sweep(const ModelParams& p, const SweepSpec& spec);
void set_parameter(ModelParams& p, const std::string& name, double v);

struct SweepRow {
    std::size_t index = 0;
    double value = 0.0;
    EquilibriumResult eq;
    Diagnostics diagnostics;
    LongRunStats stats;
    bool has_stats = false;
    int status = exit_ok;
    /// empty when the point solved and verified
    std::string failure;
    /// why long-run statistics are missing, if they are
    std::string stats_note;
};

/// One row per grid value in grid order; failed points are kept and carry a failure message.
std::vector<SweepRow> run_sweep(const ModelParams& p, const SweepSpec& spec);
std::string sweep_csv(const SweepSpec& spec, const std::vector<SweepRow>& rows);
/// Writes sweep.csv and summary.json; returns 0 when every point verified, else the worst point status.
int write_sweep_outputs(const std::filesystem::path& out, const SweepSpec& spec, const std::vector<SweepRow>& rows);

/// Samples of the stationary price law with weights summing to one.
struct StationarySample {
    std::vector<double> x;
    std::vector<double> w;
};

/// Grid points of simulated paths after burn-in, equally weighted.
StationarySample simulated_sample(const EquilibriumResult& e, const SimConfig& cfg, int stride = 10);
/// Quadrature nodes of the exact stationary density over the effective price band.
StationarySample exact_sample(const EquilibriumResult& e, int nodes = 4001);

struct IntegrationPoint {
    double lambda = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    /// variance from per-sample pi_lambda, for the mixture identity check
    double var_direct = 0.0;
};

struct IntegrationCurve {
    double p1 = 0.0;
    int status = exit_ok;
    std::string failure;
    EquilibriumType type = EquilibriumType::unclassified;
    double e_pi_p = 0.0;
    double e_pi_c = 0.0;
    double var_pi_p = 0.0;
    double var_pi_c = 0.0;
    double cov = 0.0;
    /// closed-form risk minimiser clamped to [0, 1]
    double lambda_star = 0.0;
    /// argmin of sd on the lambda grid
    double lambda_star_grid = 0.0;
    std::vector<IntegrationPoint> points;
};

/// Moments of pi_lambda = lambda pi_c + (1 - lambda) pi_p over a sample.
IntegrationCurve integration_curve(const ModelParams& p, const StationarySample& s, const std::vector<double>& lambdas);

/// Re-solves the equilibrium at every p1 and estimates phi* by simulation or the exact density.
std::vector<IntegrationCurve> integration_study(const ModelParams& p, const std::vector<double>& p1_grid,
                                                const std::vector<double>& lambdas, Branch branch, StatsSource source,
                                                const SimConfig& cfg);
std::string integration_csv(const std::vector<IntegrationCurve>& curves);
std::string lambda_star_csv(const std::vector<IntegrationCurve>& curves);
/// Writes integration.csv, lambda_star.csv and summary.json; returns the worst point status.
int write_integration_outputs(const std::filesystem::path& out, const std::vector<IntegrationCurve>& curves);

/// Collates the artifacts of a solve, sweep or integration run into one text summary.
/// Throws InputError naming the expected files when none are present.
std::string run_report(const std::filesystem::path& dir);

/// Evenly spaced grid "lo:hi:n" or comma list; throws InputError when malformed.
std::vector<double> parse_grid(const std::string& text);

}  // namespace cpgame
