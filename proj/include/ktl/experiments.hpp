#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ktl/control.hpp"
#include "ktl/diagnostics.hpp"
#include "ktl/solver.hpp"
#include "ktl/stats.hpp"

namespace ktl {

/// Inputs shared by every ensemble: initial datum, drift, noise basis.
struct Setup {
    ScalarField rho0;
    SpaceTimeField drift;
    std::shared_ptr<const NoiseBasis> basis;
};

/// Path i of an ensemble uses seed stream_seed(master, i) at every epsilon
/// (common random numbers across the grid).
std::uint64_t path_seed(std::uint64_t master, std::size_t i);

// ---------------------------------------------------------------- zero noise

struct ZeroNoiseConfig {
    std::vector<double> eps_grid;
    int M = 64;
    Metric metric = Metric::d_scriptE;
    DistanceOptions distance;
    SolverConfig solver;                ///< epsilon is overwritten per row
    std::vector<double> deltas{0.0};    ///< mollification schedule of the reference
    double ode_dt = 1e-2;
    std::uint64_t seed = 1;
};

struct ZeroNoiseRow {
    double epsilon = 0.0;
    Summary stats;
    std::vector<double> distances;
};

struct ConvergenceReport {
    Metric metric = Metric::d_scriptE;
    std::vector<ZeroNoiseRow> rows;
    bool strictly_decreasing = false;   ///< medians strictly decrease along the grid
    bool non_increasing = false;
    double final_over_initial = 0.0;
    std::vector<double> reference_cauchy;
    bool reference_non_cauchy = false;
};

ConvergenceReport zero_noise_study(const Setup& s, const ZeroNoiseConfig& cfg);

// ------------------------------------------------------------------ Girsanov

struct TiltedSample {
    Trajectory traj;
    double log_lr = 0.0;  ///< log d(untilted)/d(tilted) along the path
};

/// Evolve with the control applied as a shift of the noise coefficients and
/// return the Girsanov log density -(1/eps) int <h, dW> - (1/(2 eps^2)) int |h|^2.
TiltedSample girsanov_tilted_sampler(const Setup& s, const Control& g, double epsilon, SolverConfig cfg,
                                     double budget = 1e300);

// ---------------------------------------------------------------- tail / LDP

using Event = std::function<bool(const Trajectory&)>;

/// {sup_t ||rho_t - ref_t||_{H^{-1}} > delta} (or d_scriptE >= delta).
struct DeviationEvent {
    enum class Kind { h_minus1_sup, d_scriptE, whole_space, empty } kind = Kind::h_minus1_sup;
    double delta = 0.0;
    std::vector<double> ref_times;
    std::vector<ScalarField> ref;
    double p = 4.0;

    double distance(const Trajectory& t) const;
    bool operator()(const Trajectory& t) const;
    static std::string to_string(Kind k);
    static Kind kind_from_string(const std::string& s);
};

struct TailRow {
    double epsilon = 0.0;
    std::string estimator = "naive";
    int M = 0;
    int hits = 0;
    double p_hat = 0.0;
    double stderr_ = 0.0;
    double eps2_log_p = 0.0;     ///< -inf when no hits
    double eps2_log_p_err = 0.0;
    double n_eff = 0.0;
    bool zero_hits = false;
    double upper95 = 0.0;        ///< 1 - 0.05^{1/M} on zero hits
    std::string flag;
};

struct TailEstimate {
    std::vector<TailRow> rows;
    std::vector<std::vector<double>> statistics;  ///< per-row event statistic per path
};

struct TailConfig {
    std::vector<double> eps_grid;
    int M = 256;
    SolverConfig solver;
    std::uint64_t seed = 1;
    const Control* tilt = nullptr;  ///< self-normalized importance sampling when set
    double budget = 1e300;
};

/// Rows from per-path indicators and (optional) log weights.
TailRow tail_row(double epsilon, const std::vector<char>& hit, const std::vector<double>* log_w);

TailEstimate ldp_tail_estimate(const Setup& s, const Event& event, const TailConfig& cfg,
                               const std::function<double(const Trajectory&)>& statistic = nullptr);

// ------------------------------------------------------------ rate function

struct RateConfig {
    ControlDictionary dict;
    std::vector<double> times;     ///< snapshot times of target and controlled paths
    double ode_dt = 2.5e-2;
    double penalty = 1e4;
    double p = 4.0;
    double tolerance = 1e-2;       ///< residual tolerance (d_scriptE units)
    int max_evals = 3000;
    int restarts = 2;
    double initial_step = 0.5;
};

struct RateFunctionReport {
    double value = 0.0;            ///< (1/2)||g*||^2
    double residual = 0.0;         ///< d_scriptE(path(g*), target)
    double objective = 0.0;
    std::vector<double> theta;
    bool converged = false;
    bool residual_ok = false;
    bool zero_control_best = false;
    int evaluations = 0;
    double penalty = 0.0;
};

/// Deterministic controlled path: characteristics of b + g.
std::vector<ScalarField> controlled_path(const Setup& s, const Control& g, const std::vector<double>& times, double ode_dt);

RateFunctionReport rate_function_eval(const std::vector<ScalarField>& target, const Setup& s, const RateConfig& cfg);

// -------------------------------------------------------------- variational

using Functional = std::function<double(const Trajectory&)>;

struct VariationalConfig {
    double epsilon = 0.3;
    int M = 256;
    SolverConfig solver;
    ControlDictionary dict;
    std::vector<std::vector<double>> candidates;  ///< dictionary parameters; g = 0 is always added
    double sup_h = 1.0;                           ///< bound on |h|
    std::uint64_t seed = 1;
};

struct VariationalReport {
    double lhs = 0.0, lhs_se = 0.0;
    double rhs = 0.0, rhs_se = 0.0;
    double gap = 0.0;              ///< rhs - lhs
    double n_eff = 0.0;
    bool degenerate = false;       ///< n_eff < 10
    std::size_t best = 0;
    std::vector<double> candidate_values, candidate_se, candidate_costs;
    bool ordering_ok = false;      ///< rhs >= lhs - 3 sigma
};

VariationalReport variational_laplace(const Setup& s, const Functional& h, const VariationalConfig& cfg);

// ---------------------------------------------------------- dissipation LDP

struct DissipationLdpConfig {
    std::vector<double> eps_grid;
    int M = 256;
    double delta = 0.0;
    SolverConfig solver;           ///< must be ito_euler, spectral
    CellPartition partition{4, 4};
    std::uint64_t seed = 1;
};

struct DissipationLdpReport {
    TailEstimate tail;
    std::vector<Summary> totals;   ///< distribution of total D per row
    double rho0_norm2 = 0.0;
    bool impossible_event = false; ///< delta > ||rho_0||^2
    bool p_non_increasing = false; ///< along decreasing epsilon
    bool floor_at_smallest = false;
    bool consistent_with_degenerate_rate = false;
    double max_total_over_norm2 = 0.0;
};

DissipationLdpReport dissipation_ldp_check(const Setup& s, const DissipationLdpConfig& cfg);

// ------------------------------------------------------------------ exports

nlohmann::ordered_json to_json(const ConvergenceReport& r);
nlohmann::ordered_json to_json(const TailEstimate& r);
nlohmann::ordered_json to_json(const RateFunctionReport& r);
nlohmann::ordered_json to_json(const VariationalReport& r);
nlohmann::ordered_json to_json(const DissipationLdpReport& r);

} // namespace ktl
