#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ktl/diagnostics.hpp"
#include "ktl/drift.hpp"
#include "ktl/experiments.hpp"
#include "ktl/noise.hpp"
#include "ktl/solver.hpp"

namespace ktl {

struct InitialSpec {
    /// constant | mode | gaussian | file
    std::string kind = "mode";
    double amplitude = 1.0;
    std::vector<int> k{1, 0};
    bool sine = true;
    std::vector<double> center;  ///< gaussian; empty = domain centre
    double width = 0.5;
    std::string file;            ///< snapshot base path
    void validate(int d) const;
};

ScalarField make_initial(const InitialSpec& spec, const Grid& grid);

enum class ExperimentKind { evolve, zero_noise, ldp_tail, rate_fn, variational, dissipation_ldp };
std::string to_string(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string& s);

struct DictionarySpec {
    int n_spatial = 1;
    std::vector<Profile> profiles{Profile::constant};
    double budget = 1e300;
};

struct EvolveBlock {
    bool fields = true;
    std::vector<double> p_list{2.0, 4.0, kInf};
    std::vector<double> s_list{-1.0, 0.0, 1.0};
    bool martingale = false;
    bool dissipation = false;
    int time_bins = 16;
    int space_blocks = 8;
};

struct ZeroNoiseBlock {
    std::vector<double> eps{0.4, 0.2, 0.1};
    int M = 8;
    Metric metric = Metric::d_scriptE;
    std::vector<double> deltas{0.0};
    double ode_dt = 1e-2;
    DistanceOptions distance;
};

struct TailBlock {
    std::vector<double> eps{0.4, 0.3, 0.2};
    int M = 256;
    DeviationEvent::Kind event = DeviationEvent::Kind::h_minus1_sup;
    double delta = 0.1;
    int p = 4;
    double ode_dt = 1e-2;
    DictionarySpec dict;
    std::vector<double> tilt;  ///< dictionary coefficients; empty = naive
};

struct RateBlock {
    DictionarySpec dict;
    std::vector<double> target;  ///< dictionary coefficients of the generating control
    int snapshots = 6;
    double ode_dt = 2.5e-2;
    double penalty = 1e4;
    int p = 4;
    double tolerance = 1e-2;
    int max_evals = 3000;
    int restarts = 2;
    double initial_step = 0.5;
};

struct VariationalBlock {
    double epsilon = 0.3;
    int M = 256;
    /// constant | clipped_distance
    std::string functional = "clipped_distance";
    double value = 0.0;  ///< constant functional
    double sup_h = 1.0;
    double ode_dt = 1e-2;
    DictionarySpec dict;
    std::vector<std::vector<double>> candidates;
};

struct DissipationBlock {
    std::vector<double> eps{0.4, 0.3, 0.2};
    int M = 256;
    /// threshold as a fraction of ||rho0||^2
    double delta_fraction = 0.05;
    int time_bins = 4;
    int space_blocks = 4;
};

struct RunConfig {
    Grid grid;
    InitialSpec initial;
    NoiseSpec noise;
    DriftSpec drift;
    SolverConfig solver;
    ExperimentKind kind = ExperimentKind::evolve;
    EvolveBlock evolve;
    ZeroNoiseBlock zero_noise;
    TailBlock ldp_tail;
    RateBlock rate_fn;
    VariationalBlock variational;
    DissipationBlock dissipation_ldp;
    std::string out = "out";
    std::uint64_t seed = 0;

    /// Range checks against every module precondition; throws InputError.
    void validate() const;
};

/// Schema-checked conversion; unknown keys and wrong types are InputErrors.
RunConfig config_from_document(const nlohmann::ordered_json& doc);
RunConfig load_config(const std::string& path);
/// Fully resolved canonical document (all defaults spelled out).
nlohmann::ordered_json config_document(const RunConfig& cfg);
/// SHA-256 of the canonical document, hex.
std::string config_hash(const RunConfig& cfg);

/// Expands "dotted.key=v1,v2,..." sweeps into the cartesian product of child
/// documents. Values are parsed as TOML scalars.
std::vector<nlohmann::ordered_json> expand_sweep(const nlohmann::ordered_json& doc,
                                                 const std::vector<std::string>& sweeps);

Setup make_setup(const RunConfig& cfg);
ControlDictionary make_dictionary(const DictionarySpec& spec, const NoiseBasis& basis, double T);

} // namespace ktl
