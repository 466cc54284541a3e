#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ktl/field.hpp"
#include "ktl/noise.hpp"
#include "ktl/solver.hpp"

namespace ktl {

struct EnergyLedger {
    std::vector<double> times;
    std::vector<double> l2_squared;
    std::vector<double> p_list;
    std::vector<double> s_list;
    std::vector<std::vector<double>> lp;  ///< lp[i][snapshot] for p_list[i]
    std::vector<std::vector<double>> hs;  ///< hs[i][snapshot] for s_list[i]
    /// Energy removed by the martingale part, rebuilt from the coefficient log
    /// (Itô spectral trajectories; zero otherwise).
    double martingale_term = 0.0;
    bool has_martingale = false;
};

/// Norm series over the snapshots. With with_martingale the run is replayed
/// from its coefficient log to accumulate the martingale term.
EnergyLedger energy_ledger(const Trajectory& traj, const std::vector<double>& p_list,
                           const std::vector<double>& s_list, bool with_martingale = false);

/// Martingale part of the discrete energy balance of an Itô spectral run:
/// -sum_n 2 <P0_n, P1_n>, with P1_n the part of step n odd in the increment.
double martingale_accumulation(const Trajectory& traj);

struct CellPartition {
    int time_bins = 16;
    int space_blocks = 8;  ///< per axis; spatial cells are space_blocks^d
};

struct DissipationEstimate {
    int time_bins = 0;
    int space_blocks = 0;
    int d = 2;
    std::vector<double> bin_edges;  ///< time_bins + 1 entries
    std::vector<double> cells;      ///< [bin][spatial cell], spatial index row-major
    double total = 0.0;
    double l2_deficit = 0.0;        ///< ||rho_0||^2 - ||rho_T||^2
    double martingale_term = 0.0;
    double identity_residual = 0.0; ///< total - (deficit - martingale_term)
    bool negative = false;
    double worst_cell = 0.0;
    double tv_proxy = 0.0;
    double at(int bin, std::size_t cell) const;
};

/// Discrete dissipation measure of an Itô spectral run with solenoidal drift:
/// residual of the local energy balance tested against a smooth partition of
/// unity (cos^2 bumps per axis) and accumulated over time bins.
DissipationEstimate dissipation_measure(const Trajectory& traj, const CellPartition& part = {});

/// epsilon^2 int_0^T ||rho_s||^2_{H^{1-alpha-delta}} ds, trapezoid over the snapshots.
double regularization_functional(const Trajectory& traj, double epsilon, double alpha, double delta);
double regularization_functional(const std::vector<double>& times, const std::vector<ScalarField>& snaps,
                                 double epsilon, double alpha, double delta);

/// Lattice points in physical units of a box of side L.
struct Lattice {
    int d = 2;
    double L = 2.0 * 3.14159265358979323846;
    std::vector<Index3> points;
};

/// Double sum over the lattice of w(xi-eta) |P_perp(xi-eta) xi|^2 a(xi) (psi(eta) - psi(xi)).
/// Weights: (2 pi)^{-d/2} <xi-eta>^{-(d+2 alpha)} (continuum kernel) or, with
/// a basis, theta_k^2 for k = xi-eta in the basis (0 otherwise).
double kernel_transfer(const Lattice& lat, const std::vector<double>& a, const std::vector<double>& psi, double alpha,
                       const NoiseBasis* basis = nullptr);
/// Same on a grid's full lattice; a and psi indexed by flat spectral position.
double kernel_transfer(const ModeEnergy& a, const std::vector<double>& psi, double alpha,
                       const NoiseBasis* basis = nullptr);

enum class Metric { d_E, d_scriptE };
std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);

struct DistanceOptions {
    double p = 4.0;      ///< second exponent of d_scriptE
    int n_max = 8;       ///< terms of the H^{-1/n} series
    int probe_kmax = 2;  ///< weak-topology probe: all modes with |k| <= probe_kmax
};

struct PathDistance {
    double value = 0.0;
    bool resampled = false;
};

PathDistance path_distance(const std::vector<double>& ta, const std::vector<ScalarField>& a,
                           const std::vector<double>& tb, const std::vector<ScalarField>& b, Metric metric,
                           const DistanceOptions& opt = {});
PathDistance path_distance(const Trajectory& a, const Trajectory& b, Metric metric, const DistanceOptions& opt = {});
/// sup_t max_j |<a_t - b_t, phi_j>| over the orthonormal probe dictionary.
double weak_probe(const ScalarField& diff, int kmax);

/// Long-format exports: rows (time, quantity, value[, cell]).
std::string ledger_csv(const EnergyLedger& l, const std::string& config_hash);
nlohmann::ordered_json ledger_json(const EnergyLedger& l);
std::string dissipation_csv(const DissipationEstimate& e, const std::string& config_hash);
nlohmann::ordered_json dissipation_json(const DissipationEstimate& e);

} // namespace ktl
