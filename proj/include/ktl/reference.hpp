#pragma once

#include <vector>

#include "ktl/field.hpp"
#include "ktl/solver.hpp"
#include "ktl/space_time.hpp"

namespace ktl {

/// Backward foot points X(x) of the grid nodes over [t_from -> t_to]:
/// the position at t_to that the flow carries to x at t_from.
struct FlowMap {
    Grid grid;
    double t_from = 0.0;
    double t_to = 0.0;
    /// Unwrapped coordinates, foot[a][node].
    std::vector<std::vector<double>> foot;
};

/// Deterministic RK4 characteristics of u from t_from to t_to (either
/// direction), started at the grid nodes.
FlowMap characteristics(const SpaceTimeField& u, double t_from, double t_to, double ode_dt);

/// max over nodes of |det DX - 1| using spectral derivatives of the periodic
/// displacement X - x.
double jacobian_deviation(const FlowMap& X);

/// max distance in grid units between x and Y(X(x)), where Y is integrated
/// back from X's endpoint through the composition by cubic interpolation.
double round_trip_error(const FlowMap& there, const FlowMap& back);

struct ReferenceRun {
    Trajectory traj;                  ///< finest-delta solution, origin "characteristics"
    std::vector<double> deltas;
    std::vector<double> cauchy;       ///< sup_t L2 gap between successive deltas
    bool non_cauchy = false;          ///< increments failed to decrease
};

/// Renormalized (DiPerna-Lions) reference: for each delta in the decreasing
/// schedule, rho^delta_t = rho0 o X^delta_t with X^delta the RK4 backward
/// characteristics of mollify(u, delta). Snapshots at `times` (0 included).
ReferenceRun renormalized_reference(const ScalarField& rho0, const SpaceTimeField& u, const std::vector<double>& deltas,
                                    double ode_dt, const std::vector<double>& times);

/// Pathwise solution rho0 o X^{-1} for the truncated noise, from backward
/// stochastic characteristics driven by the trajectory's logged increments
/// (Heun per step). Snapshot times follow the trajectory.
Trajectory stochastic_flow_oracle(const Trajectory& traj);

} // namespace ktl
