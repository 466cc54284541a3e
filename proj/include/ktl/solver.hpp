#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ktl/control.hpp"
#include "ktl/field.hpp"
#include "ktl/noise.hpp"
#include "ktl/space_time.hpp"

namespace ktl {

enum class Scheme { ito_euler, strat_midpoint };
enum class Transport { spectral, semi_lagrangian };
enum class LaplacianMode { integrating_factor, explicit_euler };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);
std::string to_string(Transport t);
Transport transport_from_string(const std::string& s);

struct SolverConfig {
    double epsilon = 0.0;
    double kappa = 0.0;
    double dt = 1e-3;
    double T = 1.0;
    Scheme scheme = Scheme::ito_euler;
    Transport transport = Transport::spectral;
    LaplacianMode laplacian = LaplacianMode::integrating_factor;
    std::uint64_t seed = 0;
    int record_every = 100;
    bool log_coefficients = true;
    /// Itô spectral runs only: accumulate the martingale part of the energy
    /// balance while stepping.
    bool track_martingale = false;
    /// Stratonovich step: solve the implicit midpoint equation (exactly
    /// L2-conservative for the dealiased transport) or, when false, take a
    /// single Heun corrector pass.
    bool strat_implicit = true;
    /// Relative residual and iteration cap of the midpoint solve.
    double strat_tol = 1e-13;
    int strat_iterations = 500;

    void validate() const;
    int steps() const;
};

/// Everything an evolution depends on besides the solver settings.
struct Problem {
    ScalarField rho0;
    SpaceTimeField drift;
    std::shared_ptr<const NoiseBasis> basis;
    /// Applied as a shift of the noise coefficients when epsilon > 0 and as a
    /// drift field when epsilon = 0.
    Control control;
};

struct Trajectory {
    std::shared_ptr<const Problem> problem;
    SolverConfig cfg;
    std::string origin = "spectral";
    std::vector<double> times;
    std::vector<ScalarField> snapshots;
    int nsteps = 0;
    std::size_t nmodes = 0;
    /// nsteps x nmodes effective increments (control shift included).
    std::vector<double> coeff_log;
    /// Girsanov log density of the untilted law w.r.t. the sampling law.
    double log_lr = 0.0;
    /// Energy removed by the martingale part (track_martingale runs).
    double martingale_term = 0.0;
    bool has_martingale = false;

    bool has_log() const { return nmodes == 0 || coeff_log.size() == static_cast<std::size_t>(nsteps) * nmodes; }
    const double* increments(int step) const;
    const ScalarField& final_field() const { return snapshots.back(); }
};

/// Optional externally supplied noise path.
struct EvolveOptions {
    /// nsteps x nmodes effective increments; replaces sampling when non-null.
    const std::vector<double>* increments = nullptr;
};

/// One time step of the chosen scheme on raw spectra or point values.
class StepKernel {
public:
    StepKernel(const Problem& pb, const SolverConfig& cfg);

    bool spectral() const { return cfg_.transport == Transport::spectral; }
    /// Spectral transport: raw DFT in, raw DFT out. dw may be null without noise.
    void advance_spectral(int n, const double* dw, const cplx* in, cplx* out);
    /// Itô spectral step split into the part even (p0) and odd (p1) in dw.
    void advance_ito_split(int n, const double* dw, const cplx* in, cplx* p0, cplx* p1);
    /// Semi-Lagrangian transport on point values.
    void advance_semi_lagrangian(int n, const double* dw, const double* in, double* out);

    const Grid& grid() const { return grid_; }
    /// Transport velocity (drift plus materialized control) at time t.
    void velocity(double t, std::vector<std::vector<double>>& u);
    void noise_physical(const double* dw, std::vector<std::vector<double>>& w);

private:
    void transport_term(double t, const std::vector<std::vector<double>>& w, const cplx* rho, cplx* out, bool with_drift,
                        bool with_noise);
    /// Adjoint of the transport term: -A y - P(dt div u * y).
    void transport_adjoint(double t, const std::vector<std::vector<double>>& w, const cplx* y, cplx* out);
    void midpoint_solve(double t, const cplx* in, cplx* out);

    SolverConfig cfg_;
    Grid grid_;
    std::shared_ptr<const SpectralTables> tab_;
    SpaceTimeField u_field_;
    bool stationary_ = true;
    std::vector<std::vector<double>> u_cache_;
    std::unique_ptr<NoiseSynth> synth_;
    std::vector<double> mult_;  // Laplacian multiplier per mode
    std::vector<double> lap_;   // -|xi|^2 (explicit mode)
    // scratch
    std::vector<cplx> sc_a_, sc_b_, sc_c_, h1_, star_;
    std::vector<double> prod_;
    // divergence of each drift term (empty when the drift is solenoidal)
    std::vector<std::vector<double>> div_terms_;
    std::vector<cplx> cg_x_, cg_r_, cg_z_, cg_p_, cg_q_;
    std::vector<std::vector<double>> grad_, u_, w_;
    std::vector<std::vector<cplx>> wspec_;
};

/// Precondition checks: CFL, explicit-diffusion bound, noise modes below the
/// grid Nyquist. Throws NumericalError.
void check_stability(const Problem& pb, const SolverConfig& cfg);

Trajectory evolve(std::shared_ptr<const Problem> pb, const SolverConfig& cfg, const EvolveOptions& opt = {});
Trajectory evolve(const ScalarField& rho0, const SpaceTimeField& b, const Control& g,
                  std::shared_ptr<const NoiseBasis> basis, const SolverConfig& cfg);

/// Single steps with stationary b, g (g may be an empty field).
ScalarField step_ito(const ScalarField& rho, const VectorField& b, const VectorField& g, const NoiseBasis& basis,
                     const SolverConfig& cfg, std::mt19937_64& rng);
ScalarField step_ito(const ScalarField& rho, const VectorField& b, const VectorField& g, const NoiseBasis& basis,
                     const SolverConfig& cfg, const std::vector<double>& dw);
ScalarField step_stratonovich(const ScalarField& rho, const VectorField& b, const VectorField& g,
                              const NoiseBasis& basis, const SolverConfig& cfg, std::mt19937_64& rng);
ScalarField step_stratonovich(const ScalarField& rho, const VectorField& b, const VectorField& g,
                              const NoiseBasis& basis, const SolverConfig& cfg, const std::vector<double>& dw);

/// Residual of the weak (Itô) formulation against phi at each snapshot time,
/// replaying the logged increments.
std::vector<double> weak_residual(const Trajectory& traj, const ScalarField& phi);

/// Sum consecutive groups of `factor` steps of a coefficient log.
std::vector<double> coarsen_increments(const std::vector<double>& log, std::size_t nmodes, int factor);

/// Re-evolve every step and hand (n, rho_n, rho_{n+1}) to a visitor; the
/// trajectory must carry its coefficient log.
void replay(const Trajectory& traj,
            const std::function<void(int, const ScalarField&, const ScalarField&)>& visit);

} // namespace ktl
