#pragma once

#include <array>
#include <numbers>
#include <random>
#include <vector>

#include <json.hpp>

#include "ktl/field.hpp"
#include "ktl/space_time.hpp"

namespace ktl {

struct NoiseSpec {
    int d = 2;
    double alpha = 0.25;
    int K = 8;
    double L = 2.0 * std::numbers::pi;
    void validate() const;
};

/// One real basis field theta * e * cos(k.x) or theta * e * sin(k.x).
struct NoiseMode {
    Index3 k{0, 0, 0};
    /// Integer polarization direction; k . dir == 0 in exact arithmetic.
    Index3 dir{0, 0, 0};
    std::array<double, 3> e{0, 0, 0};
    double theta = 0.0;
    int pol = 0;
    bool sine = false;
};

struct NoiseBasis {
    NoiseSpec spec;
    std::vector<NoiseMode> modes;
    double Z_K = 0.0;

    std::size_t size() const { return modes.size(); }
    /// Largest |k_a| over the basis (must stay below the grid Nyquist index).
    int max_component() const;
    /// Index of the mode with lattice vector k, polarization pol and phase.
    std::size_t find(const Index3& k, int pol, bool sine) const;
    nlohmann::ordered_json manifest() const;
};

using Mat = std::array<std::array<double, 3>, 3>;

NoiseBasis build_basis(const NoiseSpec& spec);

/// Truncated torus covariance sum_k theta_k^2 e_k (x) e_k cos(k.z).
Mat covariance_eval(const NoiseBasis& basis, const double* z);

struct NoiseIncrement {
    VectorField dW;
    std::vector<double> coefficients;
    double dt = 0.0;
};

NoiseIncrement sample_increment(const NoiseBasis& basis, const Grid& grid, double dt, std::mt19937_64& rng);

/// Field sum_j c_j sigma_j on the grid.
VectorField noise_field(const NoiseBasis& basis, const Grid& grid, const std::vector<double>& c);

/// Sobolev H^{d/2+alpha} proxy (int_0^T ||g_t||^2 dt)^{1/2}, trapezoid in t.
double cameron_martin_norm(const TimeSlices& g, const NoiseSpec& spec);
/// Constant-in-time field over [0,T].
double cameron_martin_norm(const VectorField& g, double T, const NoiseSpec& spec);
/// Factor turning the Sobolev proxy into the exact norm of the truncated
/// noise's reproducing space (fields in the span of the basis).
double cm_scale(const NoiseBasis& basis);

/// Fast synthesis of noise fields for a fixed grid.
class NoiseSynth {
public:
    NoiseSynth(const NoiseBasis& basis, const Grid& grid);
    /// Raw DFT arrays per component (out[a] has grid size, overwritten).
    void spectral(const double* c, std::vector<std::vector<cplx>>& out) const;
    /// Point values at x of sum_j c_j sigma_j into v[0..d).
    void eval_point(const double* c, const double* x, double* v) const;
    const Grid& grid() const { return grid_; }

private:
    struct Entry {
        std::size_t pos_plus, pos_minus;
        double amp[3];
        bool sine;
        Index3 k;
    };
    Grid grid_;
    int K_ = 0;
    std::vector<Entry> entries_;
};

} // namespace ktl
