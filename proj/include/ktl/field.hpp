#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "ktl/fft.hpp"
#include "ktl/grid.hpp"

namespace ktl {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Real scalar on a periodic grid. Holds point values and the raw forward
/// DFT together; both are fixed at construction.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const Grid& g);

    static ScalarField from_values(const Grid& g, std::vector<double> values);
    /// Raw DFT coefficients (unnormalized). A non-Hermitian input is replaced
    /// by the spectrum of its real part.
    static ScalarField from_spectrum(const Grid& g, std::vector<cplx> raw);
    static ScalarField from_function(const Grid& g, const std::function<double(const double*)>& f);

    const Grid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<cplx>& spectrum() const { return spec_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    /// Orthonormal-basis coefficient L^{d/2}/N^d * raw, so that the sum of
    /// squared moduli equals the L2 norm squared.
    double coefficient_scale() const;
    cplx coefficient(std::size_t flat) const { return spec_[flat] * coefficient_scale(); }

    bool all_finite() const;

private:
    Grid grid_;
    std::vector<double> values_;
    std::vector<cplx> spec_;
};

struct VectorField {
    Grid grid;
    std::vector<ScalarField> comp;

    VectorField() = default;
    explicit VectorField(const Grid& g);
    VectorField(const Grid& g, std::vector<ScalarField> c);
    void validate() const;
    int d() const { return grid.d; }
};

/// Per-mode energies |f^(xi)|^2 indexed by flat spectral position.
struct ModeEnergy {
    Grid grid;
    std::vector<double> e;
    double at(const Index3& m) const { return e[grid.flat_of_mode(m)]; }
    double total() const;
};

ScalarField operator+(const ScalarField& a, const ScalarField& b);
ScalarField operator-(const ScalarField& a, const ScalarField& b);
ScalarField operator*(double s, const ScalarField& a);
VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator*(double s, const VectorField& a);

/// Quadrature L^p norm; p = kInf gives the grid maximum of |f|.
double lp_norm(const ScalarField& f, double p);
/// (sum <xi>^{2s} |f^(xi)|^2)^{1/2}.
double sobolev_norm(const ScalarField& f, double s);
double inner(const ScalarField& a, const ScalarField& b);
double integral(const ScalarField& f);
double l2_norm(const VectorField& v);

VectorField gradient_spectral(const ScalarField& f);
ScalarField divergence(const VectorField& v);
ScalarField laplacian(const ScalarField& f);
ScalarField dealias(const ScalarField& f);
VectorField dealias(const VectorField& v);
ModeEnergy fourier_energy_profile(const ScalarField& f);

/// Multiply each spectral coefficient by w(|xi|^2).
ScalarField spectral_filter(const ScalarField& f, const std::function<double(double)>& w);

/// max over modes of |xi . v^(xi)| relative to the L2 norm of v (0 for v = 0).
double max_spectral_divergence(const VectorField& v);

/// Evaluate the trigonometric interpolant at an arbitrary point from a sparse
/// mode list; exact for band-limited fields.
class SparseSpectrum {
public:
    SparseSpectrum() = default;
    /// Keeps modes whose coefficient exceeds tol times the largest one.
    explicit SparseSpectrum(const ScalarField& f, double tol = 1e-13);
    std::size_t size() const { return amp_.size(); }
    double eval(const double* x) const;

private:
    int d_ = 2;
    std::vector<std::array<double, 3>> xi_;
    std::vector<cplx> amp_;
};

} // namespace ktl
