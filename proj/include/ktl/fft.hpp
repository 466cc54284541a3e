#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "ktl/grid.hpp"

namespace ktl {

using cplx = std::complex<double>;

/// Raw forward DFT, no normalization. Out-of-place.
void fft_forward(const Grid& g, const cplx* in, cplx* out);
/// Inverse DFT scaled by 1/N^d. Out-of-place.
void fft_inverse(const Grid& g, const cplx* in, cplx* out);

/// Real input, full complex spectrum.
void fft_forward_real(const Grid& g, const double* in, cplx* out, cplx* scratch);
/// Inverse transform keeping the real part.
void fft_inverse_real(const Grid& g, const cplx* in, double* out, cplx* scratch);

/// Per-grid lookup tables used by the spectral operators.
struct SpectralTables {
    Grid grid;
    /// Wavenumber component per spectral position, Nyquist zeroed (derivatives).
    std::vector<double> kd[3];
    /// |xi|^2 with the Nyquist entries included (Laplacian, Sobolev weights).
    std::vector<double> ksq;
    /// 1 where the mode survives dealiasing.
    std::vector<unsigned char> keep;
};

/// Cached tables; safe to call concurrently.
std::shared_ptr<const SpectralTables> spectral_tables(const Grid& g);

} // namespace ktl
