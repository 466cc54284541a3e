#pragma once

#include <array>
#include <cstddef>
#include <numbers>

namespace ktl {

using Index3 = std::array<int, 3>;

/// Uniform periodic grid on [0,L)^d. Flat storage is row-major with axis 0
/// varying slowest.
struct Grid {
    int d = 2;
    int N = 64;
    double L = 2.0 * std::numbers::pi;
    double dealias_fraction = 2.0 / 3.0;

    void validate() const;

    std::size_t size() const;
    double dx() const { return L / N; }
    double cell_volume() const;
    double volume() const;
    double k0() const { return 2.0 * std::numbers::pi / L; }

    /// Signed lattice index for FFT position i.
    int mode(int i) const { return i <= N / 2 ? i : i - N; }
    /// FFT position for signed lattice index m (|m| < N/2 or m = N/2).
    int position(int m) const { return ((m % N) + N) % N; }

    Index3 unflatten(std::size_t flat) const;
    std::size_t flatten(const Index3& idx) const;
    /// Signed lattice vector of flat spectral position.
    Index3 mode_vector(std::size_t flat) const;
    /// Flat spectral position of a signed lattice vector.
    std::size_t flat_of_mode(const Index3& m) const;
    /// True when every |m_a| is inside the retained band.
    bool retained(const Index3& m) const;
    int dealias_cut() const;

    bool operator==(const Grid& o) const;
    bool operator!=(const Grid& o) const { return !(*this == o); }
};

} // namespace ktl
