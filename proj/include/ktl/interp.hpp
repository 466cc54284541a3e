#pragma once

#include "ktl/grid.hpp"

namespace ktl {

/// Periodic Catmull-Rom (cubic) interpolation of grid data at point x.
double interp_cubic(const Grid& g, const double* data, const double* x);

/// Same stencil, result clipped to the range of the 2^d surrounding nodes, so
/// the interpolant never creates new extrema.
double interp_cubic_clipped(const Grid& g, const double* data, const double* x);

/// Wrap a coordinate into [0, L).
double wrap(double x, double L);

} // namespace ktl
