#include "ktl/grid.hpp"

#include <cmath>
#include <string>

#include "ktl/errors.hpp"

namespace ktl {

void Grid::validate() const {
    if (d < 1 || d > 3) throw InputError("grid: d must be 1, 2 or 3, got " + std::to_string(d));
    if (N < 8 || N % 2 != 0) throw InputError("grid: N must be even and >= 8, got " + std::to_string(N));
    if (!(L > 0.0) || !std::isfinite(L)) throw InputError("grid: L must be positive and finite");
    if (!(dealias_fraction > 0.0 && dealias_fraction <= 1.0))
        throw InputError("grid: dealias_fraction must lie in (0,1]");
}

std::size_t Grid::size() const {
    std::size_t n = 1;
    for (int a = 0; a < d; ++a) n *= static_cast<std::size_t>(N);
    return n;
}

double Grid::cell_volume() const { return std::pow(dx(), d); }
double Grid::volume() const { return std::pow(L, d); }

Index3 Grid::unflatten(std::size_t flat) const {
    Index3 idx{0, 0, 0};
    for (int a = d - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(flat % N);
        flat /= N;
    }
    return idx;
}

std::size_t Grid::flatten(const Index3& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < d; ++a) f = f * N + static_cast<std::size_t>(idx[a]);
    return f;
}

Index3 Grid::mode_vector(std::size_t flat) const {
    Index3 idx = unflatten(flat);
    for (int a = 0; a < d; ++a) idx[a] = mode(idx[a]);
    return idx;
}

std::size_t Grid::flat_of_mode(const Index3& m) const {
    Index3 p{0, 0, 0};
    for (int a = 0; a < d; ++a) p[a] = position(m[a]);
    return flatten(p);
}

int Grid::dealias_cut() const {
    return static_cast<int>(std::floor(dealias_fraction * (N / 2) + 1e-12));
}

bool Grid::retained(const Index3& m) const {
    const int cut = dealias_cut();
    for (int a = 0; a < d; ++a)
        if (std::abs(m[a]) > cut) return false;
    return true;
}

bool Grid::operator==(const Grid& o) const {
    return d == o.d && N == o.N && L == o.L && dealias_fraction == o.dealias_fraction;
}

} // namespace ktl
