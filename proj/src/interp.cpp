#include "ktl/interp.hpp"

#include <algorithm>
#include <cmath>

namespace ktl {
namespace {

inline void cr_weights(double t, double* w) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
    w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
    w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
    w[3] = 0.5 * (t3 - t2);
}

struct Stencil {
    int base[3];
    double w[3][4];
};

inline Stencil make_stencil(const Grid& g, const double* x) {
    Stencil s{};
    const double inv_h = g.N / g.L;
    for (int a = 0; a < g.d; ++a) {
        const double u = x[a] * inv_h;
        const double fl = std::floor(u);
        s.base[a] = static_cast<int>(fl);
        cr_weights(u - fl, s.w[a]);
    }
    return s;
}

inline int pmod(int i, int n) {
    i %= n;
    return i < 0 ? i + n : i;
}

} // namespace

double wrap(double x, double L) {
    double r = std::fmod(x, L);
    if (r < 0) r += L;
    if (r >= L) r -= L;
    return r;
}

double interp_cubic(const Grid& g, const double* data, const double* x) {
    const Stencil s = make_stencil(g, x);
    const int N = g.N;
    if (g.d == 1) {
        double r = 0.0;
        for (int i = 0; i < 4; ++i) r += s.w[0][i] * data[pmod(s.base[0] - 1 + i, N)];
        return r;
    }
    if (g.d == 2) {
        double r = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double* row = data + static_cast<std::size_t>(pmod(s.base[0] - 1 + i, N)) * N;
            double ri = 0.0;
            for (int j = 0; j < 4; ++j) ri += s.w[1][j] * row[pmod(s.base[1] - 1 + j, N)];
            r += s.w[0][i] * ri;
        }
        return r;
    }
    double r = 0.0;
    for (int i = 0; i < 4; ++i) {
        const std::size_t pi = pmod(s.base[0] - 1 + i, N);
        double ri = 0.0;
        for (int j = 0; j < 4; ++j) {
            const std::size_t pj = pmod(s.base[1] - 1 + j, N);
            const double* row = data + (pi * N + pj) * N;
            double rj = 0.0;
            for (int k = 0; k < 4; ++k) rj += s.w[2][k] * row[pmod(s.base[2] - 1 + k, N)];
            ri += s.w[1][j] * rj;
        }
        r += s.w[0][i] * ri;
    }
    return r;
}

double interp_cubic_clipped(const Grid& g, const double* data, const double* x) {
    const double v = interp_cubic(g, data, x);
    const int N = g.N;
    const double inv_h = g.N / g.L;
    int base[3] = {0, 0, 0};
    for (int a = 0; a < g.d; ++a) base[a] = static_cast<int>(std::floor(x[a] * inv_h));
    double lo = INFINITY, hi = -INFINITY;
    const int corners = 1 << g.d;
    for (int c = 0; c < corners; ++c) {
        std::size_t f = 0;
        for (int a = 0; a < g.d; ++a) f = f * N + pmod(base[a] + ((c >> a) & 1), N);
        lo = std::min(lo, data[f]);
        hi = std::max(hi, data[f]);
    }
    return std::clamp(v, lo, hi);
}

} // namespace ktl
