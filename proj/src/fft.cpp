#include "ktl/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace ktl {
namespace {

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

// Plans are created once per (d, N, direction) and never destroyed; FFTW
// allows concurrent fftw_execute_dft on a shared plan.
fftw_plan get_plan(const Grid& g, int sign) {
    static std::map<std::tuple<int, int, int>, fftw_plan> plans;
    std::lock_guard<std::mutex> lock(plan_mutex());
    auto key = std::make_tuple(g.d, g.N, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    const std::size_t n = g.size();
    fftw_complex* a = fftw_alloc_complex(n);
    fftw_complex* b = fftw_alloc_complex(n);
    int dims[3] = {g.N, g.N, g.N};
    fftw_plan p = fftw_plan_dft(g.d, dims, a, b, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(a);
    fftw_free(b);
    plans.emplace(key, p);
    return p;
}

} // namespace

void fft_forward(const Grid& g, const cplx* in, cplx* out) {
    fftw_execute_dft(get_plan(g, FFTW_FORWARD),
                     reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
}

void fft_inverse(const Grid& g, const cplx* in, cplx* out) {
    fftw_execute_dft(get_plan(g, FFTW_BACKWARD),
                     reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
    const std::size_t n = g.size();
    const double s = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] *= s;
}

void fft_forward_real(const Grid& g, const double* in, cplx* out, cplx* scratch) {
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) scratch[i] = cplx(in[i], 0.0);
    fft_forward(g, scratch, out);
}

void fft_inverse_real(const Grid& g, const cplx* in, double* out, cplx* scratch) {
    fftw_execute_dft(get_plan(g, FFTW_BACKWARD),
                     reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                     reinterpret_cast<fftw_complex*>(scratch));
    const std::size_t n = g.size();
    const double s = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = scratch[i].real() * s;
}

std::shared_ptr<const SpectralTables> spectral_tables(const Grid& g) {
    static std::mutex m;
    static std::map<std::tuple<int, int, double, double>, std::shared_ptr<const SpectralTables>> cache;
    std::lock_guard<std::mutex> lock(m);
    auto key = std::make_tuple(g.d, g.N, g.L, g.dealias_fraction);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    auto t = std::make_shared<SpectralTables>();
    t->grid = g;
    const std::size_t n = g.size();
    for (int a = 0; a < 3; ++a) t->kd[a].assign(a < g.d ? n : 0, 0.0);
    t->ksq.assign(n, 0.0);
    t->keep.assign(n, 0);
    const double k0 = g.k0();
    for (std::size_t f = 0; f < n; ++f) {
        Index3 m = g.mode_vector(f);
        double s = 0.0;
        for (int a = 0; a < g.d; ++a) {
            const double xi = k0 * m[a];
            s += xi * xi;
            t->kd[a][f] = (m[a] == g.N / 2) ? 0.0 : xi;
        }
        t->ksq[f] = s;
        t->keep[f] = g.retained(m) ? 1 : 0;
    }
    cache.emplace(key, t);
    return t;
}

} // namespace ktl
