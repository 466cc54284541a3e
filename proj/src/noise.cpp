#include "ktl/noise.hpp"

#include <cmath>
#include <numeric>

#include "ktl/errors.hpp"

namespace ktl {
namespace {

int dot(const Index3& a, const Index3& b, int d) {
    int s = 0;
    for (int i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

Index3 reduce(Index3 v) {
    int g = 0;
    for (int x : v) g = std::gcd(g, std::abs(x));
    if (g > 1)
        for (int& x : v) x /= g;
    return v;
}

// Integer polarization directions orthogonal to k.
std::vector<Index3> polarizations(const Index3& k, int d) {
    if (d == 2) return {Index3{-k[1], k[0], 0}};
    // d == 3: Gram-Schmidt against the first coordinate axis not parallel to k.
    int axis = 0;
    for (int a = 0; a < 3; ++a) {
        Index3 ea{0, 0, 0};
        ea[a] = 1;
        const bool parallel = (k[(a + 1) % 3] == 0 && k[(a + 2) % 3] == 0);
        if (!parallel) {
            axis = a;
            break;
        }
    }
    Index3 ea{0, 0, 0};
    ea[axis] = 1;
    const int kk = dot(k, k, 3);
    const int ka = k[axis];
    Index3 e1{ea[0] * kk - k[0] * ka, ea[1] * kk - k[1] * ka, ea[2] * kk - k[2] * ka};
    e1 = reduce(e1);
    Index3 e2{k[1] * e1[2] - k[2] * e1[1], k[2] * e1[0] - k[0] * e1[2], k[0] * e1[1] - k[1] * e1[0]};
    e2 = reduce(e2);
    return {e1, e2};
}

} // namespace

void NoiseSpec::validate() const {
    if (d < 2 || d > 3) throw InputError("noise: d must be 2 or 3 (no solenoidal modes in d=1)");
    if (!(alpha > 0.0 && alpha < 0.5)) throw InputError("noise: alpha must lie in (0, 1/2)");
    if (K < 1) throw InputError("noise: K must be >= 1");
    if (!(L > 0.0) || !std::isfinite(L)) throw InputError("noise: L must be positive");
}

int NoiseBasis::max_component() const {
    int m = 0;
    for (const auto& md : modes)
        for (int a = 0; a < spec.d; ++a) m = std::max(m, std::abs(md.k[a]));
    return m;
}

std::size_t NoiseBasis::find(const Index3& k, int pol, bool sine) const {
    for (std::size_t j = 0; j < modes.size(); ++j)
        if (modes[j].k == k && modes[j].pol == pol && modes[j].sine == sine) return j;
    throw InputError("noise basis: requested mode not present");
}

nlohmann::ordered_json NoiseBasis::manifest() const {
    nlohmann::ordered_json j;
    j["d"] = spec.d;
    j["alpha"] = spec.alpha;
    j["K"] = spec.K;
    j["L"] = spec.L;
    j["Z_K"] = Z_K;
    auto& list = j["modes"] = nlohmann::ordered_json::array();
    for (const auto& m : modes) {
        nlohmann::ordered_json e;
        e["k"] = std::vector<int>(m.k.begin(), m.k.begin() + spec.d);
        e["e"] = std::vector<double>(m.e.begin(), m.e.begin() + spec.d);
        e["theta"] = m.theta;
        e["phase"] = m.sine ? "sin" : "cos";
        list.push_back(e);
    }
    return j;
}

NoiseBasis build_basis(const NoiseSpec& spec) {
    spec.validate();
    NoiseBasis b;
    b.spec = spec;
    const int d = spec.d, K = spec.K;
    const double k0 = 2.0 * std::numbers::pi / spec.L;
    const double expo = -(0.5 * d + spec.alpha);
    double wsum = 0.0;
    Index3 k{0, 0, 0};
    const int span = 2 * K + 1;
    const int total = d == 2 ? span * span : span * span * span;
    for (int f = 0; f < total; ++f) {
        int r = f;
        for (int a = d - 1; a >= 0; --a) {
            k[a] = r % span - K;
            r /= span;
        }
        const int kk = dot(k, k, d);
        if (kk == 0 || kk > K * K) continue;
        const double w = std::pow(1.0 + k0 * k0 * kk, expo);
        wsum += w;
        auto pols = polarizations(k, d);
        for (int p = 0; p < static_cast<int>(pols.size()); ++p) {
            const Index3& dir = pols[p];
            const double n = std::sqrt(static_cast<double>(dot(dir, dir, d)));
            for (int ph = 0; ph < 2; ++ph) {
                NoiseMode m;
                m.k = k;
                m.dir = dir;
                for (int a = 0; a < d; ++a) m.e[a] = dir[a] / n;
                m.theta = std::sqrt(w);  // rescaled by sqrt(Z_K) below
                m.pol = p;
                m.sine = (ph == 1);
                b.modes.push_back(m);
            }
        }
    }
    // Lattice cubic symmetry gives sum_k w_k (I - k k^T/|k|^2) = (d-1)/d sum_k w_k I.
    b.Z_K = 2.0 * d / ((d - 1) * wsum);
    const double sz = std::sqrt(b.Z_K);
    for (auto& m : b.modes) m.theta *= sz;
    return b;
}

Mat covariance_eval(const NoiseBasis& basis, const double* z) {
    Mat q{};
    const int d = basis.spec.d;
    const double k0 = 2.0 * std::numbers::pi / basis.spec.L;
    for (const auto& m : basis.modes) {
        if (m.sine) continue;  // each (k, pol) pair counted once
        double ph = 0.0;
        for (int a = 0; a < d; ++a) ph += k0 * m.k[a] * z[a];
        const double c = m.theta * m.theta * std::cos(ph);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) q[a][b] += c * m.e[a] * m.e[b];
    }
    return q;
}

NoiseSynth::NoiseSynth(const NoiseBasis& basis, const Grid& grid) : grid_(grid), K_(basis.spec.K) {
    if (basis.spec.d != grid.d) throw InputError("noise basis dimension differs from grid dimension");
    if (basis.spec.L != grid.L) throw InputError("noise basis box length differs from grid box length");
    if (basis.max_component() >= grid.N / 2)
        throw InputError("noise basis mode index exceeds grid Nyquist (need max |k_a| <= N/2-1)");
    for (const auto& m : basis.modes) {
        Entry e{};
        Index3 neg{-m.k[0], -m.k[1], -m.k[2]};
        e.pos_plus = grid.flat_of_mode(m.k);
        e.pos_minus = grid.flat_of_mode(neg);
        for (int a = 0; a < 3; ++a) e.amp[a] = m.theta * m.e[a];
        e.sine = m.sine;
        e.k = m.k;
        entries_.push_back(e);
    }
}

void NoiseSynth::spectral(const double* c, std::vector<std::vector<cplx>>& out) const {
    const int d = grid_.d;
    const std::size_t n = grid_.size();
    out.resize(d);
    for (auto& o : out) o.assign(n, cplx{});
    const double half_n = 0.5 * static_cast<double>(n);
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        const Entry& e = entries_[j];
        const double s = c[j] * half_n;
        if (s == 0.0) continue;
        for (int a = 0; a < d; ++a) {
            const double v = s * e.amp[a];
            if (e.sine) {
                out[a][e.pos_plus] += cplx(0.0, -v);
                out[a][e.pos_minus] += cplx(0.0, v);
            } else {
                out[a][e.pos_plus] += v;
                out[a][e.pos_minus] += v;
            }
        }
    }
}

void NoiseSynth::eval_point(const double* c, const double* x, double* v) const {
    const int d = grid_.d;
    const double k0 = grid_.k0();
    // e^{i m k0 x_a} for m in [-K, K], built by recurrence from m = 1.
    const int span = 2 * K_ + 1;
    std::vector<cplx> ex(static_cast<std::size_t>(d * span));
    for (int a = 0; a < d; ++a) {
        cplx* row = ex.data() + a * span + K_;
        const cplx step(std::cos(k0 * x[a]), std::sin(k0 * x[a]));
        row[0] = 1.0;
        for (int m = 1; m <= K_; ++m) {
            row[m] = row[m - 1] * step;
            row[-m] = std::conj(row[m]);
        }
    }
    for (int a = 0; a < d; ++a) v[a] = 0.0;
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        if (c[j] == 0.0) continue;
        const Entry& e = entries_[j];
        cplx p = ex[static_cast<std::size_t>(e.k[0] + K_)];
        for (int a = 1; a < d; ++a) p *= ex[static_cast<std::size_t>(a * span + e.k[a] + K_)];
        const double s = c[j] * (e.sine ? p.imag() : p.real());
        for (int a = 0; a < d; ++a) v[a] += s * e.amp[a];
    }
}

VectorField noise_field(const NoiseBasis& basis, const Grid& grid, const std::vector<double>& c) {
    if (c.size() != basis.size()) throw InputError("noise_field: coefficient count does not match basis");
    NoiseSynth synth(basis, grid);
    std::vector<std::vector<cplx>> spec;
    synth.spectral(c.data(), spec);
    VectorField out;
    out.grid = grid;
    for (int a = 0; a < grid.d; ++a) out.comp.push_back(ScalarField::from_spectrum(grid, std::move(spec[a])));
    return out;
}

NoiseIncrement sample_increment(const NoiseBasis& basis, const Grid& grid, double dt, std::mt19937_64& rng) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("sample_increment: dt must be positive");
    std::normal_distribution<double> nd(0.0, std::sqrt(dt));
    NoiseIncrement inc;
    inc.dt = dt;
    inc.coefficients.resize(basis.size());
    for (auto& c : inc.coefficients) c = nd(rng);
    inc.dW = noise_field(basis, grid, inc.coefficients);
    return inc;
}

namespace {

double cm_slice_sq(const VectorField& g, const NoiseSpec& spec) {
    const double div = max_spectral_divergence(g);
    if (div > 1e-8)
        throw InputError("cameron_martin_norm: field is not divergence-free (max relative spectral divergence " +
                         std::to_string(div) + ")");
    const double s = 0.5 * spec.d + spec.alpha;
    double acc = 0.0;
    for (const auto& c : g.comp) {
        const double n = sobolev_norm(c, s);
        acc += n * n;
    }
    return acc;
}

} // namespace

double cameron_martin_norm(const TimeSlices& g, const NoiseSpec& spec) {
    spec.validate();
    if (g.t.size() != g.g.size() || g.t.size() < 2) throw InputError("cameron_martin_norm: need >= 2 time slices");
    std::vector<double> v;
    for (const auto& s : g.g) v.push_back(cm_slice_sq(s, spec));
    double acc = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double h = g.t[i] - g.t[i - 1];
        if (!(h > 0.0)) throw InputError("cameron_martin_norm: slice times must increase");
        acc += 0.5 * h * (v[i] + v[i - 1]);
    }
    return std::sqrt(acc);
}

double cameron_martin_norm(const VectorField& g, double T, const NoiseSpec& spec) {
    spec.validate();
    if (!(T > 0.0)) throw InputError("cameron_martin_norm: T must be positive");
    return std::sqrt(T * cm_slice_sq(g, spec));
}

double cm_scale(const NoiseBasis& basis) {
    return 1.0 / std::sqrt(basis.Z_K * std::pow(basis.spec.L, basis.spec.d));
}

} // namespace ktl
