#include "ktl/field.hpp"

#include <algorithm>
#include <cmath>

#include "ktl/errors.hpp"

namespace ktl {
namespace {

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (a != b) throw InputError(std::string(what) + ": grids differ");
}

void require_finite(const ScalarField& f, const char* what) {
    if (!f.all_finite()) throw InputError(std::string(what) + ": field has non-finite values");
}

} // namespace

ScalarField::ScalarField(const Grid& g) : grid_(g), values_(g.size(), 0.0), spec_(g.size(), cplx{}) {
    g.validate();
}

ScalarField ScalarField::from_values(const Grid& g, std::vector<double> values) {
    g.validate();
    if (values.size() != g.size()) throw InputError("ScalarField: value count does not match grid");
    ScalarField f;
    f.grid_ = g;
    f.values_ = std::move(values);
    f.spec_.resize(g.size());
    std::vector<cplx> scratch(g.size());
    fft_forward_real(g, f.values_.data(), f.spec_.data(), scratch.data());
    return f;
}

ScalarField ScalarField::from_spectrum(const Grid& g, std::vector<cplx> raw) {
    g.validate();
    if (raw.size() != g.size()) throw InputError("ScalarField: coefficient count does not match grid");
    const std::size_t n = g.size();
    // Hermitian projection: spectrum of the real part.
    std::vector<cplx> sym(n);
    for (std::size_t f = 0; f < n; ++f) {
        Index3 m = g.mode_vector(f);
        for (int a = 0; a < g.d; ++a) m[a] = -m[a];
        sym[f] = 0.5 * (raw[f] + std::conj(raw[g.flat_of_mode(m)]));
    }
    ScalarField out;
    out.grid_ = g;
    out.values_.resize(n);
    std::vector<cplx> scratch(n);
    fft_inverse_real(g, sym.data(), out.values_.data(), scratch.data());
    out.spec_ = std::move(sym);
    return out;
}

ScalarField ScalarField::from_function(const Grid& g, const std::function<double(const double*)>& fn) {
    g.validate();
    std::vector<double> v(g.size());
    const double h = g.dx();
    for (std::size_t f = 0; f < v.size(); ++f) {
        Index3 idx = g.unflatten(f);
        double x[3] = {0, 0, 0};
        for (int a = 0; a < g.d; ++a) x[a] = idx[a] * h;
        v[f] = fn(x);
    }
    return from_values(g, std::move(v));
}

double ScalarField::coefficient_scale() const {
    return std::pow(grid_.L, 0.5 * grid_.d) / static_cast<double>(grid_.size());
}

bool ScalarField::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

VectorField::VectorField(const Grid& g) : grid(g) {
    for (int a = 0; a < g.d; ++a) comp.emplace_back(g);
}

VectorField::VectorField(const Grid& g, std::vector<ScalarField> c) : grid(g), comp(std::move(c)) {
    validate();
}

void VectorField::validate() const {
    if (static_cast<int>(comp.size()) != grid.d) throw InputError("VectorField: need d components");
    for (const auto& c : comp)
        if (c.grid() != grid) throw InputError("VectorField: component grids differ");
}

double ModeEnergy::total() const {
    double s = 0.0;
    for (double v : e) s += v;
    return s;
}

ScalarField operator+(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid(), "field sum");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
    return ScalarField::from_values(a.grid(), std::move(v));
}

ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid(), "field difference");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
    return ScalarField::from_values(a.grid(), std::move(v));
}

ScalarField operator*(double s, const ScalarField& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x *= s;
    return ScalarField::from_values(a.grid(), std::move(v));
}

VectorField operator+(const VectorField& a, const VectorField& b) {
    require_same_grid(a.grid, b.grid, "vector field sum");
    VectorField out;
    out.grid = a.grid;
    for (int c = 0; c < a.d(); ++c) out.comp.push_back(a.comp[c] + b.comp[c]);
    return out;
}

VectorField operator*(double s, const VectorField& a) {
    VectorField out;
    out.grid = a.grid;
    for (const auto& c : a.comp) out.comp.push_back(s * c);
    return out;
}

double lp_norm(const ScalarField& f, double p) {
    require_finite(f, "lp_norm");
    if (!(p >= 1.0)) throw InputError("lp_norm: p must be >= 1");
    const auto& v = f.values();
    if (std::isinf(p)) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
    double s = 0.0;
    if (p == 2.0) {
        for (double x : v) s += x * x;
    } else {
        for (double x : v) s += std::pow(std::abs(x), p);
    }
    return std::pow(s * f.grid().cell_volume(), 1.0 / p);
}

double sobolev_norm(const ScalarField& f, double s) {
    require_finite(f, "sobolev_norm");
    auto t = spectral_tables(f.grid());
    const double c = f.coefficient_scale();
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double w = (s == 0.0) ? 1.0 : std::pow(1.0 + t->ksq[i], s);
        acc += w * std::norm(f.spectrum()[i] * c);
    }
    return std::sqrt(acc);
}

double inner(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid(), "inner");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s * a.grid().cell_volume();
}

double integral(const ScalarField& f) {
    double s = 0.0;
    for (double x : f.values()) s += x;
    return s * f.grid().cell_volume();
}

double l2_norm(const VectorField& v) {
    double s = 0.0;
    for (const auto& c : v.comp) {
        const double n = lp_norm(c, 2.0);
        s += n * n;
    }
    return std::sqrt(s);
}

VectorField gradient_spectral(const ScalarField& f) {
    auto t = spectral_tables(f.grid());
    VectorField out;
    out.grid = f.grid();
    std::vector<cplx> s(f.size());
    for (int a = 0; a < f.grid().d; ++a) {
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = cplx(0.0, t->kd[a][i]) * f.spectrum()[i];
        out.comp.push_back(ScalarField::from_spectrum(f.grid(), s));
    }
    return out;
}

ScalarField divergence(const VectorField& v) {
    v.validate();
    auto t = spectral_tables(v.grid);
    std::vector<cplx> s(v.grid.size(), cplx{});
    for (int a = 0; a < v.d(); ++a)
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += cplx(0.0, t->kd[a][i]) * v.comp[a].spectrum()[i];
    return ScalarField::from_spectrum(v.grid, std::move(s));
}

ScalarField laplacian(const ScalarField& f) {
    auto t = spectral_tables(f.grid());
    std::vector<cplx> s(f.spectrum());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= -t->ksq[i];
    return ScalarField::from_spectrum(f.grid(), std::move(s));
}

ScalarField dealias(const ScalarField& f) {
    auto t = spectral_tables(f.grid());
    std::vector<cplx> s(f.spectrum());
    for (std::size_t i = 0; i < s.size(); ++i)
        if (!t->keep[i]) s[i] = cplx{};
    return ScalarField::from_spectrum(f.grid(), std::move(s));
}

VectorField dealias(const VectorField& v) {
    VectorField out;
    out.grid = v.grid;
    for (const auto& c : v.comp) out.comp.push_back(dealias(c));
    return out;
}

ModeEnergy fourier_energy_profile(const ScalarField& f) {
    ModeEnergy m;
    m.grid = f.grid();
    m.e.resize(f.size());
    const double c = f.coefficient_scale();
    for (std::size_t i = 0; i < f.size(); ++i) m.e[i] = std::norm(f.spectrum()[i] * c);
    return m;
}

ScalarField spectral_filter(const ScalarField& f, const std::function<double(double)>& w) {
    auto t = spectral_tables(f.grid());
    std::vector<cplx> s(f.spectrum());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= w(t->ksq[i]);
    return ScalarField::from_spectrum(f.grid(), std::move(s));
}

double max_spectral_divergence(const VectorField& v) {
    v.validate();
    auto t = spectral_tables(v.grid);
    double worst = 0.0, norm2 = 0.0;
    const double c = v.comp[0].coefficient_scale();
    for (std::size_t i = 0; i < v.grid.size(); ++i) {
        cplx s{};
        double kk = 0.0;
        for (int a = 0; a < v.d(); ++a) {
            s += t->kd[a][i] * v.comp[a].spectrum()[i];
            norm2 += std::norm(v.comp[a].spectrum()[i] * c);
            kk += t->kd[a][i] * t->kd[a][i];
        }
        // Scale-free: compare |xi . v^| to |xi| |v^| so the ratio is dimensionless.
        worst = std::max(worst, std::abs(s) * c / std::max(1.0, std::sqrt(kk)));
    }
    if (norm2 == 0.0) return 0.0;
    return worst / std::sqrt(norm2);
}

SparseSpectrum::SparseSpectrum(const ScalarField& f, double tol) : d_(f.grid().d) {
    const auto& g = f.grid();
    double big = 0.0;
    for (const auto& c : f.spectrum()) big = std::max(big, std::abs(c));
    const double inv_n = 1.0 / static_cast<double>(g.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const cplx c = f.spectrum()[i];
        if (std::abs(c) <= tol * big || big == 0.0) continue;
        Index3 m = g.mode_vector(i);
        std::array<double, 3> xi{0, 0, 0};
        for (int a = 0; a < g.d; ++a) xi[a] = g.k0() * m[a];
        xi_.push_back(xi);
        amp_.push_back(c * inv_n);
    }
}

double SparseSpectrum::eval(const double* x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < amp_.size(); ++j) {
        double ph = 0.0;
        for (int a = 0; a < d_; ++a) ph += xi_[j][a] * x[a];
        s += amp_[j].real() * std::cos(ph) - amp_[j].imag() * std::sin(ph);
    }
    return s;
}

} // namespace ktl
