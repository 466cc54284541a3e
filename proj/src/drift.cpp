#include "ktl/drift.hpp"

#include <cmath>
#include <filesystem>
#include <random>

#include "ktl/errors.hpp"
#include "ktl/snapshot_io.hpp"

namespace ktl {

std::string to_string(DriftKind k) {
    switch (k) {
        case DriftKind::zero: return "zero";
        case DriftKind::constant: return "constant";
        case DriftKind::shear: return "shear";
        case DriftKind::cellular: return "cellular";
        case DriftKind::rough: return "rough";
        case DriftKind::compressible: return "compressible";
        case DriftKind::user: return "user";
    }
    return "?";
}

DriftKind drift_kind_from_string(const std::string& s) {
    if (s == "zero") return DriftKind::zero;
    if (s == "constant") return DriftKind::constant;
    if (s == "shear") return DriftKind::shear;
    if (s == "cellular") return DriftKind::cellular;
    if (s == "rough") return DriftKind::rough;
    if (s == "compressible") return DriftKind::compressible;
    if (s == "user") return DriftKind::user;
    throw InputError("unknown drift kind '" + s + "'");
}

void DriftSpec::validate() const {
    if (!std::isfinite(amplitude)) throw InputError("drift: amplitude must be finite");
    for (double v : velocity)
        if (!std::isfinite(v)) throw InputError("drift: velocity must be finite");
    if ((kind == DriftKind::shear || kind == DriftKind::cellular || kind == DriftKind::compressible) && wavenumber < 1)
        throw InputError("drift: wavenumber must be >= 1");
    if (kind == DriftKind::rough) {
        if (!(q_target >= 1.0 && q_target <= 2.0)) throw InputError("drift: rough kind requires q_target in [1, 2]");
        if (!std::isfinite(slope)) throw InputError("drift: slope must be finite");
    }
    if (kind == DriftKind::user && file.empty()) throw InputError("drift: user kind requires a file");
    if (modulated) schedule.validate();
}

namespace {

VectorField from_functions(const Grid& g, const std::vector<std::function<double(const double*)>>& f) {
    VectorField v;
    v.grid = g;
    for (int a = 0; a < g.d; ++a) v.comp.push_back(ScalarField::from_function(g, f[a]));
    return v;
}

VectorField rough_field(const DriftSpec& s, const Grid& g, double slope) {
    std::mt19937_64 rng(s.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const std::size_t n = g.size();
    const int cut = g.dealias_cut();
    std::vector<std::vector<cplx>> spec(g.d, std::vector<cplx>(n, cplx{}));
    for (std::size_t f = 0; f < n; ++f) {
        const Index3 m = g.mode_vector(f);
        double mm = 0.0;
        bool inside = true;
        for (int a = 0; a < g.d; ++a) {
            mm += double(m[a]) * m[a];
            if (std::abs(m[a]) > cut) inside = false;
        }
        double z[3][2];
        for (int a = 0; a < 3; ++a) z[a][0] = nd(rng), z[a][1] = nd(rng);
        if (!inside || mm == 0.0) continue;
        const double amp = std::pow(mm, -0.5 * slope);
        cplx v[3];
        for (int a = 0; a < g.d; ++a) v[a] = amp * cplx(z[a][0], z[a][1]);
        // Leray projection onto wavevectors' orthogonal complement.
        cplx kv{};
        for (int a = 0; a < g.d; ++a) kv += double(m[a]) * v[a];
        for (int a = 0; a < g.d; ++a) spec[a][f] = v[a] - kv * (double(m[a]) / mm);
    }
    VectorField out;
    out.grid = g;
    for (int a = 0; a < g.d; ++a) out.comp.push_back(ScalarField::from_spectrum(g, std::move(spec[a])));
    const double rms = l2_norm(out) / std::sqrt(g.volume());
    if (rms > 0.0) out = (s.amplitude / rms) * out;
    return out;
}

} // namespace

double w1q_norm(const VectorField& b, double q) {
    const Grid& g = b.grid;
    const std::size_t n = g.size();
    std::vector<double> mag(n, 0.0), grad(n, 0.0);
    for (int a = 0; a < g.d; ++a) {
        const auto& v = b.comp[a].values();
        for (std::size_t i = 0; i < n; ++i) mag[i] += v[i] * v[i];
        VectorField gr = gradient_spectral(b.comp[a]);
        for (int c = 0; c < g.d; ++c) {
            const auto& w = gr.comp[c].values();
            for (std::size_t i = 0; i < n; ++i) grad[i] += w[i] * w[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) mag[i] = std::sqrt(mag[i]), grad[i] = std::sqrt(grad[i]);
    auto norm = [&](const std::vector<double>& v) {
        return lp_norm(ScalarField::from_values(g, v), q);
    };
    return norm(mag) + norm(grad);
}

Drift synthesize_drift(const DriftSpec& s, const Grid& g) {
    s.validate();
    g.validate();
    Drift out;
    const double A = s.amplitude;
    const double k = g.k0() * s.wavenumber;
    std::vector<std::function<double(const double*)>> f(g.d, [](const double*) { return 0.0; });
    double slope_used = 0.0;
    switch (s.kind) {
        case DriftKind::zero:
            out.field = VectorField(g);
            break;
        case DriftKind::constant: {
            if (static_cast<int>(s.velocity.size()) != g.d) throw InputError("drift: constant kind needs d velocity components");
            for (int a = 0; a < g.d; ++a) {
                const double c = s.velocity[a];
                f[a] = [c](const double*) { return c; };
            }
            out.field = from_functions(g, f);
            break;
        }
        case DriftKind::shear:
            if (g.d < 2) throw InputError("drift: shear needs d >= 2");
            f[0] = [A, k](const double* x) { return A * std::sin(k * x[1]); };
            out.field = from_functions(g, f);
            break;
        case DriftKind::cellular: {
            if (g.d < 2) throw InputError("drift: cellular needs d >= 2");
            // Stream function psi = (A/k) sin(k x1) sin(k x2), b = (-d2 psi, d1 psi).
            f[0] = [A, k](const double* x) { return -A * std::sin(k * x[0]) * std::cos(k * x[1]); };
            f[1] = [A, k](const double* x) { return A * std::cos(k * x[0]) * std::sin(k * x[1]); };
            out.field = from_functions(g, f);
            break;
        }
        case DriftKind::compressible:
            f[0] = [A, k](const double* x) { return A * std::sin(k * x[0]); };
            out.field = from_functions(g, f);
            break;
        case DriftKind::rough: {
            const double beta = 1.0 + 0.5 * g.d - g.d / s.q_target;
            slope_used = s.slope >= 0.0 ? s.slope : beta + 0.5 * g.d;
            out.field = rough_field(s, g, slope_used);
            break;
        }
        case DriftKind::user: {
            out.field.grid = g;
            for (int a = 0; a < g.d; ++a) {
                const std::string base = s.file + "_" + std::to_string(a);
                if (!std::filesystem::exists(base + ".bin") || !std::filesystem::exists(base + ".json"))
                    throw InputError("drift: user field component missing: " + base + ".{bin,json}");
                Snapshot snap = read_snapshot(base);
                if (snap.field.grid().N != g.N || snap.field.grid().d != g.d || snap.field.grid().L != g.L)
                    throw InputError("drift: user field grid does not match run grid");
                out.field.comp.push_back(ScalarField::from_values(g, snap.field.values()));
            }
            break;
        }
    }
    out.info.q = s.kind == DriftKind::rough ? s.q_target : 2.0;
    out.info.w1q_norm = w1q_norm(out.field, out.info.q);
    out.info.div_linf = lp_norm(divergence(out.field), kInf);
    out.info.l2_norm = l2_norm(out.field);
    out.info.spectral_slope = slope_used;
    out.st = SpaceTimeField(g);
    if (s.kind != DriftKind::zero) {
        if (s.modulated) {
            Schedule sch = s.schedule;
            out.st.add(out.field, [sch](double t) { return sch(t); });
        } else {
            out.st.add(out.field, nullptr);
        }
    }
    return out;
}

VectorField mollify(const VectorField& b, double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw InputError("mollify: delta must be >= 0");
    if (delta == 0.0) return b;
    const double c = 0.5 * delta * delta;
    VectorField out;
    out.grid = b.grid;
    for (const auto& comp : b.comp) out.comp.push_back(spectral_filter(comp, [c](double k2) { return std::exp(-c * k2); }));
    return out;
}

SpaceTimeField mollify(const SpaceTimeField& b, double delta) {
    SpaceTimeField out(b.grid);
    for (const auto& t : b.terms) out.terms.push_back({t.s, mollify(t.F, delta)});
    return out;
}

RegimeReport check_regime(double p, double q, int d, double alpha) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw InputError("check_regime: alpha must lie in (0, 1/2)");
    if (!(p >= 1.0) || !(q >= 1.0)) throw InputError("check_regime: p and q must be in [1, inf]");
    if (d < 1 || d > 3) throw InputError("check_regime: d must be 1, 2 or 3");
    const double ip = std::isinf(p) ? 0.0 : 1.0 / p;
    const double iq = std::isinf(q) ? 0.0 : 1.0 / q;
    RegimeReport r;
    r.margin_dl = 1.0 - ip - iq;
    r.dl_unique = r.margin_dl >= 0.0;
    r.margin_nonunique = (d - 1) * ip / d + iq - 1.0;
    r.nonunique_weak = r.margin_nonunique > 0.0;
    const double lower = q - d / (2.0 * (1.0 - alpha));
    const double upper = 2.0 - q;
    r.margin_noise = std::min(lower, upper);
    r.noise_wellposed = lower > 0.0 && upper >= 0.0;
    r.unchecked = {"b in L^inf_t L^{(p-1)/p}_x integrability", "div b in L^1_t L^inf_x and L^inf_t H^theta_x"};
    return r;
}

} // namespace ktl
