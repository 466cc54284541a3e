#include "ktl/control.hpp"

#include <algorithm>
#include <cmath>

#include "ktl/errors.hpp"

namespace ktl {

bool Control::empty() const {
    return std::all_of(atoms.begin(), atoms.end(), [](const ControlAtom& a) { return a.amplitude == 0.0; });
}

void Control::coefficients(double t, std::size_t n, std::vector<double>& out) const {
    out.assign(n, 0.0);
    for (const auto& a : atoms) {
        if (a.amplitude == 0.0) continue;
        if (a.v.size() != n) throw InputError("control: coefficient vector does not match basis size");
        const double s = a.amplitude * profile_value(a.profile, t, T);
        for (std::size_t j = 0; j < n; ++j) out[j] += s * a.v[j];
    }
}

double Control::cost() const {
    // Gram matrix of the atoms by composite Simpson quadrature; profiles are smooth.
    const std::size_t m = atoms.size();
    if (m == 0) return 0.0;
    const int q = 2000;
    const double h = T / q;
    std::vector<double> gram(m * m, 0.0);
    for (int i = 0; i <= q; ++i) {
        const double t = i * h;
        const double w = (i == 0 || i == q) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        for (std::size_t a = 0; a < m; ++a) {
            const double pa = atoms[a].amplitude * profile_value(atoms[a].profile, t, T);
            for (std::size_t b = a; b < m; ++b)
                gram[a * m + b] += w * pa * atoms[b].amplitude * profile_value(atoms[b].profile, t, T);
        }
    }
    double total = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a; b < m; ++b) {
            if (atoms[a].v.size() != atoms[b].v.size()) throw InputError("control: atom sizes differ");
            double dot = 0.0;
            for (std::size_t j = 0; j < atoms[a].v.size(); ++j) dot += atoms[a].v[j] * atoms[b].v[j];
            total += (a == b ? 1.0 : 2.0) * dot * gram[a * m + b] * h / 3.0;
        }
    }
    return 0.5 * total;
}

SpaceTimeField Control::as_field(const NoiseBasis& basis, const Grid& grid) const {
    SpaceTimeField out(grid);
    for (const auto& a : atoms) {
        if (a.amplitude == 0.0) continue;
        VectorField f = noise_field(basis, grid, a.v);
        const Profile p = a.profile;
        const double amp = a.amplitude, TT = T;
        out.add(f, [p, amp, TT](double t) { return amp * profile_value(p, t, TT); });
    }
    return out;
}

Control Control::scaled(double s) const {
    Control c = *this;
    for (auto& a : c.atoms) a.amplitude *= s;
    return c;
}

std::vector<double> unit_mode_control(const NoiseBasis& basis, const Index3& k, int pol, bool sine) {
    const std::size_t jp = basis.find(k, pol, sine);
    const Index3 nk{-k[0], -k[1], -k[2]};
    const std::size_t jm = basis.find(nk, pol, sine);
    const auto& ep = basis.modes[jp].e;
    const auto& em = basis.modes[jm].e;
    double dot = 0.0;
    for (int a = 0; a < basis.spec.d; ++a) dot += ep[a] * em[a];
    // sigma_{-k} = s sigma_k with s = (e_{-k}.e_k) for cos, and its negative for sin.
    const double s = std::round(dot) * (sine ? -1.0 : 1.0);
    if (std::abs(std::abs(dot) - 1.0) > 1e-12) throw InputError("unit_mode_control: polarizations of k and -k not parallel");
    std::vector<double> v(basis.size(), 0.0);
    v[jp] = std::sqrt(0.5);
    v[jm] = s * std::sqrt(0.5);
    return v;
}

Control ControlDictionary::make(const std::vector<double>& theta) const {
    if (theta.size() != dim()) throw InputError("control dictionary: parameter count mismatch");
    Control c;
    c.T = T;
    for (std::size_t i = 0; i < spatial.size(); ++i)
        for (std::size_t p = 0; p < profiles.size(); ++p) {
            ControlAtom a;
            a.v = spatial[i];
            a.profile = profiles[p];
            a.amplitude = theta[i * profiles.size() + p];
            a.label = labels[i] + "*" + to_string(profiles[p]);
            c.atoms.push_back(std::move(a));
        }
    return c;
}

ControlDictionary default_dictionary(const NoiseBasis& basis, int n_spatial, const std::vector<Profile>& profiles,
                                     double T, double budget) {
    if (n_spatial < 1 || n_spatial > 8) throw InputError("control dictionary: 1..8 spatial modes");
    if (profiles.empty() || profiles.size() > 4) throw InputError("control dictionary: 1..4 time profiles");
    std::vector<const NoiseMode*> cands;
    for (const auto& m : basis.modes) {
        if (m.sine || m.pol != 0) continue;
        // canonical half-lattice: first nonzero component positive
        int first = 0;
        for (int a = 0; a < basis.spec.d; ++a)
            if (m.k[a] != 0) {
                first = m.k[a];
                break;
            }
        if (first > 0) cands.push_back(&m);
    }
    std::stable_sort(cands.begin(), cands.end(), [&](const NoiseMode* a, const NoiseMode* b) {
        int na = 0, nb = 0;
        for (int i = 0; i < basis.spec.d; ++i) na += a->k[i] * a->k[i], nb += b->k[i] * b->k[i];
        return na < nb;
    });
    ControlDictionary dict;
    dict.T = T;
    dict.budget = budget;
    dict.profiles = profiles;
    for (int i = 0; i < n_spatial && i < static_cast<int>(cands.size()); ++i) {
        dict.spatial.push_back(unit_mode_control(basis, cands[i]->k, 0, false));
        std::string lbl = "k=(";
        for (int a = 0; a < basis.spec.d; ++a) lbl += (a ? "," : "") + std::to_string(cands[i]->k[a]);
        dict.labels.push_back(lbl + ")");
    }
    return dict;
}

} // namespace ktl
