#include "ktl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ktl/errors.hpp"
#include "ktl/format.hpp"

namespace ktl {

namespace {

void require_ito_spectral(const Trajectory& traj, const char* who) {
    if (!traj.problem) throw InputError(std::string(who) + ": trajectory has no problem description");
    if (traj.cfg.scheme != Scheme::ito_euler || traj.cfg.transport != Transport::spectral)
        throw InputError(std::string(who) + ": needs an ito_euler trajectory with spectral transport");
    if (traj.nmodes > 0 && (!traj.has_log() || traj.coeff_log.empty()))
        throw InputError(std::string(who) + ": trajectory has no coefficient log");
    if (traj.cfg.epsilon > 0.0 && traj.problem->basis && traj.nmodes == 0)
        throw InputError(std::string(who) + ": trajectory has no coefficient log");
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) s += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

// One axis of the cos^2 partition of unity: value, first and second derivative
// of bump j at every grid coordinate.
struct Bumps {
    std::vector<std::vector<double>> f, f1, f2;
};

Bumps make_bumps(const Grid& g, int B) {
    Bumps b;
    const double h = g.L / B;
    const double w = std::numbers::pi / (2.0 * h);
    b.f.assign(B, std::vector<double>(g.N, 0.0));
    b.f1 = b.f;
    b.f2 = b.f;
    for (int j = 0; j < B; ++j)
        for (int i = 0; i < g.N; ++i) {
            double r = i * g.dx() - j * h;
            r -= g.L * std::floor(r / g.L + 0.5);
            if (std::abs(r) > h) continue;
            const double th = w * r;
            // cos^2 is only C^1: at the support edge f'' jumps from 2w^2 to 0.
            // Take the two-sided mean there so the f'' of the bumps sums to zero.
            // With two blocks the bump is a full period and smooth.
            if (B > 2 && std::abs(std::abs(r) - h) <= 1e-12 * h) {
                b.f2[j][i] = w * w;
                continue;
            }
            b.f[j][i] = std::cos(th) * std::cos(th);
            b.f1[j][i] = -std::sin(2.0 * th) * w;
            b.f2[j][i] = -2.0 * std::cos(2.0 * th) * w * w;
        }
    return b;
}

} // namespace

double martingale_accumulation(const Trajectory& traj) {
    require_ito_spectral(traj, "martingale_accumulation");
    const Problem& pb = *traj.problem;
    const Grid& g = pb.rho0.grid();
    const std::size_t m = g.size();
    StepKernel kernel(pb, traj.cfg);
    std::vector<cplx> hat(pb.rho0.spectrum()), p0(m), p1(m);
    const double scale = std::pow(g.L, g.d) / (static_cast<double>(m) * static_cast<double>(m));
    double acc = 0.0;
    for (int n = 0; n < traj.nsteps; ++n) {
        kernel.advance_ito_split(n, traj.increments(n), hat.data(), p0.data(), p1.data());
        double cross = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            cross += p0[i].real() * p1[i].real() + p0[i].imag() * p1[i].imag();
            hat[i] = p0[i] + p1[i];
        }
        acc -= 2.0 * cross * scale;
    }
    return acc;
}

EnergyLedger energy_ledger(const Trajectory& traj, const std::vector<double>& p_list,
                           const std::vector<double>& s_list, bool with_martingale) {
    EnergyLedger l;
    l.times = traj.times;
    l.p_list = p_list;
    l.s_list = s_list;
    l.lp.assign(p_list.size(), {});
    l.hs.assign(s_list.size(), {});
    for (const auto& f : traj.snapshots) {
        const double n2 = lp_norm(f, 2.0);
        l.l2_squared.push_back(n2 * n2);
        for (std::size_t i = 0; i < p_list.size(); ++i) l.lp[i].push_back(lp_norm(f, p_list[i]));
        for (std::size_t i = 0; i < s_list.size(); ++i) l.hs[i].push_back(sobolev_norm(f, s_list[i]));
    }
    if (traj.has_martingale) {
        l.martingale_term = traj.martingale_term;
        l.has_martingale = true;
    } else if (with_martingale && traj.problem && traj.cfg.scheme == Scheme::ito_euler &&
               traj.cfg.transport == Transport::spectral) {
        l.martingale_term = martingale_accumulation(traj);
        l.has_martingale = true;
    }
    return l;
}

double DissipationEstimate::at(int bin, std::size_t cell) const {
    const std::size_t per = cells.size() / static_cast<std::size_t>(time_bins);
    return cells.at(static_cast<std::size_t>(bin) * per + cell);
}

DissipationEstimate dissipation_measure(const Trajectory& traj, const CellPartition& part) {
    require_ito_spectral(traj, "dissipation_measure");
    if (part.time_bins < 1) throw InputError("dissipation_measure: time_bins must be >= 1");
    if (part.space_blocks < 2) throw InputError("dissipation_measure: space_blocks must be >= 2");
    const Problem& pb = *traj.problem;
    const Grid& g = pb.rho0.grid();
    for (const auto& term : pb.drift.terms) {
        const double dv = lp_norm(divergence(term.F), kInf);
        const double sc = 1.0 + l2_norm(term.F) / std::sqrt(g.volume());
        if (dv > 1e-8 * sc) throw InputError("dissipation_measure: drift is not divergence-free");
    }
    const SolverConfig& cfg = traj.cfg;
    const int d = g.d;
    const std::size_t m = g.size();
    const int B = part.space_blocks;
    std::size_t ncell = 1;
    for (int a = 0; a < d; ++a) ncell *= static_cast<std::size_t>(B);
    const int bins = std::min(part.time_bins, std::max(1, traj.nsteps));

    DissipationEstimate est;
    est.time_bins = bins;
    est.space_blocks = B;
    est.d = d;
    est.cells.assign(static_cast<std::size_t>(bins) * ncell, 0.0);
    for (int k = 0; k <= bins; ++k) est.bin_edges.push_back(cfg.T * k / bins);

    StepKernel kernel(pb, cfg);
    const Bumps bump = make_bumps(g, B);
    std::vector<cplx> hat(pb.rho0.spectrum()), p0(m), p1(m), scratch(m);
    std::vector<double> rho(pb.rho0.values()), q0(m), q1(m);
    std::vector<double> A0(m, 0.0), A2(m, 0.0);
    std::vector<std::vector<double>> A1(d, std::vector<double>(m, 0.0)), u;
    const double lap_coef = (1.0 + cfg.kappa) * cfg.epsilon * cfg.epsilon * cfg.dt;
    const double dV = g.cell_volume();
    const double scale = std::pow(g.L, d) / (static_cast<double>(m) * static_cast<double>(m));

    auto flush = [&](int bin) {
        double* out = est.cells.data() + static_cast<std::size_t>(bin) * ncell;
        for (std::size_t c = 0; c < ncell; ++c) {
            int j[3] = {0, 0, 0};
            std::size_t r = c;
            for (int a = d - 1; a >= 0; --a) {
                j[a] = static_cast<int>(r % B);
                r /= B;
            }
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const Index3 idx = g.unflatten(i);
                double f[3], f1[3], f2[3];
                bool zero = false;
                for (int a = 0; a < d; ++a) {
                    f[a] = bump.f[j[a]][idx[a]];
                    f1[a] = bump.f1[j[a]][idx[a]];
                    f2[a] = bump.f2[j[a]][idx[a]];
                    if (f[a] == 0.0 && f1[a] == 0.0 && f2[a] == 0.0) zero = true;
                }
                if (zero) continue;
                double phi = 1.0, lap = 0.0, grad_dot = 0.0;
                for (int a = 0; a < d; ++a) phi *= f[a];
                for (int a = 0; a < d; ++a) {
                    double ga = f1[a], la = f2[a];
                    for (int b = 0; b < d; ++b)
                        if (b != a) ga *= f[b], la *= f[b];
                    grad_dot += A1[a][i] * ga;
                    lap += la;
                }
                acc += A0[i] * phi + grad_dot + lap_coef * A2[i] * lap;
            }
            out[c] = acc * dV;
        }
        std::fill(A0.begin(), A0.end(), 0.0);
        std::fill(A2.begin(), A2.end(), 0.0);
        for (auto& v : A1) std::fill(v.begin(), v.end(), 0.0);
    };

    int bin = 0;
    for (int n = 0; n < traj.nsteps; ++n) {
        const int b_n = static_cast<int>(static_cast<long long>(n) * bins / traj.nsteps);
        if (b_n != bin) {
            flush(bin);
            bin = b_n;
        }
        const double* dw = traj.nmodes > 0 ? traj.increments(n) : nullptr;
        kernel.advance_ito_split(n, dw, hat.data(), p0.data(), p1.data());
        double cross = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            cross += p0[i].real() * p1[i].real() + p0[i].imag() * p1[i].imag();
            hat[i] = p0[i] + p1[i];
        }
        est.martingale_term -= 2.0 * cross * scale;
        fft_inverse_real(g, p0.data(), q0.data(), scratch.data());
        fft_inverse_real(g, p1.data(), q1.data(), scratch.data());
        kernel.velocity(n * cfg.dt, u);
        for (std::size_t i = 0; i < m; ++i) {
            const double e = rho[i] * rho[i];
            const double next = q0[i] + q1[i];
            // even part in the increment: e_n - P0^2 - P1^2
            A0[i] += e - q0[i] * q0[i] - q1[i] * q1[i];
            A2[i] += e;
            for (int a = 0; a < d; ++a) A1[a][i] += cfg.dt * u[a][i] * e;
            rho[i] = next;
        }
    }
    if (traj.nsteps > 0) flush(bin);

    double n0 = 0.0, nT = 0.0;
    for (double v : pb.rho0.values()) n0 += v * v;
    for (double v : rho) nT += v * v;
    est.l2_deficit = (n0 - nT) * dV;
    est.total = 0.0;
    double abs_sum = 0.0;
    est.worst_cell = est.cells.empty() ? 0.0 : est.cells[0];
    for (double c : est.cells) {
        est.total += c;
        abs_sum += std::abs(c);
        est.worst_cell = std::min(est.worst_cell, c);
    }
    est.identity_residual = est.total - (est.l2_deficit - est.martingale_term);
    const double tol = 1e-12 * std::max(1.0, n0 * dV);
    est.negative = est.worst_cell < -tol;
    est.tv_proxy = est.negative ? abs_sum : est.total;
    return est;
}

double regularization_functional(const std::vector<double>& times, const std::vector<ScalarField>& snaps,
                                 double epsilon, double alpha, double delta) {
    if (!(delta > 0.0 && delta < alpha)) throw InputError("regularization_functional: delta must lie in (0, alpha)");
    if (times.size() != snaps.size()) throw InputError("regularization_functional: times and snapshots differ in length");
    const double s = 1.0 - alpha - delta;
    std::vector<double> y;
    for (const auto& f : snaps) {
        const double v = sobolev_norm(f, s);
        y.push_back(v * v);
    }
    return epsilon * epsilon * trapezoid(times, y);
}

double regularization_functional(const Trajectory& traj, double epsilon, double alpha, double delta) {
    return regularization_functional(traj.times, traj.snapshots, epsilon, alpha, delta);
}

double kernel_transfer(const Lattice& lat, const std::vector<double>& a, const std::vector<double>& psi, double alpha,
                       const NoiseBasis* basis) {
    const std::size_t n = lat.points.size();
    if (a.size() != n || psi.size() != n) throw InputError("kernel_transfer: a and psi must live on the lattice");
    if (!(alpha > 0.0 && alpha < 0.5)) throw InputError("kernel_transfer: alpha must lie in (0, 1/2)");
    const int d = lat.d;
    const double k0 = 2.0 * std::numbers::pi / lat.L;
    const double pref = std::pow(2.0 * std::numbers::pi, -0.5 * d);
    // theta^2 by lattice vector for the basis weights
    auto basis_weight = [&](const Index3& k) -> double {
        if (!basis) return 0.0;
        for (const auto& md : basis->modes)
            if (md.k == k) return md.theta * md.theta;
        return 0.0;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] == 0.0) continue;
        const Index3& xi = lat.points[i];
        double xv[3] = {0, 0, 0};
        for (int c = 0; c < d; ++c) xv[c] = k0 * xi[c];
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dpsi = psi[j] - psi[i];
            if (dpsi == 0.0) continue;
            const Index3& eta = lat.points[j];
            Index3 k{0, 0, 0};
            double v[3] = {0, 0, 0}, vv = 0.0, vx = 0.0, xx = 0.0;
            for (int c = 0; c < d; ++c) {
                k[c] = xi[c] - eta[c];
                v[c] = k0 * k[c];
                vv += v[c] * v[c];
                vx += v[c] * xv[c];
                xx += xv[c] * xv[c];
            }
            const double perp = xx - vx * vx / vv;
            double w;
            if (basis) {
                w = basis_weight(k);
            } else {
                w = pref * std::pow(1.0 + vv, -0.5 * (d + 2.0 * alpha));
            }
            if (w == 0.0) continue;
            total += w * perp * a[i] * dpsi;
        }
    }
    return total;
}

double kernel_transfer(const ModeEnergy& a, const std::vector<double>& psi, double alpha, const NoiseBasis* basis) {
    const Grid& g = a.grid;
    if (psi.size() != a.e.size() || a.e.size() != g.size())
        throw InputError("kernel_transfer: a and psi must live on the same grid lattice");
    Lattice lat;
    lat.d = g.d;
    lat.L = g.L;
    for (std::size_t f = 0; f < g.size(); ++f) lat.points.push_back(g.mode_vector(f));
    if (!basis) return kernel_transfer(lat, a.e, psi, alpha, nullptr);
    if (basis->spec.d != g.d || basis->spec.L != g.L) throw InputError("kernel_transfer: basis does not match lattice");
    // Sparse form: eta = xi - k over the basis wavevectors; eta off the grid
    // lattice contributes psi = 0.
    std::vector<std::pair<Index3, double>> wk;
    for (const auto& md : basis->modes) {
        if (md.sine || md.pol != 0) continue;
        wk.emplace_back(md.k, md.theta * md.theta);
    }
    const double k0 = g.k0();
    const int d = g.d;
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (a.e[i] == 0.0) continue;
        const Index3 xi = g.mode_vector(i);
        for (const auto& [k, w] : wk) {
            Index3 eta{0, 0, 0};
            bool on = true;
            double vv = 0.0, vx = 0.0, xx = 0.0;
            for (int c = 0; c < d; ++c) {
                eta[c] = xi[c] - k[c];
                if (eta[c] <= -g.N / 2 || eta[c] > g.N / 2) on = false;
                const double v = k0 * k[c], x = k0 * xi[c];
                vv += v * v;
                vx += v * x;
                xx += x * x;
            }
            const double psi_eta = on ? psi[g.flat_of_mode(eta)] : 0.0;
            total += w * (xx - vx * vx / vv) * a.e[i] * (psi_eta - psi[i]);
        }
    }
    return total;
}

std::string to_string(Metric m) { return m == Metric::d_E ? "d_E" : "d_scriptE"; }

Metric metric_from_string(const std::string& s) {
    if (s == "d_E") return Metric::d_E;
    if (s == "d_scriptE") return Metric::d_scriptE;
    throw InputError("unknown metric '" + s + "'");
}

double weak_probe(const ScalarField& diff, int kmax) {
    const Grid& g = diff.grid();
    double best = 0.0;
    Index3 m{0, 0, 0};
    const int r = std::min(kmax, g.N / 2 - 1);
    std::function<void(int)> rec = [&](int axis) {
        if (axis == g.d) {
            int n2 = 0, first = 0;
            for (int a = 0; a < g.d; ++a) {
                n2 += m[a] * m[a];
                if (first == 0) first = m[a];
            }
            if (n2 > kmax * kmax || first < 0) return;
            const cplx c = diff.coefficient(g.flat_of_mode(m));
            if (n2 == 0) {
                best = std::max(best, std::abs(c.real()));
            } else {
                best = std::max({best, std::sqrt(2.0) * std::abs(c.real()), std::sqrt(2.0) * std::abs(c.imag())});
            }
            return;
        }
        for (int v = -r; v <= r; ++v) {
            m[axis] = v;
            rec(axis + 1);
        }
        m[axis] = 0;
    };
    rec(0);
    return best;
}

PathDistance path_distance(const std::vector<double>& ta, const std::vector<ScalarField>& a,
                           const std::vector<double>& tb, const std::vector<ScalarField>& b, Metric metric,
                           const DistanceOptions& opt) {
    if (a.empty() || b.empty() || ta.size() != a.size() || tb.size() != b.size())
        throw InputError("path_distance: empty or inconsistent trajectories");
    if (a.front().grid() != b.front().grid()) throw InputError("path_distance: incompatible grids");
    if (!(opt.p >= 1.0)) throw InputError("path_distance: p must be >= 1");
    PathDistance out;
    out.resampled = ta != tb;
    std::vector<ScalarField> diffs;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        std::size_t j = i;
        if (out.resampled) {
            j = 0;
            for (std::size_t k = 1; k < tb.size(); ++k)
                if (std::abs(tb[k] - ta[i]) < std::abs(tb[j] - ta[i])) j = k;
        }
        diffs.push_back(a[i] - b[j]);
    }
    if (metric == Metric::d_scriptE) {
        double s2 = 0.0, sp = 0.0;
        for (const auto& f : diffs) {
            s2 = std::max(s2, lp_norm(f, 2.0));
            sp = std::max(sp, lp_norm(f, opt.p));
        }
        out.value = s2 + sp;
        return out;
    }
    double series = 0.0;
    for (int n = 1; n <= opt.n_max; ++n) {
        double sup = 0.0;
        for (const auto& f : diffs) sup = std::max(sup, sobolev_norm(f, -1.0 / n));
        series += std::ldexp(1.0, -n) * std::min(1.0, sup);
    }
    double probe = 0.0;
    for (const auto& f : diffs) probe = std::max(probe, weak_probe(f, opt.probe_kmax));
    out.value = series + probe;
    return out;
}

PathDistance path_distance(const Trajectory& a, const Trajectory& b, Metric metric, const DistanceOptions& opt) {
    return path_distance(a.times, a.snapshots, b.times, b.snapshots, metric, opt);
}

std::string ledger_csv(const EnergyLedger& l, const std::string& config_hash) {
    std::ostringstream os;
    os << "config_hash,time,quantity,value\n";
    for (std::size_t k = 0; k < l.times.size(); ++k) {
        const std::string t = num(l.times[k]);
        os << config_hash << ',' << t << ",l2_squared," << num(l.l2_squared[k]) << '\n';
        for (std::size_t i = 0; i < l.p_list.size(); ++i)
            os << config_hash << ',' << t << ",lp_" << num(l.p_list[i]) << ',' << num(l.lp[i][k]) << '\n';
        for (std::size_t i = 0; i < l.s_list.size(); ++i)
            os << config_hash << ',' << t << ",hs_" << num(l.s_list[i]) << ',' << num(l.hs[i][k]) << '\n';
    }
    if (l.has_martingale && !l.times.empty())
        os << config_hash << ',' << num(l.times.back()) << ",martingale_term," << num(l.martingale_term) << '\n';
    return os.str();
}

nlohmann::ordered_json ledger_json(const EnergyLedger& l) {
    nlohmann::ordered_json j;
    j["times"] = l.times;
    j["l2_squared"] = l.l2_squared;
    auto lp = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < l.p_list.size(); ++i) lp.push_back({{"p", json_num(l.p_list[i])}, {"values", l.lp[i]}});
    j["lp"] = lp;
    auto hs = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < l.s_list.size(); ++i) hs.push_back({{"s", l.s_list[i]}, {"values", l.hs[i]}});
    j["hs"] = hs;
    j["has_martingale"] = l.has_martingale;
    j["martingale_term"] = l.martingale_term;
    return j;
}

std::string dissipation_csv(const DissipationEstimate& e, const std::string& config_hash) {
    std::ostringstream os;
    os << "config_hash,time_start,time_end,cell,value\n";
    const std::size_t per = e.time_bins ? e.cells.size() / e.time_bins : 0;
    for (int b = 0; b < e.time_bins; ++b)
        for (std::size_t c = 0; c < per; ++c)
            os << config_hash << ',' << num(e.bin_edges[b]) << ',' << num(e.bin_edges[b + 1]) << ',' << c << ','
               << num(e.at(b, c)) << '\n';
    return os.str();
}

nlohmann::ordered_json dissipation_json(const DissipationEstimate& e) {
    nlohmann::ordered_json j;
    j["time_bins"] = e.time_bins;
    j["space_blocks"] = e.space_blocks;
    j["d"] = e.d;
    j["bin_edges"] = e.bin_edges;
    j["total"] = e.total;
    j["l2_deficit"] = e.l2_deficit;
    j["martingale_term"] = e.martingale_term;
    j["identity_residual"] = e.identity_residual;
    j["negative"] = e.negative;
    j["worst_cell"] = e.worst_cell;
    j["tv_proxy"] = e.tv_proxy;
    j["cells"] = e.cells;
    return j;
}

} // namespace ktl
