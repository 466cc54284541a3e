#include "ktl/solver.hpp"

#include <cmath>
#include <sstream>

#include "ktl/errors.hpp"
#include "ktl/interp.hpp"

namespace ktl {

std::string to_string(Scheme s) { return s == Scheme::ito_euler ? "ito_euler" : "strat_midpoint"; }

Scheme scheme_from_string(const std::string& s) {
    if (s == "ito_euler") return Scheme::ito_euler;
    if (s == "strat_midpoint") return Scheme::strat_midpoint;
    throw InputError("unknown scheme '" + s + "'");
}

std::string to_string(Transport t) { return t == Transport::spectral ? "spectral" : "semi_lagrangian"; }

Transport transport_from_string(const std::string& s) {
    if (s == "spectral") return Transport::spectral;
    if (s == "semi_lagrangian") return Transport::semi_lagrangian;
    throw InputError("unknown transport mode '" + s + "'");
}

void SolverConfig::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InputError("solver: epsilon must lie in [0, 1]");
    if (!(kappa >= 0.0 && kappa < 1.0)) throw InputError("solver: kappa must lie in [0, 1)");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("solver: dt must be positive");
    if (!(T > 0.0) || !std::isfinite(T)) throw InputError("solver: T must be positive");
    if (record_every < 1) throw InputError("solver: record_every must be >= 1");
    if (strat_iterations < 1) throw InputError("solver: strat_iterations must be >= 1");
    if (!(strat_tol > 0.0)) throw InputError("solver: strat_tol must be positive");
    const double r = T / dt;
    if (std::abs(r - std::round(r)) > 1e-9 * r) throw InputError("solver: T must be an integer multiple of dt");
    if (transport == Transport::semi_lagrangian && scheme != Scheme::strat_midpoint)
        throw InputError("solver: semi-Lagrangian transport is only available with strat_midpoint");
    if (track_martingale && (scheme != Scheme::ito_euler || transport != Transport::spectral))
        throw InputError("solver: inline martingale tracking needs ito_euler with spectral transport");
}

int SolverConfig::steps() const { return static_cast<int>(std::llround(T / dt)); }

const double* Trajectory::increments(int step) const {
    if (nmodes == 0) return nullptr;
    if (!has_log()) throw InputError("trajectory has no coefficient log");
    return coeff_log.data() + static_cast<std::size_t>(step) * nmodes;
}

namespace {

bool noisy(const Problem& pb, const SolverConfig& cfg) { return cfg.epsilon > 0.0 && pb.basis != nullptr; }

SpaceTimeField transport_field(const Problem& pb, const SolverConfig& cfg) {
    SpaceTimeField u = pb.drift;
    if (cfg.epsilon == 0.0 && !pb.control.empty()) {
        if (!pb.basis) throw InputError("control requires a noise basis");
        u = u.plus(pb.control.as_field(*pb.basis, pb.rho0.grid()));
    }
    return u;
}

} // namespace

void check_stability(const Problem& pb, const SolverConfig& cfg) {
    cfg.validate();
    const Grid& g = pb.rho0.grid();
    g.validate();
    if (!pb.drift.empty() && pb.drift.grid != g) throw InputError("solver: drift grid differs from initial datum grid");
    if (cfg.epsilon > 0.0 && !pb.basis) throw InputError("solver: epsilon > 0 needs a noise basis");
    if (!pb.control.empty() && !pb.basis) throw InputError("solver: control needs a noise basis");
    if (pb.basis) {
        if (pb.basis->spec.d != g.d || pb.basis->spec.L != g.L)
            throw InputError("solver: noise basis does not match grid dimension/box");
        if (pb.basis->max_component() > g.N / 2 - 1) {
            std::ostringstream os;
            os << "noise cutoff exceeds grid Nyquist: max |k_a| = " << pb.basis->max_component()
               << " but N/2-1 = " << g.N / 2 - 1;
            throw NumericalError(os.str(), 0.0);
        }
    }
    const double kmax = g.k0() * g.dealias_cut();
    if (cfg.transport == Transport::spectral) {
        const double U = transport_field(pb, cfg).max_speed(cfg.T);
        const double c = cfg.dt * U * kmax;
        if (c > 1.0) {
            std::ostringstream os;
            os << "advective CFL violated: dt*|u|max*kmax = " << c << " > 1";
            throw NumericalError(os.str(), 0.0);
        }
    }
    if (cfg.laplacian == LaplacianMode::explicit_euler) {
        const double coef = (cfg.scheme == Scheme::ito_euler ? 1.0 + cfg.kappa : cfg.kappa) * cfg.epsilon * cfg.epsilon;
        const double a = cfg.dt * coef * g.d * kmax * kmax;
        if (a > 1.0) {
            std::ostringstream os;
            os << "explicit diffusion bound violated: dt*(1+kappa)eps^2*|xi|max^2 = " << a << " > 1";
            throw NumericalError(os.str(), 0.0);
        }
    }
}

StepKernel::StepKernel(const Problem& pb, const SolverConfig& cfg) : cfg_(cfg), grid_(pb.rho0.grid()) {
    tab_ = spectral_tables(grid_);
    u_field_ = transport_field(pb, cfg);
    stationary_ = !u_field_.time_dependent();
    if (!u_field_.empty() && stationary_) u_field_.eval_into(0.0, u_cache_);
    if (noisy(pb, cfg)) synth_ = std::make_unique<NoiseSynth>(*pb.basis, grid_);
    const std::size_t n = grid_.size();
    const double eps2 = cfg.epsilon * cfg.epsilon;
    const double coef = (cfg.scheme == Scheme::ito_euler ? 1.0 + cfg.kappa : cfg.kappa) * eps2;
    mult_.resize(n);
    lap_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        lap_[i] = -coef * cfg.dt * tab_->ksq[i];
        mult_[i] = cfg.laplacian == LaplacianMode::integrating_factor ? std::exp(lap_[i]) : 1.0 + lap_[i];
    }
    sc_a_.resize(n);
    sc_b_.resize(n);
    sc_c_.resize(n);
    prod_.resize(n);
    grad_.assign(grid_.d, std::vector<double>(n));
    w_.assign(grid_.d, std::vector<double>(n, 0.0));
    bool compressible = false;
    for (const auto& term : u_field_.terms) {
        div_terms_.push_back(divergence(term.F).values());
        for (double v : div_terms_.back())
            if (std::abs(v) > 1e-12) compressible = true;
    }
    if (!compressible) div_terms_.clear();
}

void StepKernel::velocity(double t, std::vector<std::vector<double>>& u) {
    if (u_field_.empty()) {
        u.assign(grid_.d, std::vector<double>(grid_.size(), 0.0));
        return;
    }
    if (stationary_) {
        u = u_cache_;
        return;
    }
    u_field_.eval_into(t, u);
}

void StepKernel::noise_physical(const double* dw, std::vector<std::vector<double>>& w) {
    w.assign(grid_.d, std::vector<double>(grid_.size(), 0.0));
    if (!synth_ || !dw) return;
    synth_->spectral(dw, wspec_);
    for (int a = 0; a < grid_.d; ++a) fft_inverse_real(grid_, wspec_[a].data(), w[a].data(), sc_a_.data());
}

void StepKernel::transport_term(double t, const std::vector<std::vector<double>>& w, const cplx* rho, cplx* out,
                                bool with_drift, bool with_noise) {
    const std::size_t n = grid_.size();
    const int d = grid_.d;
    for (int a = 0; a < d; ++a) {
        const auto& k = tab_->kd[a];
        for (std::size_t i = 0; i < n; ++i) sc_a_[i] = cplx(-k[i] * rho[i].imag(), k[i] * rho[i].real());
        fft_inverse_real(grid_, sc_a_.data(), grad_[a].data(), sc_c_.data());
    }
    std::fill(prod_.begin(), prod_.end(), 0.0);
    const bool drift = with_drift && !u_field_.empty();
    const std::vector<std::vector<double>>* u = nullptr;
    if (drift) {
        if (stationary_) {
            u = &u_cache_;
        } else {
            u_field_.eval_into(t, u_);
            u = &u_;
        }
    }
    const double dt = cfg_.dt, eps = cfg_.epsilon;
    const bool noise = with_noise && synth_;
    for (int a = 0; a < d; ++a) {
        const double* g = grad_[a].data();
        if (drift && noise) {
            const double* ua = (*u)[a].data();
            const double* wa = w[a].data();
            for (std::size_t i = 0; i < n; ++i) prod_[i] += (dt * ua[i] + eps * wa[i]) * g[i];
        } else if (drift) {
            const double* ua = (*u)[a].data();
            for (std::size_t i = 0; i < n; ++i) prod_[i] += dt * ua[i] * g[i];
        } else if (noise) {
            const double* wa = w[a].data();
            for (std::size_t i = 0; i < n; ++i) prod_[i] += eps * wa[i] * g[i];
        }
    }
    fft_forward_real(grid_, prod_.data(), out, sc_a_.data());
    const auto& keep = tab_->keep;
    for (std::size_t i = 0; i < n; ++i)
        if (!keep[i]) out[i] = cplx{};
}

void StepKernel::advance_spectral(int n, const double* dw, const cplx* in, cplx* out) {
    const std::size_t m = grid_.size();
    const double t0 = n * cfg_.dt;
    if (synth_ && dw) noise_physical(dw, w_);
    const bool with_noise = synth_ && dw;
    if (cfg_.scheme == Scheme::ito_euler) {
        transport_term(t0, w_, in, sc_b_.data(), true, with_noise);
        if (cfg_.laplacian == LaplacianMode::integrating_factor) {
            for (std::size_t i = 0; i < m; ++i) out[i] = mult_[i] * (in[i] - sc_b_[i]);
        } else {
            for (std::size_t i = 0; i < m; ++i) out[i] = in[i] - sc_b_[i] + lap_[i] * in[i];
        }
        return;
    }
    const double th = t0 + 0.5 * cfg_.dt;
    if (cfg_.strat_implicit) {
        midpoint_solve(th, in, out);
        for (std::size_t i = 0; i < m; ++i) out[i] *= mult_[i];
        return;
    }
    // Single pass: predictor, then the transport at the averaged state.
    h1_.resize(m);
    star_.resize(m);
    transport_term(th, w_, in, h1_.data(), true, with_noise);
    for (std::size_t i = 0; i < m; ++i) star_[i] = 0.5 * (in[i] + (in[i] - h1_[i]));
    transport_term(th, w_, star_.data(), h1_.data(), true, with_noise);
    for (std::size_t i = 0; i < m; ++i) out[i] = mult_[i] * (in[i] - h1_[i]);
}

void StepKernel::transport_adjoint(double t, const std::vector<std::vector<double>>& w, const cplx* y, cplx* out) {
    const std::size_t n = grid_.size();
    transport_term(t, w, y, out, true, true);
    for (std::size_t i = 0; i < n; ++i) out[i] = -out[i];
    if (div_terms_.empty()) return;
    fft_inverse_real(grid_, y, prod_.data(), sc_c_.data());
    std::vector<double>& dv = grad_[0];
    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t k = 0; k < div_terms_.size(); ++k) {
        const double s = u_field_.terms[k].s ? u_field_.terms[k].s(t) : 1.0;
        for (std::size_t i = 0; i < n; ++i) dv[i] += s * div_terms_[k][i];
    }
    for (std::size_t i = 0; i < n; ++i) prod_[i] *= cfg_.dt * dv[i];
    fft_forward_real(grid_, prod_.data(), sc_b_.data(), sc_a_.data());
    const auto& keep = tab_->keep;
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) out[i] -= sc_b_[i];
}

// Implicit midpoint x = in - A((in + x)/2) with A the projected transport.
// Modes outside the retained band pass through unchanged, so the unknown is
// the retained part x_k of x:
//   (I + A_kk/2) x_k = in_k - A(in + in_d)/2,
// solved by conjugate gradients on the normal equations.
void StepKernel::midpoint_solve(double t, const cplx* in, cplx* out) {
    const std::size_t n = grid_.size();
    const auto& keep = tab_->keep;
    const bool noise = synth_ != nullptr;
    cg_x_.resize(n);
    cg_r_.resize(n);
    cg_z_.resize(n);
    cg_p_.resize(n);
    cg_q_.resize(n);
    h1_.resize(n);
    star_.resize(n);
    auto dot = [&](const std::vector<cplx>& a, const std::vector<cplx>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
        return s;
    };
    auto apply_M = [&](const std::vector<cplx>& x, std::vector<cplx>& y) {
        transport_term(t, w_, x.data(), y.data(), true, noise);
        for (std::size_t i = 0; i < n; ++i) y[i] = keep[i] ? x[i] + 0.5 * y[i] : cplx{};
    };
    auto apply_Mt = [&](const std::vector<cplx>& x, std::vector<cplx>& y) {
        transport_adjoint(t, w_, x.data(), y.data());
        for (std::size_t i = 0; i < n; ++i) y[i] = keep[i] ? x[i] + 0.5 * y[i] : cplx{};
    };
    // right-hand side b in star_, dropped modes kept aside in out
    bool any_drop = false;
    for (std::size_t i = 0; i < n; ++i) {
        star_[i] = keep[i] ? in[i] : 2.0 * in[i];
        if (!keep[i] && in[i] != cplx{}) any_drop = true;
    }
    transport_term(t, w_, any_drop ? star_.data() : in, h1_.data(), true, noise);
    for (std::size_t i = 0; i < n; ++i) star_[i] = keep[i] ? in[i] - 0.5 * h1_[i] : cplx{};
    const double bnorm = std::sqrt(dot(star_, star_));
    // initial guess (I - A/2) b, second-order accurate
    transport_term(t, w_, star_.data(), h1_.data(), true, noise);
    for (std::size_t i = 0; i < n; ++i) cg_x_[i] = keep[i] ? star_[i] - 0.5 * h1_[i] : cplx{};
    apply_M(cg_x_, cg_q_);
    for (std::size_t i = 0; i < n; ++i) cg_r_[i] = star_[i] - cg_q_[i];
    apply_Mt(cg_r_, cg_z_);
    cg_p_ = cg_z_;
    double zz = dot(cg_z_, cg_z_);
    bool converged = bnorm == 0.0;
    for (int it = 0; it < cfg_.strat_iterations && !converged; ++it) {
        if (std::sqrt(dot(cg_r_, cg_r_)) <= cfg_.strat_tol * bnorm || zz == 0.0) {
            converged = true;
            break;
        }
        apply_M(cg_p_, cg_q_);
        const double alpha = zz / dot(cg_q_, cg_q_);
        for (std::size_t i = 0; i < n; ++i) {
            cg_x_[i] += alpha * cg_p_[i];
            cg_r_[i] -= alpha * cg_q_[i];
        }
        apply_Mt(cg_r_, cg_z_);
        const double zz_new = dot(cg_z_, cg_z_);
        const double beta = zz_new / zz;
        zz = zz_new;
        for (std::size_t i = 0; i < n; ++i) cg_p_[i] = cg_z_[i] + beta * cg_p_[i];
    }
    if (!converged && std::sqrt(dot(cg_r_, cg_r_)) > cfg_.strat_tol * bnorm)
        throw NumericalError("midpoint solve did not converge", t);
    for (std::size_t i = 0; i < n; ++i) out[i] = keep[i] ? cg_x_[i] : in[i];
}

void StepKernel::advance_ito_split(int n, const double* dw, const cplx* in, cplx* p0, cplx* p1) {
    const std::size_t m = grid_.size();
    const double t0 = n * cfg_.dt;
    if (cfg_.scheme != Scheme::ito_euler) throw InputError("advance_ito_split needs the Itô scheme");
    if (synth_ && dw) noise_physical(dw, w_);
    transport_term(t0, w_, in, p0, true, false);
    if (synth_ && dw) {
        transport_term(t0, w_, in, p1, false, true);
    } else {
        std::fill(p1, p1 + m, cplx{});
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (cfg_.laplacian == LaplacianMode::integrating_factor) {
            p0[i] = mult_[i] * (in[i] - p0[i]);
            p1[i] = -mult_[i] * p1[i];
        } else {
            p0[i] = in[i] - p0[i] + lap_[i] * in[i];
            p1[i] = -p1[i];
        }
    }
}

void StepKernel::advance_semi_lagrangian(int n, const double* dw, const double* in, double* out) {
    const std::size_t m = grid_.size();
    const int d = grid_.d;
    const double dt = cfg_.dt, eps = cfg_.epsilon;
    const double th = (n + 0.5) * dt;
    velocity(th, u_);
    if (synth_ && dw) {
        noise_physical(dw, w_);
    } else {
        for (auto& w : w_) std::fill(w.begin(), w.end(), 0.0);
    }
    // Displacement over the step at the grid nodes.
    std::vector<std::vector<double>> D(d, std::vector<double>(m));
    for (int a = 0; a < d; ++a)
        for (std::size_t i = 0; i < m; ++i) D[a][i] = dt * u_[a][i] + eps * w_[a][i];
    const double h = grid_.dx();
    for (std::size_t i = 0; i < m; ++i) {
        const Index3 idx = grid_.unflatten(i);
        double x[3], y[3], X[3];
        for (int a = 0; a < d; ++a) {
            x[a] = idx[a] * h;
            y[a] = x[a] - 0.5 * D[a][i];
        }
        for (int a = 0; a < d; ++a) X[a] = x[a] - interp_cubic(grid_, D[a].data(), y);
        out[i] = interp_cubic_clipped(grid_, in, X);
    }
    if (cfg_.kappa > 0.0 && eps > 0.0) {
        fft_forward_real(grid_, out, sc_b_.data(), sc_a_.data());
        for (std::size_t i = 0; i < m; ++i) sc_b_[i] *= mult_[i];
        fft_inverse_real(grid_, sc_b_.data(), out, sc_a_.data());
    }
}

Trajectory evolve(std::shared_ptr<const Problem> pb, const SolverConfig& cfg, const EvolveOptions& opt) {
    if (!pb) throw InputError("evolve: null problem");
    check_stability(*pb, cfg);
    const Grid& g = pb->rho0.grid();
    if (!pb->rho0.all_finite()) throw InputError("evolve: initial datum has non-finite values");
    StepKernel kernel(*pb, cfg);
    const int nsteps = cfg.steps();
    const bool has_noise = noisy(*pb, cfg);
    const std::size_t nmodes = has_noise ? pb->basis->size() : 0;
    if (opt.increments && opt.increments->size() != static_cast<std::size_t>(nsteps) * nmodes)
        throw InputError("evolve: supplied increments do not match steps x modes");

    Trajectory tr;
    tr.problem = pb;
    tr.cfg = cfg;
    tr.origin = cfg.transport == Transport::spectral ? "spectral" : "semi_lagrangian";
    tr.nsteps = nsteps;
    tr.nmodes = nmodes;
    if (cfg.log_coefficients && nmodes > 0) tr.coeff_log.resize(static_cast<std::size_t>(nsteps) * nmodes);
    tr.times.push_back(0.0);
    tr.snapshots.push_back(pb->rho0);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd(0.0, std::sqrt(cfg.dt));
    const bool shifted = has_noise && !pb->control.empty() && !opt.increments;
    std::vector<double> raw(nmodes), eff(nmodes), h;

    const std::size_t m = g.size();
    const double norm_scale = std::pow(g.L, g.d) / (static_cast<double>(m) * static_cast<double>(m));
    const double bound = 10.0 * std::exp(pb->drift.div_linf_integral(cfg.T)) * lp_norm(pb->rho0, 2.0);
    const double eps = cfg.epsilon;

    std::vector<cplx> hat(pb->rho0.spectrum()), next(m), p0(m), p1(m);
    std::vector<double> phys(pb->rho0.values()), phys_next(m);

    for (int n = 0; n < nsteps; ++n) {
        const double* dw = nullptr;
        if (nmodes > 0) {
            if (opt.increments) {
                dw = opt.increments->data() + static_cast<std::size_t>(n) * nmodes;
            } else {
                for (auto& r : raw) r = nd(rng);
                if (shifted) {
                    pb->control.coefficients(n * cfg.dt, nmodes, h);
                    double lin = 0.0, quad = 0.0;
                    for (std::size_t j = 0; j < nmodes; ++j) {
                        eff[j] = raw[j] + h[j] * cfg.dt / eps;
                        lin += h[j] * raw[j];
                        quad += h[j] * h[j];
                    }
                    tr.log_lr += -lin / eps - 0.5 * quad * cfg.dt / (eps * eps);
                    dw = eff.data();
                } else {
                    dw = raw.data();
                }
            }
            if (!tr.coeff_log.empty())
                std::copy(dw, dw + nmodes, tr.coeff_log.begin() + static_cast<std::ptrdiff_t>(n * nmodes));
        }
        double norm2 = 0.0;
        if (cfg.transport == Transport::spectral) {
            if (cfg.track_martingale) {
                kernel.advance_ito_split(n, dw, hat.data(), p0.data(), p1.data());
                double cross = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    next[i] = p0[i] + p1[i];
                    cross += p0[i].real() * p1[i].real() + p0[i].imag() * p1[i].imag();
                }
                tr.martingale_term -= 2.0 * cross * norm_scale;
            } else {
                kernel.advance_spectral(n, dw, hat.data(), next.data());
            }
            hat.swap(next);
            for (const auto& c : hat) norm2 += std::norm(c);
            norm2 *= norm_scale;
        } else {
            kernel.advance_semi_lagrangian(n, dw, phys.data(), phys_next.data());
            phys.swap(phys_next);
            for (double v : phys) norm2 += v * v;
            norm2 *= g.cell_volume();
        }
        const double t1 = (n + 1) * cfg.dt;
        if (!(std::sqrt(norm2) <= bound) && !(bound == 0.0 && norm2 == 0.0)) {
            std::ostringstream os;
            os << "blow-up guard: ||rho||_L2 = " << std::sqrt(norm2) << " exceeds " << bound << " at t = " << t1;
            throw NumericalError(os.str(), t1);
        }
        if ((n + 1) % cfg.record_every == 0 || n + 1 == nsteps) {
            tr.times.push_back(t1);
            if (cfg.transport == Transport::spectral)
                tr.snapshots.push_back(ScalarField::from_spectrum(g, hat));
            else
                tr.snapshots.push_back(ScalarField::from_values(g, phys));
        }
    }
    tr.has_martingale = cfg.track_martingale;
    return tr;
}

Trajectory evolve(const ScalarField& rho0, const SpaceTimeField& b, const Control& g,
                  std::shared_ptr<const NoiseBasis> basis, const SolverConfig& cfg) {
    auto pb = std::make_shared<Problem>();
    pb->rho0 = rho0;
    pb->drift = b;
    pb->control = g;
    pb->basis = std::move(basis);
    return evolve(pb, cfg);
}

namespace {

ScalarField single_step(const ScalarField& rho, const VectorField& b, const VectorField& gf, const NoiseBasis& basis,
                        SolverConfig cfg, const std::vector<double>* dw, std::mt19937_64* rng, Scheme scheme) {
    cfg.scheme = scheme;
    cfg.T = cfg.dt;
    cfg.record_every = 1;
    auto pb = std::make_shared<Problem>();
    pb->rho0 = rho;
    pb->drift = SpaceTimeField(rho.grid());
    if (!b.comp.empty()) pb->drift.add(b, nullptr);
    if (!gf.comp.empty()) pb->drift.add(gf, nullptr);
    if (cfg.epsilon > 0.0) pb->basis = std::make_shared<NoiseBasis>(basis);
    check_stability(*pb, cfg);
    StepKernel kernel(*pb, cfg);
    std::vector<double> draw;
    const double* inc = nullptr;
    if (cfg.epsilon > 0.0) {
        if (dw) {
            if (dw->size() != basis.size()) throw InputError("step: increment count does not match basis");
            inc = dw->data();
        } else {
            std::normal_distribution<double> nd(0.0, std::sqrt(cfg.dt));
            draw.resize(basis.size());
            for (auto& r : draw) r = nd(*rng);
            inc = draw.data();
        }
    }
    const std::size_t m = rho.size();
    if (cfg.transport == Transport::spectral) {
        std::vector<cplx> out(m);
        kernel.advance_spectral(0, inc, rho.spectrum().data(), out.data());
        ScalarField r = ScalarField::from_spectrum(rho.grid(), std::move(out));
        if (!r.all_finite()) throw NumericalError("step produced non-finite values", cfg.dt);
        return r;
    }
    std::vector<double> out(m);
    kernel.advance_semi_lagrangian(0, inc, rho.values().data(), out.data());
    return ScalarField::from_values(rho.grid(), std::move(out));
}

} // namespace

ScalarField step_ito(const ScalarField& rho, const VectorField& b, const VectorField& g, const NoiseBasis& basis,
                     const SolverConfig& cfg, std::mt19937_64& rng) {
    return single_step(rho, b, g, basis, cfg, nullptr, &rng, Scheme::ito_euler);
}

ScalarField step_ito(const ScalarField& rho, const VectorField& b, const VectorField& g, const NoiseBasis& basis,
                     const SolverConfig& cfg, const std::vector<double>& dw) {
    return single_step(rho, b, g, basis, cfg, &dw, nullptr, Scheme::ito_euler);
}

ScalarField step_stratonovich(const ScalarField& rho, const VectorField& b, const VectorField& g,
                              const NoiseBasis& basis, const SolverConfig& cfg, std::mt19937_64& rng) {
    return single_step(rho, b, g, basis, cfg, nullptr, &rng, Scheme::strat_midpoint);
}

ScalarField step_stratonovich(const ScalarField& rho, const VectorField& b, const VectorField& g,
                              const NoiseBasis& basis, const SolverConfig& cfg, const std::vector<double>& dw) {
    return single_step(rho, b, g, basis, cfg, &dw, nullptr, Scheme::strat_midpoint);
}

std::vector<double> coarsen_increments(const std::vector<double>& log, std::size_t nmodes, int factor) {
    if (nmodes == 0) return {};
    if (factor < 1 || log.size() % (nmodes * factor) != 0) throw InputError("coarsen_increments: step count not divisible");
    const std::size_t coarse = log.size() / (nmodes * factor);
    std::vector<double> out(coarse * nmodes, 0.0);
    for (std::size_t s = 0; s < coarse; ++s)
        for (int f = 0; f < factor; ++f)
            for (std::size_t j = 0; j < nmodes; ++j) out[s * nmodes + j] += log[(s * factor + f) * nmodes + j];
    return out;
}

void replay(const Trajectory& traj, const std::function<void(int, const ScalarField&, const ScalarField&)>& visit) {
    if (!traj.problem) throw InputError("replay: trajectory has no problem attached");
    if (!traj.has_log()) throw InputError("replay: trajectory without coefficient log");
    const Problem& pb = *traj.problem;
    SolverConfig cfg = traj.cfg;
    cfg.track_martingale = false;
    StepKernel kernel(pb, cfg);
    const Grid& g = pb.rho0.grid();
    ScalarField cur = pb.rho0;
    std::vector<cplx> next(g.size());
    std::vector<double> pn(g.size());
    for (int n = 0; n < traj.nsteps; ++n) {
        const double* dw = traj.increments(n);
        ScalarField nxt;
        if (kernel.spectral()) {
            kernel.advance_spectral(n, dw, cur.spectrum().data(), next.data());
            nxt = ScalarField::from_spectrum(g, next);
        } else {
            kernel.advance_semi_lagrangian(n, dw, cur.values().data(), pn.data());
            nxt = ScalarField::from_values(g, pn);
        }
        visit(n, cur, nxt);
        cur = std::move(nxt);
    }
}

std::vector<double> weak_residual(const Trajectory& traj, const ScalarField& phi) {
    if (!traj.problem) throw InputError("weak_residual: trajectory has no problem attached");
    if (traj.nmodes > 0 && !traj.has_log()) throw InputError("weak_residual: trajectory without coefficient log");
    const Problem& pb = *traj.problem;
    const Grid& g = pb.rho0.grid();
    if (phi.grid() != g) throw InputError("weak_residual: test function grid differs");
    const SolverConfig& cfg = traj.cfg;
    StepKernel kernel(pb, cfg);
    const VectorField gphi = gradient_spectral(phi);
    const ScalarField lphi = laplacian(phi);
    const double eps = cfg.epsilon, dt = cfg.dt;
    const double diff = (1.0 + cfg.kappa) * eps * eps;
    const double vol = g.cell_volume();
    const std::size_t m = g.size();
    const double base = inner(pb.rho0, phi);

    std::vector<double> out;
    out.push_back(0.0);
    double acc = 0.0;
    std::vector<std::vector<double>> u, w;
    std::size_t snap = 1;
    replay(traj, [&](int n, const ScalarField& rho, const ScalarField& next) {
        const double t = n * dt;
        kernel.velocity(t, u);
        kernel.noise_physical(traj.increments(n), w);
        VectorField uf;
        uf.grid = g;
        for (int a = 0; a < g.d; ++a) uf.comp.push_back(ScalarField::from_values(g, u[a]));
        const auto& divu = divergence(uf).values();
        const auto& r = rho.values();
        double s_adv = 0.0, s_div = 0.0, s_noise = 0.0;
        for (int a = 0; a < g.d; ++a) {
            const auto& ga = gphi.comp[a].values();
            for (std::size_t i = 0; i < m; ++i) {
                s_adv += u[a][i] * r[i] * ga[i];
                s_noise += w[a][i] * r[i] * ga[i];
            }
        }
        for (std::size_t i = 0; i < m; ++i) s_div += divu[i] * r[i] * phi.values()[i];
        acc += vol * (dt * s_adv + dt * s_div + eps * s_noise) + diff * dt * inner(rho, lphi);
        if (snap < traj.times.size() && std::abs((n + 1) * dt - traj.times[snap]) < 0.5 * dt) {
            out.push_back(inner(next, phi) - base - acc);
            ++snap;
        }
    });
    return out;
}

} // namespace ktl
