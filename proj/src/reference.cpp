#include "ktl/reference.hpp"

#include <cmath>
#include <memory>

#include "ktl/drift.hpp"
#include "ktl/errors.hpp"
#include "ktl/interp.hpp"
#include "ktl/stats.hpp"

namespace ktl {

namespace {

// Point evaluation of a grid field: exact trigonometric sum when the field
// has few modes, periodic cubic interpolation otherwise.
class PointEval {
public:
    explicit PointEval(const ScalarField& f) : f_(&f) {
        SparseSpectrum s(f);
        if (s.size() <= 64) {
            sparse_ = std::make_unique<SparseSpectrum>(std::move(s));
        }
    }
    double operator()(const double* x) const {
        if (sparse_) return sparse_->eval(x);
        return interp_cubic(f_->grid(), f_->values().data(), x);
    }

private:
    const ScalarField* f_;
    std::unique_ptr<SparseSpectrum> sparse_;
};

class VelocityEval {
public:
    explicit VelocityEval(const SpaceTimeField& u) : d_(u.grid.d) {
        for (const auto& t : u.terms) {
            Term term;
            term.s = t.s;
            for (const auto& c : t.F.comp) term.comp.emplace_back(std::make_unique<PointEval>(c));
            terms_.push_back(std::move(term));
        }
    }
    bool empty() const { return terms_.empty(); }
    void operator()(double t, const double* x, double* v) const {
        for (int a = 0; a < d_; ++a) v[a] = 0.0;
        for (const auto& term : terms_) {
            const double s = term.s ? term.s(t) : 1.0;
            if (s == 0.0) continue;
            for (int a = 0; a < d_; ++a) v[a] += s * (*term.comp[a])(x);
        }
    }

private:
    struct Term {
        std::function<double(double)> s;
        std::vector<std::unique_ptr<PointEval>> comp;
    };
    int d_;
    std::vector<Term> terms_;
};

void node_position(const Grid& g, std::size_t i, double* x) {
    const Index3 idx = g.unflatten(i);
    for (int a = 0; a < g.d; ++a) x[a] = idx[a] * g.dx();
}

// RK4 from t0 to t1 in `steps` equal steps, in place on y.
void rk4(const VelocityEval& u, int d, double t0, double t1, int steps, double* y) {
    const double h = (t1 - t0) / steps;
    double k1[3], k2[3], k3[3], k4[3], z[3];
    for (int s = 0; s < steps; ++s) {
        const double t = t0 + s * h;
        u(t, y, k1);
        for (int a = 0; a < d; ++a) z[a] = y[a] + 0.5 * h * k1[a];
        u(t + 0.5 * h, z, k2);
        for (int a = 0; a < d; ++a) z[a] = y[a] + 0.5 * h * k2[a];
        u(t + 0.5 * h, z, k3);
        for (int a = 0; a < d; ++a) z[a] = y[a] + h * k3[a];
        u(t + h, z, k4);
        for (int a = 0; a < d; ++a) y[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
    }
}

int ode_steps(double span, double ode_dt) {
    if (!(ode_dt > 0.0)) throw InputError("characteristics: ode_dt must be > 0");
    return std::max(1, static_cast<int>(std::ceil(std::abs(span) / ode_dt - 1e-9)));
}

// Pull rho0 back along foot points computed node by node.
ScalarField pull_back(const ScalarField& rho0, const PointEval& r0, const std::function<void(std::size_t, double*)>& foot) {
    const Grid& g = rho0.grid();
    std::vector<double> out(g.size());
    const std::size_t chunk = 256;
    const std::size_t nchunks = (g.size() + chunk - 1) / chunk;
    parallel_for(nchunks, [&](std::size_t c) {
        double y[3];
        const std::size_t end = std::min(g.size(), (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) {
            foot(i, y);
            out[i] = r0(y);
        }
    });
    return ScalarField::from_values(g, std::move(out));
}

void check_times(const std::vector<double>& times) {
    if (times.empty() || times.front() != 0.0) throw InputError("reference: snapshot times must start at 0");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw InputError("reference: snapshot times must increase strictly");
}

} // namespace

FlowMap characteristics(const SpaceTimeField& u, double t_from, double t_to, double ode_dt) {
    const Grid& g = u.grid;
    g.validate();
    FlowMap X;
    X.grid = g;
    X.t_from = t_from;
    X.t_to = t_to;
    X.foot.assign(g.d, std::vector<double>(g.size()));
    const VelocityEval ue(u);
    const int steps = ode_steps(t_to - t_from, ode_dt);
    parallel_for(g.size(), [&](std::size_t i) {
        double y[3];
        node_position(g, i, y);
        if (!ue.empty()) rk4(ue, g.d, t_from, t_to, steps, y);
        for (int a = 0; a < g.d; ++a) X.foot[a][i] = y[a];
    });
    return X;
}

double jacobian_deviation(const FlowMap& X) {
    const Grid& g = X.grid;
    const int d = g.d;
    std::vector<VectorField> grad;
    for (int a = 0; a < d; ++a) {
        std::vector<double> disp(g.size());
        double x[3];
        for (std::size_t i = 0; i < g.size(); ++i) {
            node_position(g, i, x);
            disp[i] = X.foot[a][i] - x[a];
        }
        grad.push_back(gradient_spectral(ScalarField::from_values(g, std::move(disp))));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double J[3][3] = {};
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) J[a][b] = (a == b ? 1.0 : 0.0) + grad[a].comp[b].values()[i];
        double det;
        if (d == 2) {
            det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        } else {
            det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) - J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                  J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
        }
        worst = std::max(worst, std::abs(det - 1.0));
    }
    return worst;
}

double round_trip_error(const FlowMap& there, const FlowMap& back) {
    const Grid& g = there.grid;
    if (back.grid != g) throw InputError("round_trip_error: grids differ");
    const int d = g.d;
    std::vector<std::vector<double>> disp(d, std::vector<double>(g.size()));
    double x[3];
    for (std::size_t i = 0; i < g.size(); ++i) {
        node_position(g, i, x);
        for (int a = 0; a < d; ++a) disp[a][i] = back.foot[a][i] - x[a];
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        node_position(g, i, x);
        double X[3], err = 0.0;
        for (int a = 0; a < d; ++a) X[a] = there.foot[a][i];
        for (int a = 0; a < d; ++a) {
            double r = X[a] + interp_cubic(g, disp[a].data(), X) - x[a];
            r -= g.L * std::round(r / g.L);
            err += r * r;
        }
        worst = std::max(worst, std::sqrt(err) / g.dx());
    }
    return worst;
}

ReferenceRun renormalized_reference(const ScalarField& rho0, const SpaceTimeField& u, const std::vector<double>& deltas,
                                    double ode_dt, const std::vector<double>& times) {
    const Grid& g = rho0.grid();
    if (deltas.empty()) throw InputError("renormalized_reference: empty mollification schedule");
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (!(deltas[i] >= 0.0) || !std::isfinite(deltas[i])) throw InputError("renormalized_reference: delta must be >= 0");
        if (i > 0 && !(deltas[i] < deltas[i - 1]))
            throw InputError("renormalized_reference: deltas must decrease strictly");
    }
    if (!u.empty() && u.grid != g) throw InputError("renormalized_reference: drift grid differs from datum grid");
    check_times(times);
    ode_steps(1.0, ode_dt);

    const PointEval r0(rho0);
    ReferenceRun run;
    run.deltas = deltas;
    std::vector<ScalarField> prev;
    for (double delta : deltas) {
        const SpaceTimeField ud = mollify(u, delta);
        const VelocityEval ue(ud);
        std::vector<ScalarField> snaps{rho0};
        for (std::size_t j = 1; j < times.size(); ++j) {
            const double t = times[j];
            const int steps = ode_steps(t, ode_dt);
            snaps.push_back(pull_back(rho0, r0, [&](std::size_t i, double* y) {
                node_position(g, i, y);
                if (!ue.empty()) rk4(ue, g.d, t, 0.0, steps, y);
            }));
        }
        if (!prev.empty()) {
            double gap = 0.0;
            for (std::size_t j = 0; j < snaps.size(); ++j) gap = std::max(gap, lp_norm(snaps[j] - prev[j], 2.0));
            if (!run.cauchy.empty() && gap > run.cauchy.back()) run.non_cauchy = true;
            run.cauchy.push_back(gap);
        }
        prev = std::move(snaps);
    }

    auto pb = std::make_shared<Problem>();
    pb->rho0 = rho0;
    pb->drift = u;
    Trajectory& tr = run.traj;
    tr.problem = pb;
    tr.cfg.epsilon = 0.0;
    tr.cfg.dt = ode_dt;
    tr.cfg.T = times.back();
    tr.cfg.log_coefficients = false;
    tr.origin = "characteristics";
    tr.times = times;
    tr.snapshots = std::move(prev);
    return run;
}

Trajectory stochastic_flow_oracle(const Trajectory& traj) {
    if (!traj.problem) throw InputError("stochastic_flow_oracle: trajectory has no problem description");
    const Problem& pb = *traj.problem;
    const SolverConfig& cfg = traj.cfg;
    const Grid& g = pb.rho0.grid();
    const bool noisy = cfg.epsilon > 0.0 && pb.basis;
    if (noisy && (traj.nmodes == 0 || !traj.has_log() || traj.coeff_log.empty()))
        throw InputError("stochastic_flow_oracle: missing or incomplete coefficient log");

    SpaceTimeField u = pb.drift;
    if (u.empty()) u = SpaceTimeField(g);
    if (cfg.epsilon == 0.0 && !pb.control.empty()) u = u.plus(pb.control.as_field(*pb.basis, g));
    const VelocityEval ue(u);
    std::unique_ptr<NoiseSynth> synth;
    if (noisy) synth = std::make_unique<NoiseSynth>(*pb.basis, g);
    const PointEval r0(pb.rho0);
    const double dt = cfg.dt, eps = cfg.epsilon;
    const int d = g.d;

    Trajectory out;
    out.problem = traj.problem;
    out.cfg = traj.cfg;
    out.origin = "characteristics";
    out.times = traj.times;
    out.snapshots.push_back(pb.rho0);
    for (std::size_t j = 1; j < traj.times.size(); ++j) {
        const int nj = static_cast<int>(std::llround(traj.times[j] / dt));
        out.snapshots.push_back(pull_back(pb.rho0, r0, [&](std::size_t i, double* y) {
            node_position(g, i, y);
            double D1[3], D2[3], v[3], w[3], ys[3];
            auto disp = [&](double t, const double* p, const double* dw, double* D) {
                ue(t, p, v);
                if (dw) synth->eval_point(dw, p, w);
                for (int a = 0; a < d; ++a) D[a] = dt * v[a] + (dw ? eps * w[a] : 0.0);
            };
            for (int n = nj - 1; n >= 0; --n) {
                const double* dw = noisy ? traj.increments(n) : nullptr;
                disp((n + 1) * dt, y, dw, D1);
                for (int a = 0; a < d; ++a) ys[a] = y[a] - D1[a];
                disp(n * dt, ys, dw, D2);
                for (int a = 0; a < d; ++a) y[a] -= 0.5 * (D1[a] + D2[a]);
            }
        }));
    }
    return out;
}

} // namespace ktl
