#include "ktl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "ktl/errors.hpp"
#include "ktl/format.hpp"
#include "ktl/reference.hpp"

namespace ktl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::shared_ptr<Problem> make_problem(const Setup& s, const Control& g = {}) {
    auto pb = std::make_shared<Problem>();
    pb->rho0 = s.rho0;
    pb->drift = s.drift.empty() ? SpaceTimeField(s.rho0.grid()) : s.drift;
    pb->basis = s.basis;
    pb->control = g;
    return pb;
}

std::vector<double> snapshot_times(const SolverConfig& cfg) {
    std::vector<double> t{0.0};
    const int n = cfg.steps();
    for (int k = 1; k <= n; ++k)
        if (k % cfg.record_every == 0 || k == n) t.push_back(k * cfg.dt);
    return t;
}

bool all_zero(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

} // namespace

std::uint64_t path_seed(std::uint64_t master, std::size_t i) { return stream_seed(master, i); }

// ---------------------------------------------------------------- zero noise

ConvergenceReport zero_noise_study(const Setup& s, const ZeroNoiseConfig& cfg) {
    if (cfg.eps_grid.empty()) throw InputError("zero_noise_study: empty epsilon grid");
    for (std::size_t i = 1; i < cfg.eps_grid.size(); ++i)
        if (!(cfg.eps_grid[i] < cfg.eps_grid[i - 1])) throw InputError("zero_noise_study: epsilon grid must decrease");
    if (cfg.M < 1) throw InputError("zero_noise_study: M must be >= 1");
    const std::vector<double> times = snapshot_times(cfg.solver);
    ReferenceRun ref = renormalized_reference(s.rho0, s.drift.empty() ? SpaceTimeField(s.rho0.grid()) : s.drift,
                                              cfg.deltas, cfg.ode_dt, times);
    ConvergenceReport rep;
    rep.metric = cfg.metric;
    rep.reference_cauchy = ref.cauchy;
    rep.reference_non_cauchy = ref.non_cauchy;
    auto pb = make_problem(s);
    for (double eps : cfg.eps_grid) {
        ZeroNoiseRow row;
        row.epsilon = eps;
        row.distances.assign(cfg.M, 0.0);
        parallel_for(static_cast<std::size_t>(cfg.M), [&](std::size_t i) {
            SolverConfig c = cfg.solver;
            c.epsilon = eps;
            c.seed = path_seed(cfg.seed, i);
            c.log_coefficients = false;
            const Trajectory tr = evolve(pb, c);
            row.distances[i] = path_distance(tr, ref.traj, cfg.metric, cfg.distance).value;
        });
        row.stats = summarize(row.distances);
        rep.rows.push_back(std::move(row));
    }
    rep.strictly_decreasing = rep.non_increasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        if (!(rep.rows[i].stats.median < rep.rows[i - 1].stats.median)) rep.strictly_decreasing = false;
        if (rep.rows[i].stats.median > rep.rows[i - 1].stats.median) rep.non_increasing = false;
    }
    const double first = rep.rows.front().stats.median;
    rep.final_over_initial = first > 0.0 ? rep.rows.back().stats.median / first : 0.0;
    return rep;
}

// ------------------------------------------------------------------ Girsanov

TiltedSample girsanov_tilted_sampler(const Setup& s, const Control& g, double epsilon, SolverConfig cfg, double budget) {
    const double cost = g.cost();
    if (cost > budget) throw InputError("girsanov_tilted_sampler: control outside the norm budget");
    cfg.epsilon = epsilon;
    TiltedSample out;
    out.traj = evolve(make_problem(s, g), cfg);
    out.log_lr = out.traj.log_lr;
    return out;
}

// ---------------------------------------------------------------- tail / LDP

std::string DeviationEvent::to_string(Kind k) {
    switch (k) {
        case Kind::h_minus1_sup: return "h_minus1_sup";
        case Kind::d_scriptE: return "d_scriptE";
        case Kind::whole_space: return "whole_space";
        case Kind::empty: return "empty";
    }
    return "?";
}

DeviationEvent::Kind DeviationEvent::kind_from_string(const std::string& s) {
    if (s == "h_minus1_sup") return Kind::h_minus1_sup;
    if (s == "d_scriptE") return Kind::d_scriptE;
    if (s == "whole_space") return Kind::whole_space;
    if (s == "empty") return Kind::empty;
    throw InputError("unknown event kind '" + s + "'");
}

double DeviationEvent::distance(const Trajectory& t) const {
    if (kind == Kind::whole_space || kind == Kind::empty) return 0.0;
    if (ref.empty()) throw InputError("deviation event: no reference path");
    if (kind == Kind::d_scriptE) {
        DistanceOptions o;
        o.p = p;
        return path_distance(t.times, t.snapshots, ref_times, ref, Metric::d_scriptE, o).value;
    }
    double sup = 0.0;
    for (std::size_t i = 0; i < t.times.size(); ++i) {
        std::size_t j = 0;
        for (std::size_t k = 1; k < ref_times.size(); ++k)
            if (std::abs(ref_times[k] - t.times[i]) < std::abs(ref_times[j] - t.times[i])) j = k;
        sup = std::max(sup, sobolev_norm(t.snapshots[i] - ref[j], -1.0));
    }
    return sup;
}

bool DeviationEvent::operator()(const Trajectory& t) const {
    switch (kind) {
        case Kind::whole_space: return true;
        case Kind::empty: return false;
        case Kind::d_scriptE: return distance(t) >= delta;
        case Kind::h_minus1_sup: return distance(t) > delta;
    }
    return false;
}

TailRow tail_row(double epsilon, const std::vector<char>& hit, const std::vector<double>* log_w) {
    TailRow r;
    r.epsilon = epsilon;
    r.M = static_cast<int>(hit.size());
    if (r.M == 0) throw InputError("tail estimate: no paths");
    for (char h : hit) r.hits += h ? 1 : 0;
    if (!log_w) {
        r.estimator = "naive";
        r.p_hat = static_cast<double>(r.hits) / r.M;
        r.stderr_ = std::sqrt(r.p_hat * (1.0 - r.p_hat) / r.M);
        r.n_eff = r.M;
    } else {
        if (log_w->size() != hit.size()) throw InputError("tail estimate: weight count mismatch");
        r.estimator = "tilted";
        const double mx = *std::max_element(log_w->begin(), log_w->end());
        std::vector<double> w(hit.size());
        double S = 0.0, S2 = 0.0, SH = 0.0;
        for (std::size_t i = 0; i < hit.size(); ++i) {
            w[i] = std::exp((*log_w)[i] - mx);
            S += w[i];
            S2 += w[i] * w[i];
            if (hit[i]) SH += w[i];
        }
        r.p_hat = SH / S;
        double v = 0.0;
        for (std::size_t i = 0; i < hit.size(); ++i) {
            const double dv = (hit[i] ? 1.0 : 0.0) - r.p_hat;
            v += w[i] * w[i] * dv * dv;
        }
        r.stderr_ = std::sqrt(v) / S;
        r.n_eff = S * S / S2;
    }
    const double e2 = epsilon * epsilon;
    if (r.hits == 0) {
        r.zero_hits = true;
        r.p_hat = 0.0;
        r.eps2_log_p = kNegInf;
        r.eps2_log_p_err = 0.0;
        r.upper95 = 1.0 - std::pow(0.05, 1.0 / r.M);
        r.flag = r.estimator == "naive" ? "zero hits: probability below the floor, use tilt" : "zero hits";
    } else {
        r.eps2_log_p = e2 * std::log(r.p_hat);
        r.eps2_log_p_err = e2 * r.stderr_ / r.p_hat;
    }
    return r;
}

TailEstimate ldp_tail_estimate(const Setup& s, const Event& event, const TailConfig& cfg,
                               const std::function<double(const Trajectory&)>& statistic) {
    if (cfg.eps_grid.empty()) throw InputError("ldp_tail_estimate: empty epsilon grid");
    if (cfg.M < 1) throw InputError("ldp_tail_estimate: M must be >= 1");
    Control tilt;
    if (cfg.tilt) {
        tilt = *cfg.tilt;
        if (tilt.cost() > cfg.budget) throw InputError("ldp_tail_estimate: tilt outside the norm budget");
    }
    auto pb = make_problem(s, tilt);
    TailEstimate est;
    for (double eps : cfg.eps_grid) {
        if (!(eps > 0.0)) throw InputError("ldp_tail_estimate: epsilon must be > 0");
        std::vector<char> hit(cfg.M, 0);
        std::vector<double> lw(cfg.M, 0.0), stat(cfg.M, 0.0);
        parallel_for(static_cast<std::size_t>(cfg.M), [&](std::size_t i) {
            SolverConfig c = cfg.solver;
            c.epsilon = eps;
            c.seed = path_seed(cfg.seed, i);
            c.log_coefficients = false;
            const Trajectory tr = evolve(pb, c);
            hit[i] = event(tr) ? 1 : 0;
            lw[i] = tr.log_lr;
            if (statistic) stat[i] = statistic(tr);
        });
        est.rows.push_back(tail_row(eps, hit, cfg.tilt ? &lw : nullptr));
        est.statistics.push_back(std::move(stat));
    }
    return est;
}

// ------------------------------------------------------------ rate function

std::vector<ScalarField> controlled_path(const Setup& s, const Control& g, const std::vector<double>& times,
                                         double ode_dt) {
    const Grid& grid = s.rho0.grid();
    SpaceTimeField u = s.drift.empty() ? SpaceTimeField(grid) : s.drift;
    if (!g.empty()) {
        if (!s.basis) throw InputError("controlled_path: control needs a noise basis");
        u = u.plus(g.as_field(*s.basis, grid));
    }
    return renormalized_reference(s.rho0, u, {0.0}, ode_dt, times).traj.snapshots;
}

namespace {

struct RateProblem {
    const std::vector<ScalarField>* target;
    const Setup* setup;
    const RateConfig* cfg;
    double penalty;
    int evals = 0;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_theta;
    double best_residual = 0.0;

    double residual(const std::vector<double>& theta) {
        const Control g = cfg->dict.make(theta);
        const auto path = controlled_path(*setup, g, cfg->times, cfg->ode_dt);
        DistanceOptions o;
        o.p = cfg->p;
        return path_distance(cfg->times, path, cfg->times, *target, Metric::d_scriptE, o).value;
    }

    double operator()(const std::vector<double>& theta) {
        ++evals;
        const double cost = cfg->dict.make(theta).cost();
        if (cost > cfg->dict.budget) return 1e12 * (1.0 + cost - cfg->dict.budget);
        const double res = residual(theta);
        const double f = cost + penalty * res * res;
        if (f < best) {
            best = f;
            best_theta = theta;
            best_residual = res;
        }
        return f;
    }
};

double gsl_objective(const gsl_vector* x, void* params) {
    auto* rp = static_cast<RateProblem*>(params);
    std::vector<double> th(x->size);
    for (std::size_t i = 0; i < x->size; ++i) th[i] = gsl_vector_get(x, i);
    return (*rp)(th);
}

} // namespace

RateFunctionReport rate_function_eval(const std::vector<ScalarField>& target, const Setup& s, const RateConfig& cfg) {
    const std::size_t n = cfg.dict.dim();
    if (n == 0) throw InputError("rate_function_eval: empty control dictionary");
    if (target.size() != cfg.times.size()) throw InputError("rate_function_eval: target does not match snapshot times");
    if (!(cfg.penalty > 0.0)) throw InputError("rate_function_eval: penalty must be > 0");
    RateProblem rp{&target, &s, &cfg, cfg.penalty, 0, std::numeric_limits<double>::infinity(), {}, 0.0};
    // g = 0 is always a candidate.
    rp(std::vector<double>(n, 0.0));

    gsl_set_error_handler_off();
    const gsl_multimin_fminimizer_type* T = gsl_multimin_fminimizer_nmsimplex2;
    gsl_multimin_function fn{&gsl_objective, n, &rp};
    bool converged = false;
    double step = cfg.initial_step;
    for (int round = 0; round <= cfg.restarts && rp.evals < cfg.max_evals; ++round) {
        gsl_multimin_fminimizer* m = gsl_multimin_fminimizer_alloc(T, n);
        gsl_vector* x = gsl_vector_alloc(n);
        gsl_vector* ss = gsl_vector_alloc(n);
        for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, rp.best_theta[i]);
        gsl_vector_set_all(ss, step);
        gsl_multimin_fminimizer_set(m, &fn, x, ss);
        converged = false;
        while (rp.evals < cfg.max_evals) {
            if (gsl_multimin_fminimizer_iterate(m) != GSL_SUCCESS) break;
            const double size = gsl_multimin_fminimizer_size(m);
            if (gsl_multimin_test_size(size, 1e-7) == GSL_SUCCESS) {
                converged = true;
                break;
            }
        }
        gsl_vector_free(ss);
        gsl_vector_free(x);
        gsl_multimin_fminimizer_free(m);
        step *= 0.25;
    }

    RateFunctionReport r;
    r.theta = rp.best_theta;
    r.value = cfg.dict.make(r.theta).cost();
    r.residual = rp.best_residual;
    r.objective = rp.best;
    r.converged = converged;
    r.residual_ok = r.residual <= cfg.tolerance;
    r.zero_control_best = all_zero(r.theta);
    r.evaluations = rp.evals;
    r.penalty = cfg.penalty;
    return r;
}

// -------------------------------------------------------------- variational

VariationalReport variational_laplace(const Setup& s, const Functional& h, const VariationalConfig& cfg) {
    if (!(cfg.epsilon > 0.0)) throw InputError("variational_laplace: epsilon must be > 0");
    if (cfg.M < 2) throw InputError("variational_laplace: M must be >= 2");
    if (!(cfg.sup_h >= 0.0)) throw InputError("variational_laplace: sup_h must be >= 0");
    if (cfg.dict.budget < 2.0 * cfg.sup_h) throw InputError("variational_laplace: norm budget must exceed 2 sup|h|");
    const double e2 = cfg.epsilon * cfg.epsilon;
    auto eval_h = [&](const Trajectory& tr) {
        const double v = h(tr);
        if (!std::isfinite(v) || std::abs(v) > cfg.sup_h * (1.0 + 1e-12))
            throw InputError("variational_laplace: functional exceeds its declared bound");
        return v;
    };
    auto run = [&](const Control& g, std::vector<double>& vals) {
        auto pb = make_problem(s, g);
        vals.assign(cfg.M, 0.0);
        parallel_for(static_cast<std::size_t>(cfg.M), [&](std::size_t i) {
            SolverConfig c = cfg.solver;
            c.epsilon = cfg.epsilon;
            c.seed = path_seed(cfg.seed, i);
            c.log_coefficients = false;
            vals[i] = eval_h(evolve(pb, c));
        });
    };

    VariationalReport r;
    std::vector<double> hv;
    run(Control{}, hv);
    std::vector<double> l(hv.size());
    for (std::size_t i = 0; i < hv.size(); ++i) l[i] = -hv[i] / e2;
    const double lse = log_sum_exp(l);
    r.lhs = -e2 * (lse - std::log(static_cast<double>(cfg.M)));
    {
        const double mx = *std::max_element(l.begin(), l.end());
        std::vector<double> w(l.size());
        double S = 0.0, S2 = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            w[i] = std::exp(l[i] - mx);
            S += w[i];
            S2 += w[i] * w[i];
        }
        const Summary sw = summarize(w);
        r.lhs_se = sw.mean > 0.0 ? e2 * sw.stderr_ / sw.mean : 0.0;
        r.n_eff = S * S / S2;
        r.degenerate = r.n_eff < 10.0;
    }

    std::vector<std::vector<double>> cands;
    cands.emplace_back(cfg.dict.dim(), 0.0);
    for (const auto& c : cfg.candidates) {
        if (c.size() != cfg.dict.dim()) throw InputError("variational_laplace: candidate size mismatch");
        if (!all_zero(c)) cands.push_back(c);
    }
    r.rhs = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cands.size(); ++k) {
        const Control g = cfg.dict.make(cands[k]);
        const double cost = g.cost();
        r.candidate_costs.push_back(cost);
        if (cost > cfg.dict.budget) {
            r.candidate_values.push_back(std::numeric_limits<double>::infinity());
            r.candidate_se.push_back(0.0);
            continue;
        }
        std::vector<double> vals;
        if (k == 0) {
            vals = hv;
        } else {
            run(g, vals);
        }
        for (auto& v : vals) v += cost;
        const Summary sv = summarize(vals);
        r.candidate_values.push_back(sv.mean);
        r.candidate_se.push_back(sv.stderr_);
        if (sv.mean < r.rhs) {
            r.rhs = sv.mean;
            r.rhs_se = sv.stderr_;
            r.best = k;
        }
    }
    r.gap = r.rhs - r.lhs;
    r.ordering_ok = r.rhs >= r.lhs - 3.0 * std::hypot(r.lhs_se, r.rhs_se);
    return r;
}

// ---------------------------------------------------------- dissipation LDP

DissipationLdpReport dissipation_ldp_check(const Setup& s, const DissipationLdpConfig& cfg) {
    if (cfg.eps_grid.empty()) throw InputError("dissipation_ldp_check: empty epsilon grid");
    for (std::size_t i = 1; i < cfg.eps_grid.size(); ++i)
        if (!(cfg.eps_grid[i] < cfg.eps_grid[i - 1]))
            throw InputError("dissipation_ldp_check: epsilon grid must decrease");
    if (cfg.solver.scheme != Scheme::ito_euler || cfg.solver.transport != Transport::spectral)
        throw InputError("dissipation_ldp_check: needs ito_euler with spectral transport");
    if (cfg.M < 1) throw InputError("dissipation_ldp_check: M must be >= 1");
    DissipationLdpReport rep;
    const double n0 = lp_norm(s.rho0, 2.0);
    rep.rho0_norm2 = n0 * n0;
    rep.impossible_event = cfg.delta > rep.rho0_norm2;
    auto pb = make_problem(s);
    for (double eps : cfg.eps_grid) {
        std::vector<char> hit(cfg.M, 0);
        std::vector<double> total(cfg.M, 0.0);
        parallel_for(static_cast<std::size_t>(cfg.M), [&](std::size_t i) {
            SolverConfig c = cfg.solver;
            c.epsilon = eps;
            c.seed = path_seed(cfg.seed, i);
            c.log_coefficients = true;
            c.record_every = c.steps();
            const Trajectory tr = evolve(pb, c);
            const DissipationEstimate d = dissipation_measure(tr, cfg.partition);
            total[i] = d.total;
            hit[i] = d.total >= cfg.delta ? 1 : 0;
        });
        rep.tail.rows.push_back(tail_row(eps, hit, nullptr));
        rep.totals.push_back(summarize(total));
        for (double t : total) rep.max_total_over_norm2 = std::max(rep.max_total_over_norm2, t / rep.rho0_norm2);
        rep.tail.statistics.push_back(std::move(total));
    }
    const auto& rows = rep.tail.rows;
    rep.p_non_increasing = true;
    bool log_decreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].p_hat > rows[i - 1].p_hat) rep.p_non_increasing = false;
        if (!(rows[i].eps2_log_p < rows[i - 1].eps2_log_p)) log_decreasing = false;
    }
    rep.floor_at_smallest = rows.back().zero_hits;
    rep.consistent_with_degenerate_rate = rep.floor_at_smallest || log_decreasing;
    return rep;
}

// ------------------------------------------------------------------ exports

namespace {
nlohmann::ordered_json summary_json(const Summary& s) {
    return {{"n", s.n}, {"mean", s.mean}, {"stderr", s.stderr_}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}};
}
} // namespace

nlohmann::ordered_json to_json(const ConvergenceReport& r) {
    nlohmann::ordered_json j;
    j["metric"] = to_string(r.metric);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"epsilon", row.epsilon}, {"stats", summary_json(row.stats)}, {"distances", row.distances}});
    j["rows"] = rows;
    j["strictly_decreasing"] = r.strictly_decreasing;
    j["non_increasing"] = r.non_increasing;
    j["final_over_initial"] = r.final_over_initial;
    j["reference_cauchy"] = r.reference_cauchy;
    j["reference_non_cauchy"] = r.reference_non_cauchy;
    return j;
}

nlohmann::ordered_json to_json(const TailEstimate& r) {
    nlohmann::ordered_json j;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& t : r.rows)
        rows.push_back({{"epsilon", t.epsilon},
                        {"estimator", t.estimator},
                        {"M", t.M},
                        {"hits", t.hits},
                        {"p_hat", t.p_hat},
                        {"stderr", t.stderr_},
                        {"eps2_log_p", json_num(t.eps2_log_p)},
                        {"eps2_log_p_err", t.eps2_log_p_err},
                        {"n_eff", t.n_eff},
                        {"zero_hits", t.zero_hits},
                        {"upper95", t.upper95},
                        {"flag", t.flag}});
    j["rows"] = rows;
    return j;
}

nlohmann::ordered_json to_json(const RateFunctionReport& r) {
    return {{"value", r.value},
            {"residual", r.residual},
            {"objective", r.objective},
            {"theta", r.theta},
            {"converged", r.converged},
            {"residual_ok", r.residual_ok},
            {"zero_control_best", r.zero_control_best},
            {"evaluations", r.evaluations},
            {"penalty", r.penalty}};
}

nlohmann::ordered_json to_json(const VariationalReport& r) {
    auto vals = nlohmann::ordered_json::array();
    for (double v : r.candidate_values) vals.push_back(json_num(v));
    return {{"lhs", r.lhs},
            {"lhs_se", r.lhs_se},
            {"rhs", json_num(r.rhs)},
            {"rhs_se", r.rhs_se},
            {"gap", json_num(r.gap)},
            {"n_eff", r.n_eff},
            {"degenerate", r.degenerate},
            {"best", r.best},
            {"candidate_values", vals},
            {"candidate_se", r.candidate_se},
            {"candidate_costs", r.candidate_costs},
            {"ordering_ok", r.ordering_ok}};
}

nlohmann::ordered_json to_json(const DissipationLdpReport& r) {
    nlohmann::ordered_json j = to_json(r.tail);
    auto tot = nlohmann::ordered_json::array();
    for (const auto& s : r.totals) tot.push_back(summary_json(s));
    j["totals"] = tot;
    j["rho0_norm2"] = r.rho0_norm2;
    j["impossible_event"] = r.impossible_event;
    j["p_non_increasing"] = r.p_non_increasing;
    j["floor_at_smallest"] = r.floor_at_smallest;
    j["consistent_with_degenerate_rate"] = r.consistent_with_degenerate_rate;
    j["max_total_over_norm2"] = r.max_total_over_norm2;
    return j;
}

} // namespace ktl
