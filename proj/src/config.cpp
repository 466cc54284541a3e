#include "ktl/config.hpp"

#include <cmath>
#include <set>

#include "ktl/errors.hpp"
#include "ktl/persistence.hpp"
#include "ktl/snapshot_io.hpp"
#include "ktl/toml.hpp"

namespace ktl {

using json = nlohmann::ordered_json;

namespace {

/// One table of the document; remembers which keys were read so leftovers
/// can be reported as schema violations.
class Section {
public:
    Section(const json* j, std::string name) : j_(j), name_(std::move(name)) {
        if (j_ && !j_->is_object()) throw InputError("config: [" + name_ + "] must be a table");
    }

    bool has(const std::string& k) const { return j_ && j_->contains(k); }

    Section sub(const std::string& k) {
        used_.insert(k);
        return Section(has(k) ? &(*j_)[k] : nullptr, name_.empty() ? k : name_ + "." + k);
    }

    double f64(const std::string& k, double def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_number()) bad(k, "a number");
        return v.get<double>();
    }
    long long i64(const std::string& k, long long def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_number_integer()) bad(k, "an integer");
        return v.get<long long>();
    }
    int i32(const std::string& k, int def) {
        const long long v = i64(k, def);
        if (v < -2147483647LL || v > 2147483647LL) bad(k, "a 32-bit integer");
        return static_cast<int>(v);
    }
    std::uint64_t u64(const std::string& k, std::uint64_t def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_number_unsigned()) bad(k, "a non-negative integer");
        return v.get<std::uint64_t>();
    }
    bool flag(const std::string& k, bool def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_boolean()) bad(k, "a boolean");
        return v.get<bool>();
    }
    std::string str(const std::string& k, const std::string& def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_string()) bad(k, "a string");
        return v.get<std::string>();
    }
    std::vector<double> f64s(const std::string& k, const std::vector<double>& def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_array()) bad(k, "an array of numbers");
        std::vector<double> r;
        for (const auto& e : v) {
            if (!e.is_number()) bad(k, "an array of numbers");
            r.push_back(e.get<double>());
        }
        return r;
    }
    std::vector<int> ints(const std::string& k, const std::vector<int>& def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_array()) bad(k, "an array of integers");
        std::vector<int> r;
        for (const auto& e : v) {
            if (!e.is_number_integer()) bad(k, "an array of integers");
            r.push_back(e.get<int>());
        }
        return r;
    }
    std::vector<std::string> strs(const std::string& k, const std::vector<std::string>& def) {
        if (!take(k)) return def;
        const json& v = (*j_)[k];
        if (!v.is_array()) bad(k, "an array of strings");
        std::vector<std::string> r;
        for (const auto& e : v) {
            if (!e.is_string()) bad(k, "an array of strings");
            r.push_back(e.get<std::string>());
        }
        return r;
    }
    std::vector<std::vector<double>> matrix(const std::string& k) {
        if (!take(k)) return {};
        const json& v = (*j_)[k];
        if (!v.is_array()) bad(k, "an array of arrays");
        std::vector<std::vector<double>> r;
        for (const auto& row : v) {
            if (!row.is_array()) bad(k, "an array of arrays");
            std::vector<double> x;
            for (const auto& e : row) {
                if (!e.is_number()) bad(k, "an array of arrays of numbers");
                x.push_back(e.get<double>());
            }
            r.push_back(std::move(x));
        }
        return r;
    }

    void finish() const {
        if (!j_) return;
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!used_.count(it.key()))
                throw InputError("config: unknown key '" + (name_.empty() ? "" : name_ + ".") + it.key() + "'");
    }

private:
    bool take(const std::string& k) {
        used_.insert(k);
        return has(k);
    }
    [[noreturn]] void bad(const std::string& k, const std::string& what) const {
        throw InputError("config: '" + (name_.empty() ? "" : name_ + ".") + k + "' must be " + what);
    }

    const json* j_;
    std::string name_;
    std::set<std::string> used_;
};

std::vector<Profile> profiles_of(const std::vector<std::string>& names) {
    std::vector<Profile> r;
    for (const auto& n : names) r.push_back(profile_from_string(n));
    return r;
}

std::vector<std::string> profile_names(const std::vector<Profile>& ps) {
    std::vector<std::string> r;
    for (auto p : ps) r.push_back(to_string(p));
    return r;
}

DictionarySpec read_dict(Section& s, const DictionarySpec& def) {
    DictionarySpec d;
    d.n_spatial = s.i32("n_spatial", def.n_spatial);
    d.profiles = profiles_of(s.strs("profiles", profile_names(def.profiles)));
    d.budget = s.f64("budget", def.budget);
    return d;
}

void write_dict(json& j, const DictionarySpec& d) {
    j["n_spatial"] = d.n_spatial;
    j["profiles"] = profile_names(d.profiles);
    j["budget"] = d.budget;
}

// JSON has no infinity: p = inf is stored as 0 in p lists and mapped back.
std::vector<double> p_list_out(const std::vector<double>& p) {
    std::vector<double> r;
    for (double v : p) r.push_back(std::isinf(v) ? 0.0 : v);
    return r;
}
std::vector<double> p_list_in(const std::vector<double>& p) {
    std::vector<double> r;
    for (double v : p) r.push_back(v == 0.0 ? kInf : v);
    return r;
}

void check_eps_grid(const std::vector<double>& eps, const std::string& where, bool allow_zero) {
    if (eps.empty()) throw InputError(where + ": epsilon grid is empty");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!std::isfinite(eps[i]) || eps[i] < 0.0 || (!allow_zero && eps[i] == 0.0))
            throw InputError(where + ": epsilon values must be " + (allow_zero ? ">= 0" : "> 0"));
        if (i && !(eps[i] < eps[i - 1])) throw InputError(where + ": epsilon grid must be strictly decreasing");
    }
}

void check_dict(const DictionarySpec& d, const std::string& where) {
    if (d.n_spatial < 1 || d.n_spatial > 8) throw InputError(where + ": n_spatial must be in 1..8");
    if (d.profiles.empty() || d.profiles.size() > 4) throw InputError(where + ": 1..4 time profiles");
    if (!(d.budget > 0.0)) throw InputError(where + ": budget must be > 0");
}

std::size_t dict_dim(const DictionarySpec& d) { return static_cast<std::size_t>(d.n_spatial) * d.profiles.size(); }

} // namespace

// ------------------------------------------------------------------ initial

void InitialSpec::validate(int d) const {
    if (kind == "constant") {
        if (!std::isfinite(amplitude)) throw InputError("initial: amplitude must be finite");
    } else if (kind == "mode") {
        if (static_cast<int>(k.size()) != d) throw InputError("initial: k must have d entries");
        if (!std::isfinite(amplitude)) throw InputError("initial: amplitude must be finite");
    } else if (kind == "gaussian") {
        if (!(width > 0.0)) throw InputError("initial: width must be > 0");
        if (!center.empty() && static_cast<int>(center.size()) != d)
            throw InputError("initial: center must have d entries");
    } else if (kind == "file") {
        if (file.empty()) throw InputError("initial: file kind requires a file");
    } else {
        throw InputError("initial: unknown kind '" + kind + "'");
    }
}

ScalarField make_initial(const InitialSpec& s, const Grid& g) {
    s.validate(g.d);
    if (s.kind == "constant")
        return ScalarField::from_function(g, [&](const double*) { return s.amplitude; });
    if (s.kind == "mode")
        return ScalarField::from_function(g, [&](const double* x) {
            double ph = 0.0;
            for (int a = 0; a < g.d; ++a) ph += g.k0() * s.k[a] * x[a];
            return s.amplitude * (s.sine ? std::sin(ph) : std::cos(ph));
        });
    if (s.kind == "gaussian")
        return ScalarField::from_function(g, [&](const double* x) {
            double r2 = 0.0;
            for (int a = 0; a < g.d; ++a) {
                const double c = s.center.empty() ? 0.5 * g.L : s.center[a];
                double dx = std::remainder(x[a] - c, g.L);
                r2 += dx * dx;
            }
            return s.amplitude * std::exp(-0.5 * r2 / (s.width * s.width));
        });
    Snapshot snap = read_snapshot(s.file);
    if (snap.field.grid() != g) throw InputError("initial: file grid does not match the run grid");
    return snap.field;
}

// --------------------------------------------------------------- experiment

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::evolve: return "evolve";
        case ExperimentKind::zero_noise: return "zero_noise";
        case ExperimentKind::ldp_tail: return "ldp_tail";
        case ExperimentKind::rate_fn: return "rate_fn";
        case ExperimentKind::variational: return "variational";
        case ExperimentKind::dissipation_ldp: return "dissipation_ldp";
    }
    return "?";
}

ExperimentKind experiment_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::evolve, ExperimentKind::zero_noise, ExperimentKind::ldp_tail, ExperimentKind::rate_fn,
                   ExperimentKind::variational, ExperimentKind::dissipation_ldp})
        if (to_string(k) == s) return k;
    throw InputError("config: unknown experiment kind '" + s + "'");
}

// ------------------------------------------------------------------ parsing

RunConfig config_from_document(const json& doc) {
    RunConfig c;
    Section root(&doc, "");
    c.seed = root.u64("seed", 0);
    c.out = root.str("out", c.out);

    Section g = root.sub("grid");
    c.grid.d = g.i32("d", c.grid.d);
    c.grid.N = g.i32("N", c.grid.N);
    c.grid.L = g.f64("L", c.grid.L);
    c.grid.dealias_fraction = g.f64("dealias_fraction", c.grid.dealias_fraction);
    g.finish();

    Section in = root.sub("initial");
    c.initial.kind = in.str("kind", c.initial.kind);
    c.initial.amplitude = in.f64("amplitude", c.initial.amplitude);
    c.initial.k = in.ints("k", c.grid.d == 3 ? std::vector<int>{1, 0, 0} : c.initial.k);
    c.initial.sine = in.flag("sine", c.initial.sine);
    c.initial.center = in.f64s("center", {});
    c.initial.width = in.f64("width", c.initial.width);
    c.initial.file = in.str("file", "");
    in.finish();

    Section n = root.sub("noise");
    c.noise.d = c.grid.d;
    c.noise.L = c.grid.L;
    c.noise.alpha = n.f64("alpha", c.noise.alpha);
    c.noise.K = n.i32("K", c.noise.K);
    n.finish();

    Section dr = root.sub("drift");
    c.drift.kind = drift_kind_from_string(dr.str("kind", to_string(c.drift.kind)));
    c.drift.velocity = dr.f64s("velocity", {});
    c.drift.amplitude = dr.f64("amplitude", c.drift.amplitude);
    c.drift.wavenumber = dr.i32("wavenumber", c.drift.wavenumber);
    c.drift.q_target = dr.f64("q_target", c.drift.q_target);
    c.drift.slope = dr.f64("slope", c.drift.slope);
    c.drift.seed = dr.u64("seed", c.drift.seed);
    c.drift.file = dr.str("file", "");
    c.drift.modulated = dr.flag("modulated", false);
    c.drift.schedule.t = dr.f64s("schedule_t", c.drift.schedule.t);
    c.drift.schedule.v = dr.f64s("schedule_v", c.drift.schedule.v);
    dr.finish();

    Section s = root.sub("solver");
    c.solver.epsilon = s.f64("epsilon", c.solver.epsilon);
    c.solver.kappa = s.f64("kappa", c.solver.kappa);
    c.solver.dt = s.f64("dt", c.solver.dt);
    c.solver.T = s.f64("T", c.solver.T);
    c.solver.scheme = scheme_from_string(s.str("scheme", to_string(c.solver.scheme)));
    c.solver.transport = transport_from_string(s.str("transport", to_string(c.solver.transport)));
    {
        const std::string lap = s.str("laplacian", "integrating_factor");
        if (lap == "integrating_factor") c.solver.laplacian = LaplacianMode::integrating_factor;
        else if (lap == "explicit_euler") c.solver.laplacian = LaplacianMode::explicit_euler;
        else throw InputError("config: solver.laplacian must be integrating_factor or explicit_euler");
    }
    c.solver.record_every = s.i32("record_every", c.solver.record_every);
    c.solver.log_coefficients = s.flag("log_coefficients", c.solver.log_coefficients);
    c.solver.strat_implicit = s.flag("strat_implicit", c.solver.strat_implicit);
    c.solver.strat_tol = s.f64("strat_tol", c.solver.strat_tol);
    c.solver.strat_iterations = s.i32("strat_iterations", c.solver.strat_iterations);
    s.finish();

    Section e = root.sub("experiment");
    c.kind = experiment_from_string(e.str("kind", "evolve"));
    {
        Section b = e.sub("evolve");
        c.evolve.fields = b.flag("fields", c.evolve.fields);
        c.evolve.p_list = p_list_in(b.f64s("p_list", p_list_out(c.evolve.p_list)));
        c.evolve.s_list = b.f64s("s_list", c.evolve.s_list);
        c.evolve.martingale = b.flag("martingale", c.evolve.martingale);
        c.evolve.dissipation = b.flag("dissipation", c.evolve.dissipation);
        c.evolve.time_bins = b.i32("time_bins", c.evolve.time_bins);
        c.evolve.space_blocks = b.i32("space_blocks", c.evolve.space_blocks);
        b.finish();
    }
    {
        Section b = e.sub("zero_noise");
        auto& z = c.zero_noise;
        z.eps = b.f64s("eps", z.eps);
        z.M = b.i32("M", z.M);
        z.metric = metric_from_string(b.str("metric", to_string(z.metric)));
        z.deltas = b.f64s("deltas", z.deltas);
        z.ode_dt = b.f64("ode_dt", z.ode_dt);
        z.distance.p = b.i32("p", z.distance.p);
        z.distance.n_max = b.i32("n_max", z.distance.n_max);
        z.distance.probe_kmax = b.i32("probe_kmax", z.distance.probe_kmax);
        b.finish();
    }
    {
        Section b = e.sub("ldp_tail");
        auto& t = c.ldp_tail;
        t.eps = b.f64s("eps", t.eps);
        t.M = b.i32("M", t.M);
        t.event = DeviationEvent::kind_from_string(b.str("event", DeviationEvent::to_string(t.event)));
        t.delta = b.f64("delta", t.delta);
        t.p = b.i32("p", t.p);
        t.ode_dt = b.f64("ode_dt", t.ode_dt);
        t.dict = read_dict(b, t.dict);
        t.tilt = b.f64s("tilt", {});
        b.finish();
    }
    {
        Section b = e.sub("rate_fn");
        auto& r = c.rate_fn;
        r.dict = read_dict(b, r.dict);
        r.target = b.f64s("target", {});
        r.snapshots = b.i32("snapshots", r.snapshots);
        r.ode_dt = b.f64("ode_dt", r.ode_dt);
        r.penalty = b.f64("penalty", r.penalty);
        r.p = b.i32("p", r.p);
        r.tolerance = b.f64("tolerance", r.tolerance);
        r.max_evals = b.i32("max_evals", r.max_evals);
        r.restarts = b.i32("restarts", r.restarts);
        r.initial_step = b.f64("initial_step", r.initial_step);
        b.finish();
    }
    {
        Section b = e.sub("variational");
        auto& v = c.variational;
        v.epsilon = b.f64("epsilon", v.epsilon);
        v.M = b.i32("M", v.M);
        v.functional = b.str("functional", v.functional);
        v.value = b.f64("value", v.value);
        v.sup_h = b.f64("sup_h", v.sup_h);
        v.ode_dt = b.f64("ode_dt", v.ode_dt);
        v.dict = read_dict(b, v.dict);
        v.candidates = b.matrix("candidates");
        b.finish();
    }
    {
        Section b = e.sub("dissipation_ldp");
        auto& d = c.dissipation_ldp;
        d.eps = b.f64s("eps", d.eps);
        d.M = b.i32("M", d.M);
        d.delta_fraction = b.f64("delta_fraction", d.delta_fraction);
        d.time_bins = b.i32("time_bins", d.time_bins);
        d.space_blocks = b.i32("space_blocks", d.space_blocks);
        b.finish();
    }
    e.finish();
    root.finish();
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const std::exception& ex) {
        throw InputError("config: cannot read '" + path + "'");
    }
    return config_from_document(parse_toml(text));
}

// --------------------------------------------------------------- validation

void RunConfig::validate() const {
    grid.validate();
    initial.validate(grid.d);
    noise.validate();
    if (noise.d != grid.d) throw InputError("config: noise dimension differs from the grid");
    if (drift.kind == DriftKind::constant && static_cast<int>(drift.velocity.size()) != grid.d)
        throw InputError("config: constant drift needs d velocity components");
    drift.validate();
    solver.validate();
    if (2 * noise.K >= grid.N) throw InputError("config: noise cutoff K must stay below N/2");
    switch (kind) {
        case ExperimentKind::evolve:
            if (evolve.p_list.empty()) throw InputError("evolve: p_list is empty");
            for (double p : evolve.p_list)
                if (!(p >= 1.0)) throw InputError("evolve: p values must be >= 1");
            if (evolve.dissipation && (solver.scheme != Scheme::ito_euler || solver.transport != Transport::spectral))
                throw InputError("evolve: dissipation needs ito_euler with spectral transport");
            if (evolve.time_bins < 1 || evolve.space_blocks < 1) throw InputError("evolve: partition sizes must be >= 1");
            break;
        case ExperimentKind::zero_noise:
            check_eps_grid(zero_noise.eps, "zero_noise", true);
            if (zero_noise.M < 1) throw InputError("zero_noise: M must be >= 1");
            if (zero_noise.deltas.empty()) throw InputError("zero_noise: deltas is empty");
            for (std::size_t i = 0; i < zero_noise.deltas.size(); ++i)
                if (zero_noise.deltas[i] < 0.0 || (i && !(zero_noise.deltas[i] < zero_noise.deltas[i - 1])))
                    throw InputError("zero_noise: deltas must be >= 0 and strictly decreasing");
            if (!(zero_noise.ode_dt > 0.0)) throw InputError("zero_noise: ode_dt must be > 0");
            if (zero_noise.distance.p < 1 || zero_noise.distance.n_max < 0 || zero_noise.distance.probe_kmax < 1)
                throw InputError("zero_noise: distance options out of range");
            break;
        case ExperimentKind::ldp_tail:
            check_eps_grid(ldp_tail.eps, "ldp_tail", false);
            if (ldp_tail.M < 1) throw InputError("ldp_tail: M must be >= 1");
            if (!(ldp_tail.delta >= 0.0)) throw InputError("ldp_tail: delta must be >= 0");
            if (ldp_tail.p < 1) throw InputError("ldp_tail: p must be >= 1");
            if (!(ldp_tail.ode_dt > 0.0)) throw InputError("ldp_tail: ode_dt must be > 0");
            check_dict(ldp_tail.dict, "ldp_tail");
            if (!ldp_tail.tilt.empty() && ldp_tail.tilt.size() != dict_dim(ldp_tail.dict))
                throw InputError("ldp_tail: tilt must have n_spatial x profiles entries");
            break;
        case ExperimentKind::rate_fn:
            check_dict(rate_fn.dict, "rate_fn");
            if (rate_fn.target.size() != dict_dim(rate_fn.dict))
                throw InputError("rate_fn: target must have n_spatial x profiles entries");
            if (rate_fn.snapshots < 2) throw InputError("rate_fn: snapshots must be >= 2");
            if (!(rate_fn.ode_dt > 0.0) || !(rate_fn.penalty > 0.0) || !(rate_fn.tolerance > 0.0))
                throw InputError("rate_fn: ode_dt, penalty and tolerance must be > 0");
            if (rate_fn.max_evals < 1 || rate_fn.restarts < 0 || !(rate_fn.initial_step > 0.0) || rate_fn.p < 1)
                throw InputError("rate_fn: optimizer settings out of range");
            break;
        case ExperimentKind::variational:
            if (!(variational.epsilon > 0.0)) throw InputError("variational: epsilon must be > 0");
            if (variational.M < 2) throw InputError("variational: M must be >= 2");
            if (variational.functional != "constant" && variational.functional != "clipped_distance")
                throw InputError("variational: functional must be constant or clipped_distance");
            if (!(variational.sup_h >= 0.0)) throw InputError("variational: sup_h must be >= 0");
            if (variational.functional == "constant" && std::abs(variational.value) > variational.sup_h)
                throw InputError("variational: |value| must not exceed sup_h");
            check_dict(variational.dict, "variational");
            if (variational.dict.budget < 2.0 * variational.sup_h)
                throw InputError("variational: budget must be at least 2 sup_h");
            for (const auto& cnd : variational.candidates)
                if (cnd.size() != dict_dim(variational.dict))
                    throw InputError("variational: candidate size must be n_spatial x profiles");
            break;
        case ExperimentKind::dissipation_ldp:
            check_eps_grid(dissipation_ldp.eps, "dissipation_ldp", false);
            if (dissipation_ldp.M < 1) throw InputError("dissipation_ldp: M must be >= 1");
            if (!(dissipation_ldp.delta_fraction > 0.0)) throw InputError("dissipation_ldp: delta_fraction must be > 0");
            if (dissipation_ldp.time_bins < 1 || dissipation_ldp.space_blocks < 1)
                throw InputError("dissipation_ldp: partition sizes must be >= 1");
            if (solver.scheme != Scheme::ito_euler || solver.transport != Transport::spectral)
                throw InputError("dissipation_ldp: needs ito_euler with spectral transport");
            break;
    }
}

// ------------------------------------------------------------ canonical form

json config_document(const RunConfig& c) {
    json d;
    d["seed"] = c.seed;
    d["out"] = c.out;
    d["grid"] = {{"d", c.grid.d}, {"N", c.grid.N}, {"L", c.grid.L}, {"dealias_fraction", c.grid.dealias_fraction}};
    json in{{"kind", c.initial.kind}, {"amplitude", c.initial.amplitude}, {"k", c.initial.k}, {"sine", c.initial.sine},
            {"width", c.initial.width}};
    if (!c.initial.center.empty()) in["center"] = c.initial.center;
    if (!c.initial.file.empty()) in["file"] = c.initial.file;
    d["initial"] = in;
    d["noise"] = {{"alpha", c.noise.alpha}, {"K", c.noise.K}};
    json dr{{"kind", to_string(c.drift.kind)},
            {"amplitude", c.drift.amplitude},
            {"wavenumber", c.drift.wavenumber},
            {"q_target", c.drift.q_target},
            {"slope", c.drift.slope},
            {"seed", c.drift.seed},
            {"modulated", c.drift.modulated},
            {"schedule_t", c.drift.schedule.t},
            {"schedule_v", c.drift.schedule.v}};
    if (!c.drift.velocity.empty()) dr["velocity"] = c.drift.velocity;
    if (!c.drift.file.empty()) dr["file"] = c.drift.file;
    d["drift"] = dr;
    d["solver"] = {{"epsilon", c.solver.epsilon},
                   {"kappa", c.solver.kappa},
                   {"dt", c.solver.dt},
                   {"T", c.solver.T},
                   {"scheme", to_string(c.solver.scheme)},
                   {"transport", to_string(c.solver.transport)},
                   {"laplacian", c.solver.laplacian == LaplacianMode::integrating_factor ? "integrating_factor"
                                                                                          : "explicit_euler"},
                   {"record_every", c.solver.record_every},
                   {"log_coefficients", c.solver.log_coefficients},
                   {"strat_implicit", c.solver.strat_implicit},
                   {"strat_tol", c.solver.strat_tol},
                   {"strat_iterations", c.solver.strat_iterations}};
    json e;
    e["kind"] = to_string(c.kind);
    // Only the active block is part of the canonical form, so edits to
    // inactive blocks do not change the hash.
    switch (c.kind) {
        case ExperimentKind::evolve:
            e["evolve"] = {{"fields", c.evolve.fields},
                           {"p_list", p_list_out(c.evolve.p_list)},
                           {"s_list", c.evolve.s_list},
                           {"martingale", c.evolve.martingale},
                           {"dissipation", c.evolve.dissipation},
                           {"time_bins", c.evolve.time_bins},
                           {"space_blocks", c.evolve.space_blocks}};
            break;
        case ExperimentKind::zero_noise: {
            const auto& z = c.zero_noise;
            e["zero_noise"] = {{"eps", z.eps},
                               {"M", z.M},
                               {"metric", to_string(z.metric)},
                               {"deltas", z.deltas},
                               {"ode_dt", z.ode_dt},
                               {"p", z.distance.p},
                               {"n_max", z.distance.n_max},
                               {"probe_kmax", z.distance.probe_kmax}};
            break;
        }
        case ExperimentKind::ldp_tail: {
            const auto& t = c.ldp_tail;
            json b{{"eps", t.eps}, {"M", t.M},   {"event", DeviationEvent::to_string(t.event)},
                   {"delta", t.delta}, {"p", t.p}, {"ode_dt", t.ode_dt}};
            write_dict(b, t.dict);
            if (!t.tilt.empty()) b["tilt"] = t.tilt;
            e["ldp_tail"] = b;
            break;
        }
        case ExperimentKind::rate_fn: {
            const auto& r = c.rate_fn;
            json b;
            write_dict(b, r.dict);
            b["target"] = r.target;
            b["snapshots"] = r.snapshots;
            b["ode_dt"] = r.ode_dt;
            b["penalty"] = r.penalty;
            b["p"] = r.p;
            b["tolerance"] = r.tolerance;
            b["max_evals"] = r.max_evals;
            b["restarts"] = r.restarts;
            b["initial_step"] = r.initial_step;
            e["rate_fn"] = b;
            break;
        }
        case ExperimentKind::variational: {
            const auto& v = c.variational;
            json b{{"epsilon", v.epsilon}, {"M", v.M},         {"functional", v.functional},
                   {"value", v.value},     {"sup_h", v.sup_h}, {"ode_dt", v.ode_dt}};
            write_dict(b, v.dict);
            if (!v.candidates.empty()) b["candidates"] = v.candidates;
            e["variational"] = b;
            break;
        }
        case ExperimentKind::dissipation_ldp: {
            const auto& x = c.dissipation_ldp;
            e["dissipation_ldp"] = {{"eps", x.eps},
                                    {"M", x.M},
                                    {"delta_fraction", x.delta_fraction},
                                    {"time_bins", x.time_bins},
                                    {"space_blocks", x.space_blocks}};
            break;
        }
    }
    d["experiment"] = e;
    return d;
}

std::string config_hash(const RunConfig& c) {
    json d = config_document(c);
    d.erase("out");  // where results go does not change what they are
    return sha256_hex(d.dump());
}

// -------------------------------------------------------------------- sweeps

std::vector<json> expand_sweep(const json& doc, const std::vector<std::string>& sweeps) {
    std::vector<json> out{doc};
    for (const auto& spec : sweeps) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw InputError("sweep: expected key=v1,v2,... got '" + spec + "'");
        const std::string key = spec.substr(0, eq);
        std::vector<std::string> path;
        for (std::size_t a = 0, b; a <= key.size(); a = b + 1) {
            b = key.find('.', a);
            if (b == std::string::npos) b = key.size();
            path.push_back(key.substr(a, b - a));
            if (path.back().empty()) throw InputError("sweep: empty key component in '" + key + "'");
        }
        std::vector<json> values;
        const std::string list = spec.substr(eq + 1);
        for (std::size_t a = 0, b; a <= list.size(); a = b + 1) {
            b = list.find(',', a);
            if (b == std::string::npos) b = list.size();
            const std::string item = list.substr(a, b - a);
            if (item.empty()) throw InputError("sweep: empty value in '" + spec + "'");
            values.push_back(parse_toml("v = " + item)["v"]);
        }
        std::vector<json> next;
        for (const auto& base : out)
            for (const auto& v : values) {
                json child = base;
                json* t = &child;
                for (std::size_t i = 0; i + 1 < path.size(); ++i) {
                    json& n = (*t)[path[i]];
                    if (n.is_null()) n = json::object();
                    t = &n;
                }
                (*t)[path.back()] = v;
                next.push_back(std::move(child));
            }
        out = std::move(next);
    }
    return out;
}

// -------------------------------------------------------------------- setup

Setup make_setup(const RunConfig& c) {
    Setup s;
    s.rho0 = make_initial(c.initial, c.grid);
    s.drift = synthesize_drift(c.drift, c.grid).st;
    s.basis = std::make_shared<const NoiseBasis>(build_basis(c.noise));
    return s;
}

ControlDictionary make_dictionary(const DictionarySpec& spec, const NoiseBasis& basis, double T) {
    return default_dictionary(basis, spec.n_spatial, spec.profiles, T, spec.budget);
}

} // namespace ktl
