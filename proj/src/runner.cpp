#include "ktl/runner.hpp"

#include <cstdio>
#include <filesystem>

#include "ktl/errors.hpp"
#include "ktl/persistence.hpp"
#include "ktl/reference.hpp"
#include "ktl/snapshot_io.hpp"
#include "ktl/stats.hpp"
#include "ktl/toml.hpp"

namespace fs = std::filesystem;

namespace ktl {

using json = nlohmann::ordered_json;

std::string code_version() { return KTL_VERSION; }

std::string run_dir_name(const std::string& config_hash) { return config_hash.substr(0, 16); }

namespace {

std::vector<double> snapshot_times_of(const SolverConfig& c) {
    std::vector<double> t{0.0};
    const int n = c.steps();
    for (int k = 1; k <= n; ++k)
        if (k % c.record_every == 0 || k == n) t.push_back(k * c.dt);
    return t;
}

std::vector<double> uniform_times(double T, int n) {
    std::vector<double> t;
    for (int i = 0; i < n; ++i) t.push_back(T * i / (n - 1));
    return t;
}

json run_evolve(const RunConfig& cfg, const Setup& s, RunWriter* w) {
    auto pb = std::make_shared<Problem>();
    pb->rho0 = s.rho0;
    pb->drift = s.drift;
    pb->basis = s.basis;
    SolverConfig sc = cfg.solver;
    sc.seed = cfg.seed;
    const bool need_log = cfg.evolve.martingale || cfg.evolve.dissipation;
    if (need_log) sc.log_coefficients = true;
    const Trajectory tr = evolve(pb, sc);
    json r;
    r["nsteps"] = tr.nsteps;
    r["nmodes"] = tr.nmodes;
    r["final_time"] = tr.times.back();
    r["ledger"] = ledger_json(energy_ledger(tr, cfg.evolve.p_list, cfg.evolve.s_list, cfg.evolve.martingale));
    if (cfg.evolve.dissipation) {
        CellPartition part{cfg.evolve.time_bins, cfg.evolve.space_blocks};
        r["dissipation"] = dissipation_json(dissipation_measure(tr, part));
    }
    if (cfg.evolve.fields && w) {
        json idx = json::array();
        for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "fields/rho_%04zu", i);
            w->snapshot(name, tr.snapshots[i], tr.times[i], "rho");
            idx.push_back({{"base", name}, {"time", tr.times[i]}});
        }
        r["fields"] = idx;
    }
    return r;
}

DeviationEvent make_event(const RunConfig& cfg, const Setup& s, double ode_dt, int p) {
    DeviationEvent ev;
    ev.kind = cfg.ldp_tail.event;
    ev.delta = cfg.ldp_tail.delta;
    ev.p = p;
    if (ev.kind == DeviationEvent::Kind::h_minus1_sup || ev.kind == DeviationEvent::Kind::d_scriptE) {
        ev.ref_times = snapshot_times_of(cfg.solver);
        ev.ref = renormalized_reference(s.rho0, s.drift, {0.0}, ode_dt, ev.ref_times).traj.snapshots;
    }
    return ev;
}

} // namespace

json execute_experiment(const RunConfig& cfg, RunWriter* w) {
    const Setup s = make_setup(cfg);
    switch (cfg.kind) {
        case ExperimentKind::evolve: return run_evolve(cfg, s, w);
        case ExperimentKind::zero_noise: {
            ZeroNoiseConfig z;
            z.eps_grid = cfg.zero_noise.eps;
            z.M = cfg.zero_noise.M;
            z.metric = cfg.zero_noise.metric;
            z.distance = cfg.zero_noise.distance;
            z.solver = cfg.solver;
            z.deltas = cfg.zero_noise.deltas;
            z.ode_dt = cfg.zero_noise.ode_dt;
            z.seed = cfg.seed;
            return to_json(zero_noise_study(s, z));
        }
        case ExperimentKind::ldp_tail: {
            const auto& b = cfg.ldp_tail;
            const DeviationEvent ev = make_event(cfg, s, b.ode_dt, b.p);
            TailConfig t;
            t.eps_grid = b.eps;
            t.M = b.M;
            t.solver = cfg.solver;
            t.seed = cfg.seed;
            const ControlDictionary dict = make_dictionary(b.dict, *s.basis, cfg.solver.T);
            Control tilt;
            if (!b.tilt.empty()) {
                tilt = dict.make(b.tilt);
                t.tilt = &tilt;
                t.budget = dict.budget;
            }
            const TailEstimate est = ldp_tail_estimate(s, ev, t, [&ev](const Trajectory& tr) { return ev.distance(tr); });
            json r = to_json(est);
            r["event"] = DeviationEvent::to_string(ev.kind);
            r["delta"] = ev.delta;
            if (!b.tilt.empty()) r["tilt_cost"] = tilt.cost();
            return r;
        }
        case ExperimentKind::rate_fn: {
            const auto& b = cfg.rate_fn;
            RateConfig rc;
            rc.dict = make_dictionary(b.dict, *s.basis, cfg.solver.T);
            rc.times = uniform_times(cfg.solver.T, b.snapshots);
            rc.ode_dt = b.ode_dt;
            rc.penalty = b.penalty;
            rc.p = b.p;
            rc.tolerance = b.tolerance;
            rc.max_evals = b.max_evals;
            rc.restarts = b.restarts;
            rc.initial_step = b.initial_step;
            const Control gbar = rc.dict.make(b.target);
            if (gbar.cost() > rc.dict.budget) throw InputError("rate_fn: target control outside the norm budget");
            const auto target = controlled_path(s, gbar, rc.times, rc.ode_dt);
            json r = to_json(rate_function_eval(target, s, rc));
            r["target_cost"] = gbar.cost();
            return r;
        }
        case ExperimentKind::variational: {
            const auto& b = cfg.variational;
            VariationalConfig vc;
            vc.epsilon = b.epsilon;
            vc.M = b.M;
            vc.solver = cfg.solver;
            vc.dict = make_dictionary(b.dict, *s.basis, cfg.solver.T);
            vc.candidates = b.candidates;
            vc.sup_h = b.sup_h;
            vc.seed = cfg.seed;
            Functional h;
            if (b.functional == "constant") {
                const double c = b.value;
                h = [c](const Trajectory&) { return c; };
            } else {
                auto ref_times = std::make_shared<std::vector<double>>(snapshot_times_of(cfg.solver));
                auto ref = std::make_shared<std::vector<ScalarField>>(
                    renormalized_reference(s.rho0, s.drift, {0.0}, b.ode_dt, *ref_times).traj.snapshots);
                const double cap = b.sup_h;
                h = [ref_times, ref, cap](const Trajectory& tr) {
                    const double dist =
                        path_distance(tr.times, tr.snapshots, *ref_times, *ref, Metric::d_scriptE, {}).value;
                    return std::min(cap, dist);
                };
            }
            json r = to_json(variational_laplace(s, h, vc));
            r["functional"] = b.functional;
            return r;
        }
        case ExperimentKind::dissipation_ldp: {
            const auto& b = cfg.dissipation_ldp;
            DissipationLdpConfig dc;
            dc.eps_grid = b.eps;
            dc.M = b.M;
            const double n0 = lp_norm(s.rho0, 2.0);
            dc.delta = b.delta_fraction * n0 * n0;
            dc.solver = cfg.solver;
            dc.partition = CellPartition{b.time_bins, b.space_blocks};
            dc.seed = cfg.seed;
            json r = to_json(dissipation_ldp_check(s, dc));
            r["delta"] = dc.delta;
            return r;
        }
    }
    throw InputError("unknown experiment");
}

RunResult run_config(const RunConfig& cfg, const std::string& out_root) {
    cfg.validate();
    RunResult res;
    res.config_hash = config_hash(cfg);
    res.run_dir = (fs::path(out_root) / run_dir_name(res.config_hash)).string();
    RunWriter w(res.run_dir);

    RunManifest m;
    m.config_hash = res.config_hash;
    m.code_version = code_version();
    m.experiment = to_string(cfg.kind);
    m.started = utc_now();
    m.seed = cfg.seed;
    for (std::uint64_t i = 0; i < 4; ++i) m.path_seeds.push_back(path_seed(cfg.seed, i));

    json doc = config_document(cfg);
    doc.erase("out");
    w.text("config.toml", to_toml(doc));
    try {
        json report;
        report["config_hash"] = res.config_hash;
        report["experiment"] = to_string(cfg.kind);
        report["seed"] = cfg.seed;
        report["code_version"] = code_version();
        report["result"] = execute_experiment(cfg, &w);
        w.text("report.json", report.dump(2) + "\n");
        w.text("report.flat.csv", flatten_csv(report, res.config_hash));
        for (const auto& [name, content] : report_tables(report)) w.text(name, content);
    } catch (const NumericalError& e) {
        m.status = "failed";
        m.failure = {{"kind", "numerical"}, {"message", e.what()}, {"time", e.time()}};
        res.exit_code = exit_numerical;
        res.message = e.what();
    } catch (const InputError& e) {
        m.status = "failed";
        m.failure = {{"kind", "input"}, {"message", e.what()}};
        res.exit_code = exit_schema;
        res.message = e.what();
    }
    m.finished = utc_now();
    m.files = w.files();
    write_manifest(res.run_dir, m);
    return res;
}

RunResult run_experiment(const std::string& config_path, const RunOptions& opt) {
    RunResult res;
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        if (opt.seed) cfg.seed = *opt.seed;
        if (opt.out) cfg.out = *opt.out;
        cfg.validate();
    } catch (const InputError& e) {
        res.exit_code = exit_schema;
        res.message = e.what();
        return res;
    }
    if (opt.threads > 0) set_thread_count(opt.threads);
    return run_config(cfg, cfg.out);
}

int export_report(const std::string& run_dir, const std::string& format, const std::string& out_dir,
                  std::string* message) {
    auto say = [&](const std::string& s) {
        if (message) *message = s;
    };
    if (format != "csv" && format != "json") {
        say("format must be csv or json");
        return exit_schema;
    }
    try {
        const RunManifest m = read_manifest(run_dir);
        verify_manifest(run_dir, m);
        if (m.status != "ok") {
            say("run did not complete; nothing to export");
            return exit_failure;
        }
        const fs::path dst = out_dir.empty() ? fs::path(run_dir) : fs::path(out_dir);
        fs::create_directories(dst);
        if (format == "csv") {
            const json report = json::parse(read_text((fs::path(run_dir) / "report.json").string()));
            if (report.at("config_hash") != m.config_hash) throw IntegrityError("report hash differs from manifest", "report.json");
            write_text_atomic((dst / "report.flat.csv").string(), flatten_csv(report, m.config_hash));
            for (const auto& [name, content] : report_tables(report)) write_text_atomic((dst / name).string(), content);
        } else {
            const json report = unflatten_csv(read_text((fs::path(run_dir) / "report.flat.csv").string()));
            write_text_atomic((dst / "report.json").string(), report.dump(2) + "\n");
        }
        say("exported " + format + " to " + dst.string());
        return exit_ok;
    } catch (const IntegrityError& e) {
        say(std::string(e.what()) + (e.path().empty() ? "" : ": " + e.path()));
        return exit_integrity;
    } catch (const nlohmann::json::exception& e) {
        say(std::string("malformed report: ") + e.what());
        return exit_integrity;
    }
}

RunResult replay_run(const std::string& run_dir) {
    RunResult res;
    try {
        const RunManifest m = read_manifest(run_dir);
        verify_manifest(run_dir, m);
        RunConfig cfg = load_config((fs::path(run_dir) / "config.toml").string());
        cfg.seed = m.seed;
        RunResult again = run_config(cfg, (fs::path(run_dir) / "replay").string());
        res.run_dir = again.run_dir;
        res.config_hash = again.config_hash;
        if (again.config_hash != m.config_hash) throw IntegrityError("replayed config hash differs", "config.toml");
        if (again.exit_code != exit_ok) {
            res.exit_code = again.exit_code;
            res.message = again.message;
            return res;
        }
        const RunManifest r = read_manifest(again.run_dir);
        if (r.files.size() != m.files.size()) throw IntegrityError("replay produced a different file inventory");
        for (std::size_t i = 0; i < m.files.size(); ++i)
            if (r.files[i].path != m.files[i].path || r.files[i].sha256 != m.files[i].sha256)
                throw IntegrityError("replay checksum differs", m.files[i].path);
        res.message = "replay identical: " + std::to_string(m.files.size()) + " files";
    } catch (const IntegrityError& e) {
        res.exit_code = exit_integrity;
        res.message = std::string(e.what()) + (e.path().empty() ? "" : ": " + e.path());
    } catch (const InputError& e) {
        res.exit_code = exit_schema;
        res.message = e.what();
    }
    return res;
}

} // namespace ktl
