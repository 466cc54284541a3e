// Command-line front end: run, export, validate, replay.
#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ktl/errors.hpp"
#include "ktl/runner.hpp"
#include "ktl/snapshot_io.hpp"
#include "ktl/stats.hpp"
#include "ktl/toml.hpp"

using namespace ktl;

namespace {

std::vector<RunConfig> load_all(const std::string& path, const std::vector<std::string>& sweeps,
                                const RunOptions& opt) {
    const auto doc = parse_toml(read_text(path));
    std::vector<RunConfig> out;
    for (const auto& child : expand_sweep(doc, sweeps)) {
        RunConfig c = config_from_document(child);
        if (opt.seed) c.seed = *opt.seed;
        if (opt.out) c.out = *opt.out;
        c.validate();
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kraichnan transport lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    std::string config, run_dir, format, out;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::vector<std::string> sweeps;

    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", config, "config file")->required();
        s->add_option("--out", out, "output root (overrides the config)");
        s->add_option("--seed", seed, "master seed (overrides the config)");
        s->add_option("--sweep", sweeps, "key=v1,v2,... expands into child configs")->take_all();
    };
    auto* run = app.add_subcommand("run", "run the experiment of a config");
    add_common(run);
    run->add_option("--threads", threads, "worker threads (fallback: KTL_THREADS)");
    auto* validate = app.add_subcommand("validate", "parse and range-check a config");
    add_common(validate);
    auto* exp = app.add_subcommand("export", "re-emit the reports of a run directory");
    exp->add_option("--run", run_dir, "run directory")->required();
    exp->add_option("--format", format, "csv or json")->required()->check(CLI::IsMember({"csv", "json"}));
    exp->add_option("--out", out, "destination directory (default: the run directory)");
    auto* rep = app.add_subcommand("replay", "re-run a stored config and compare checksums");
    rep->add_option("--run", run_dir, "run directory")->required();
    rep->add_option("--threads", threads, "worker threads (fallback: KTL_THREADS)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_schema;
    }

    if (threads < 0) {
        std::cerr << "error: --threads must be >= 0\n";
        return exit_schema;
    }
    if (threads > 0) set_thread_count(threads);
    RunOptions opt;
    if (!out.empty()) opt.out = out;
    opt.seed = seed;
    opt.threads = threads;

    try {
        if (*validate || *run) {
            std::vector<RunConfig> cfgs;
            try {
                cfgs = load_all(config, sweeps, opt);
            } catch (const InputError& e) {
                std::cerr << "schema error: " << e.what() << "\n";
                return exit_schema;
            }
            if (*validate) {
                for (const auto& c : cfgs)
                    std::cout << "ok " << to_string(c.kind) << " " << config_hash(c) << "\n";
                return exit_ok;
            }
            int worst = exit_ok;
            for (const auto& c : cfgs) {
                const RunResult r = run_config(c, c.out);
                std::cout << (r.exit_code == exit_ok ? "done " : "failed ") << r.run_dir << "\n";
                if (!r.message.empty()) std::cerr << r.message << "\n";
                worst = std::max(worst, r.exit_code);
            }
            return worst;
        }
        if (*exp) {
            std::string msg;
            const int rc = export_report(run_dir, format, out, &msg);
            (rc == exit_ok ? std::cout : std::cerr) << msg << "\n";
            return rc;
        }
        if (*rep) {
            const RunResult r = replay_run(run_dir);
            (r.exit_code == exit_ok ? std::cout : std::cerr) << r.message << "\n";
            return r.exit_code;
        }
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return exit_schema;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << (e.path().empty() ? "" : ": " + e.path()) << "\n";
        return exit_integrity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_failure;
    }
    return exit_failure;
}
