#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "ktl/config.hpp"

namespace ktl {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_schema = 2, exit_numerical = 3, exit_integrity = 4 };

struct RunOptions {
    std::optional<std::string> out;      ///< overrides the config's output root
    std::optional<std::uint64_t> seed;   ///< overrides the config's master seed
    int threads = 0;                     ///< 0 keeps KTL_THREADS / hardware default
};

struct RunResult {
    int exit_code = exit_ok;
    std::string run_dir;
    std::string config_hash;
    std::string message;
};

std::string code_version();

/// Directory name of a run below its output root.
std::string run_dir_name(const std::string& config_hash);

/// Result document of one experiment (no I/O besides field snapshots through
/// the optional writer).
nlohmann::ordered_json execute_experiment(const RunConfig& cfg, class RunWriter* writer);

/// Runs a validated config into <out_root>/<hash>/ and writes the manifest,
/// also on numerical failure.
RunResult run_config(const RunConfig& cfg, const std::string& out_root);
/// Parse, validate and run; schema problems give exit_schema without output.
RunResult run_experiment(const std::string& config_path, const RunOptions& opt);

/// Re-emits reports from a verified run directory. csv: tables and the flat
/// CSV from report.json; json: report.json from the flat CSV. Output goes to
/// out_dir (default: the run directory). Returns an exit code.
int export_report(const std::string& run_dir, const std::string& format, const std::string& out_dir,
                  std::string* message = nullptr);

/// Re-runs the stored config into <run_dir>/replay and compares every
/// checksum with the manifest.
RunResult replay_run(const std::string& run_dir);

} // namespace ktl
