#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ktl {

class ScalarField;

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

struct ManifestFile {
    std::string path;  ///< relative to the run directory
    std::string sha256;
    std::uint64_t bytes = 0;
};

struct RunManifest {
    std::string config_hash;
    std::string code_version;
    std::string experiment;
    std::string started;
    std::string finished;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> path_seeds;  ///< first few, for spot checks
    std::string status = "ok";              ///< ok | failed
    nlohmann::ordered_json failure;         ///< null unless failed
    std::vector<ManifestFile> files;

    nlohmann::ordered_json to_json() const;
    static RunManifest from_json(const nlohmann::ordered_json& j);
};

/// UTC timestamp, ISO 8601.
std::string utc_now();

void write_manifest(const std::string& run_dir, const RunManifest& m);
/// Throws IntegrityError when the manifest is missing or malformed.
RunManifest read_manifest(const std::string& run_dir);
/// Recomputes every listed checksum; throws IntegrityError naming the first
/// offending path.
void verify_manifest(const std::string& run_dir, const RunManifest& m);

/// Lossless flattening of a JSON document into rows (pointer, type, value)
/// and back. Doubles are written with 17 significant digits.
std::string flatten_csv(const nlohmann::ordered_json& doc, const std::string& config_hash);
nlohmann::ordered_json unflatten_csv(const std::string& csv);

/// Per-experiment tables of a report document (the figure interchange
/// format) as (file name, content) pairs. Every row carries the config hash.
std::vector<std::pair<std::string, std::string>> report_tables(const nlohmann::ordered_json& report);

/// Collects writes to the run directory so a single thread performs them,
/// recording checksums for the manifest.
class RunWriter {
public:
    explicit RunWriter(std::string run_dir);
    /// rel must stay inside the run directory.
    void text(const std::string& rel, const std::string& content);
    void snapshot(const std::string& rel_base, const ScalarField& f, double time, const std::string& name);
    const std::vector<ManifestFile>& files() const { return files_; }
    const std::string& dir() const { return dir_; }

private:
    void record(const std::string& rel);
    std::string dir_;
    std::vector<ManifestFile> files_;
};

} // namespace ktl
