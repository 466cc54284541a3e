#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>
#include <unistd.h>

#include "ktl/config.hpp"
#include "ktl/errors.hpp"
#include "ktl/persistence.hpp"
#include "ktl/runner.hpp"
#include "ktl/snapshot_io.hpp"
#include "ktl/toml.hpp"

using namespace ktl;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("ktl_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

struct Cli {
    int code;
    std::string output;
};

Cli cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(KTL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int st = std::system(cmd.c_str());
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(log)};
}

std::string run_dir_of(const fs::path& config, const fs::path& out) {
    return (out / run_dir_name(config_hash(load_config(config.string())))).string();
}

const char* kEvolve = R"(seed = 7
[grid]
d = 2
N = 16
[initial]
kind = "constant"
amplitude = 2.0
[noise]
K = 2
[solver]
epsilon = 0.0
dt = 0.01
T = 0.1
record_every = 5
[experiment]
kind = "evolve"
)";

const char* kZeroNoise = R"(seed = 11
[grid]
N = 32
[initial]
kind = "mode"
k = [1, 0]
[noise]
K = 4
[drift]
kind = "cellular"
[solver]
dt = 0.002
T = 1.0
record_every = 50
log_coefficients = false
[experiment]
kind = "zero_noise"
[experiment.zero_noise]
eps = [0.4, 0.2, 0.1]
M = 8
)";

std::map<std::string, std::string> checksums(const std::string& run_dir) {
    std::map<std::string, std::string> out;
    for (const auto& f : read_manifest(run_dir).files) out[f.path] = f.sha256;
    return out;
}

} // namespace

TEST_CASE("toml: parse, emit, round trip") {
    const json doc = parse_toml(R"(
a = 1
b = -2
c = 1.5e-3
s = "x\ty"
lit = 'c:\path'
flag = true
arr = [1, 2,
       3]
inl = { p = 4.0, q = "r" }
[t]
x.y = inf
[t.u]
z = [[1, 2], [3]]
)");
    CHECK(doc["a"] == 1);
    CHECK(doc["b"] == -2);
    CHECK(doc["c"].get<double>() == 1.5e-3);
    CHECK(doc["s"] == "x\ty");
    CHECK(doc["lit"] == "c:\\path");
    CHECK(doc["flag"] == true);
    CHECK(doc["arr"].size() == 3);
    CHECK(doc["inl"]["q"] == "r");
    CHECK(std::isinf(doc["t"]["x"]["y"].get<double>()));
    CHECK(doc["t"]["u"]["z"][0][1] == 2);
    const json again = parse_toml(to_toml(doc));
    CHECK(again.dump() == doc.dump());
    CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), InputError);
    CHECK_THROWS_AS(parse_toml("[t]\n[t]\n"), InputError);
    CHECK_THROWS_AS(parse_toml("a = \n"), InputError);
}

TEST_CASE("config: schema, hash and sweeps") {
    const RunConfig cfg = config_from_document(parse_toml(kEvolve));
    CHECK(cfg.grid.N == 16);
    CHECK(cfg.seed == 7);
    // The canonical document reproduces the same config and hash.
    const RunConfig back = config_from_document(config_document(cfg));
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 64);
    // The output root does not enter the hash.
    RunConfig moved = cfg;
    moved.out = "/elsewhere";
    CHECK(config_hash(moved) == config_hash(cfg));
    RunConfig reseeded = cfg;
    reseeded.seed = 8;
    CHECK(config_hash(reseeded) != config_hash(cfg));

    CHECK_THROWS_AS(config_from_document(parse_toml(std::string(kEvolve) + "bogus = 1\n")), InputError);
    CHECK_THROWS_AS(config_from_document(parse_toml("[grid]\nN = \"x\"\n")), InputError);
    CHECK_THROWS_AS(config_from_document(parse_toml("[solver]\nkappa = 1.5\n")), InputError);

    const auto kids = expand_sweep(parse_toml(kEvolve), {"solver.dt=0.01,0.005", "seed=1,2,3"});
    CHECK(kids.size() == 6);
    std::set<std::string> hashes;
    for (const auto& k : kids) hashes.insert(config_hash(config_from_document(k)));
    CHECK(hashes.size() == 6);
    CHECK_THROWS_AS(expand_sweep(parse_toml(kEvolve), {"solver.dt"}), InputError);
}

TEST_CASE("persistence primitives") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const json doc = json::parse(R"({"a":1,"b":[0.1,-2,{"c":"x,y"}],"d":null,"e":true,"f":-3})");
    const std::string flat = flatten_csv(doc, "h");
    CHECK(flat.rfind("config_hash,pointer,type,value\n", 0) == 0);
    const json back = unflatten_csv(flat);
    CHECK(back.dump() == doc.dump());
    CHECK(flatten_csv(back, "h") == flat);

    TempDir tmp;
    RunWriter w(tmp.path.string());
    CHECK_THROWS(w.text("../escape.txt", "x"));
    CHECK_THROWS(w.text("/abs.txt", "x"));
    w.text("ok.txt", "hello");
    REQUIRE(w.files().size() == 1);
    CHECK(w.files()[0].sha256 == sha256_hex("hello"));
}

TEST_CASE("cli: minimal evolve, determinism, export and tamper detection") {
    TempDir tmp;
    const fs::path cfg = tmp.path / "evolve.toml";
    write_file(cfg, kEvolve);
    const fs::path out1 = tmp.path / "o1", out2 = tmp.path / "o2", log = tmp.path / "log.txt";

    const Cli r1 = cli("run --config " + cfg.string() + " --out " + out1.string(), log);
    REQUIRE_MESSAGE(r1.code == 0, r1.output);
    const std::string dir1 = run_dir_of(cfg, out1);
    REQUIRE(fs::exists(fs::path(dir1) / "manifest.json"));

    // Constant datum, eps=0, b=0: every stored field is the constant.
    int nfields = 0;
    for (int i = 0; fs::exists(fs::path(dir1) / "fields" / ("rho_000" + std::to_string(i) + ".bin")); ++i) {
        const Snapshot s = read_snapshot((fs::path(dir1) / "fields" / ("rho_000" + std::to_string(i))).string());
        for (double v : s.field.values()) CHECK(v == 2.0);
        ++nfields;
    }
    CHECK(nfields == 3);

    // Same config and seed: identical checksums except timestamps, which live only in the manifest.
    REQUIRE(cli("run --config " + cfg.string() + " --out " + out2.string(), log).code == 0);
    const std::string dir2 = run_dir_of(cfg, out2);
    CHECK(checksums(dir1) == checksums(dir2));

    // Export is idempotent and verifies the manifest first.
    const auto before = checksums(dir1);
    const std::string json_before = slurp(fs::path(dir1) / "report.json");
    REQUIRE(cli("export --run " + dir1 + " --format csv", log).code == 0);
    REQUIRE(cli("export --run " + dir1 + " --format json", log).code == 0);
    for (const auto& [p, h] : before) CHECK(sha256_file((fs::path(dir1) / p).string()) == h);
    CHECK(slurp(fs::path(dir1) / "report.json") == json_before);

    // Replay reproduces every checksum.
    const Cli rep = cli("replay --run " + dir1, log);
    CHECK_MESSAGE(rep.code == 0, rep.output);

    // Tampering is caught with the offending path.
    const fs::path victim = fs::path(dir1) / "fields" / "rho_0001.bin";
    std::string bytes = slurp(victim);
    bytes[5] ^= 0x01;
    write_file(victim, bytes);
    const Cli bad = cli("export --run " + dir1 + " --format csv", log);
    CHECK(bad.code == 4);
    CHECK(bad.output.find("fields/rho_0001.bin") != std::string::npos);
}

TEST_CASE("cli: json -> csv -> json keeps every number") {
    TempDir tmp;
    const fs::path cfg = tmp.path / "evolve.toml";
    write_file(cfg, kEvolve);
    const fs::path out = tmp.path / "o", log = tmp.path / "log.txt";
    REQUIRE(cli("run --config " + cfg.string() + " --out " + out.string(), log).code == 0);
    const std::string dir = run_dir_of(cfg, out);
    const fs::path e1 = tmp.path / "e1", e2 = tmp.path / "e2";
    REQUIRE(cli("export --run " + dir + " --format csv --out " + e1.string(), log).code == 0);
    // Rebuild report.json from the flat CSV alone and compare values exactly.
    const json rebuilt = unflatten_csv(slurp(e1 / "report.flat.csv"));
    const json original = json::parse(slurp(fs::path(dir) / "report.json"));
    CHECK(rebuilt == original);
    REQUIRE(cli("export --run " + dir + " --format json --out " + e2.string(), log).code == 0);
    CHECK(json::parse(slurp(e2 / "report.json")) == original);
}

TEST_CASE("cli: exit codes for schema and numerical failures") {
    TempDir tmp;
    const fs::path log = tmp.path / "log.txt";
    const fs::path bad = tmp.path / "bad.toml";
    write_file(bad, std::string(kEvolve) + "bogus = 1\n");
    const Cli r = cli("run --config " + bad.string() + " --out " + (tmp.path / "o").string(), log);
    CHECK(r.code == 2);
    CHECK(r.output.find("bogus") != std::string::npos);
    CHECK(cli("validate --config " + bad.string(), log).code == 2);

    // Spectral CFL violation: rejected at run time, manifest records the failure.
    const fs::path cfl = tmp.path / "cfl.toml";
    write_file(cfl, R"(seed = 1
[grid]
N = 16
[noise]
K = 2
[drift]
kind = "constant"
velocity = [100.0, 0.0]
[solver]
epsilon = 0.0
dt = 0.05
T = 0.1
record_every = 1
[experiment]
kind = "evolve"
)");
    const fs::path out = tmp.path / "o3";
    const Cli n = cli("run --config " + cfl.string() + " --out " + out.string(), log);
    CHECK(n.code == 3);
    const std::string dir = run_dir_of(cfl, out);
    REQUIRE(fs::exists(fs::path(dir) / "manifest.json"));
    const RunManifest m = read_manifest(dir);
    CHECK(m.status == "failed");
    CHECK_FALSE(m.failure.is_null());
}

TEST_CASE("cli: zero_noise smoke run gives a 3-row table within budget") {
    TempDir tmp;
    const fs::path cfg = tmp.path / "zn.toml", out = tmp.path / "o", log = tmp.path / "log.txt";
    write_file(cfg, kZeroNoise);
    const auto t0 = std::chrono::steady_clock::now();
    const Cli r = cli("run --config " + cfg.string() + " --out " + out.string(), log);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE_MESSAGE(r.code == 0, r.output);
    MESSAGE("zero_noise smoke run took " << secs << " s");
    CHECK(secs < 300.0);
    const std::string table = slurp(fs::path(run_dir_of(cfg, out)) / "report.csv");
    std::istringstream is(table);
    std::string line;
    std::getline(is, line);
    CHECK(line == "config_hash,epsilon,M,median,q1,q3,mean,stderr");
    const std::string hash = config_hash(load_config(cfg.string()));
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        CHECK(line.rfind(hash + ",", 0) == 0);
        ++rows;
    }
    CHECK(rows == 3);
}
