#include "ktl/persistence.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "ktl/errors.hpp"
#include "ktl/field.hpp"
#include "ktl/format.hpp"
#include "ktl/snapshot_io.hpp"

namespace fs = std::filesystem;

namespace ktl {

using json = nlohmann::ordered_json;

// ------------------------------------------------------------------- hashes

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("missing file", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

// ----------------------------------------------------------------- manifest

json RunManifest::to_json() const {
    json j;
    j["schema"] = "ktl-manifest-1";
    j["config_hash"] = config_hash;
    j["code_version"] = code_version;
    j["experiment"] = experiment;
    j["started"] = started;
    j["finished"] = finished;
    j["seed"] = seed;
    j["path_seeds"] = path_seeds;
    j["status"] = status;
    j["failure"] = failure;
    auto fl = json::array();
    for (const auto& f : files) fl.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    j["files"] = fl;
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    try {
        if (j.at("schema") != "ktl-manifest-1") throw IntegrityError("unknown manifest schema");
        RunManifest m;
        m.config_hash = j.at("config_hash").get<std::string>();
        m.code_version = j.at("code_version").get<std::string>();
        m.experiment = j.at("experiment").get<std::string>();
        m.started = j.at("started").get<std::string>();
        m.finished = j.at("finished").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.path_seeds = j.at("path_seeds").get<std::vector<std::uint64_t>>();
        m.status = j.at("status").get<std::string>();
        m.failure = j.at("failure");
        for (const auto& f : j.at("files"))
            m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                               f.at("bytes").get<std::uint64_t>()});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("malformed manifest: ") + e.what());
    }
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const std::string& run_dir, const RunManifest& m) {
    write_text_atomic((fs::path(run_dir) / "manifest.json").string(), m.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::string& run_dir) {
    const std::string path = (fs::path(run_dir) / "manifest.json").string();
    if (!fs::exists(path)) throw IntegrityError("manifest not found", path);
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const nlohmann::json::exception&) {
        throw IntegrityError("manifest is not valid JSON", path);
    }
    return RunManifest::from_json(j);
}

void verify_manifest(const std::string& run_dir, const RunManifest& m) {
    for (const auto& f : m.files) {
        const std::string p = (fs::path(run_dir) / f.path).string();
        if (!fs::exists(p)) throw IntegrityError("file listed in the manifest is missing", f.path);
        if (sha256_file(p) != f.sha256) throw IntegrityError("checksum mismatch", f.path);
    }
}

// --------------------------------------------------------------- flat CSV

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string r = "\"";
    for (char c : s) {
        if (c == '"') r += '"';
        r += c;
    }
    return r + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cur;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(cur);
            cur.clear();
            any = true;
        } else if (c == '\n') {
            row.push_back(cur);
            rows.push_back(std::move(row));
            row.clear();
            cur.clear();
            any = false;
        } else if (c != '\r') {
            cur += c;
            any = true;
        }
    }
    if (quoted) throw IntegrityError("unterminated quoted CSV field");
    if (any) {
        row.push_back(cur);
        rows.push_back(std::move(row));
    }
    return rows;
}

void flatten(const json& j, const std::string& ptr, const std::string& hash, std::string& out) {
    auto row = [&](const char* type, const std::string& value) {
        out += hash + ',' + csv_field(ptr) + ',' + type + ',' + csv_field(value) + '\n';
    };
    switch (j.type()) {
        case json::value_t::object:
            if (j.empty()) row("object", "");
            for (auto it = j.begin(); it != j.end(); ++it) {
                std::string k = it.key(), esc;
                for (char c : k) {
                    if (c == '~') esc += "~0";
                    else if (c == '/') esc += "~1";
                    else esc += c;
                }
                flatten(it.value(), ptr + "/" + esc, hash, out);
            }
            break;
        case json::value_t::array:
            if (j.empty()) row("array", "");
            for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], ptr + "/" + std::to_string(i), hash, out);
            break;
        case json::value_t::string: row("string", j.get<std::string>()); break;
        case json::value_t::boolean: row("bool", j.get<bool>() ? "true" : "false"); break;
        case json::value_t::number_integer: row("int", std::to_string(j.get<std::int64_t>())); break;
        // JSON parsing yields unsigned for non-negative integers; one tag keeps
        // the flat form stable across a parse.
        case json::value_t::number_unsigned: row("int", std::to_string(j.get<std::uint64_t>())); break;
        case json::value_t::number_float: row("float", num(j.get<double>())); break;
        case json::value_t::null: row("null", ""); break;
        default: throw InputError("flatten: unsupported JSON value");
    }
}

} // namespace

std::string flatten_csv(const json& doc, const std::string& config_hash) {
    std::string out = "config_hash,pointer,type,value\n";
    flatten(doc, "", config_hash, out);
    return out;
}

json unflatten_csv(const std::string& csv) {
    const auto rows = parse_csv(csv);
    if (rows.empty() || rows[0] != std::vector<std::string>{"config_hash", "pointer", "type", "value"})
        throw IntegrityError("flat report: bad header");
    json doc;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != 4) throw IntegrityError("flat report: row " + std::to_string(r) + " has wrong field count");
        const std::string& type = f[2];
        const std::string& v = f[3];
        json val;
        try {
            if (type == "object") val = json::object();
            else if (type == "array") val = json::array();
            else if (type == "string") val = v;
            else if (type == "bool") val = (v == "true");
            else if (type == "int" && !v.empty() && v[0] == '-') val = static_cast<std::int64_t>(std::stoll(v));
            else if (type == "int") val = static_cast<std::uint64_t>(std::stoull(v));
            else if (type == "float") val = std::stod(v);
            else if (type == "null") val = nullptr;
            else throw IntegrityError("flat report: unknown type '" + type + "'");
        } catch (const std::logic_error&) {
            throw IntegrityError("flat report: bad value on row " + std::to_string(r));
        }
        if (f[1].empty()) doc = val;
        else doc[json::json_pointer(f[1])] = val;
    }
    return doc;
}

// ------------------------------------------------------------------- tables

namespace {

std::string cell(const json& v) {
    if (v.is_string()) return csv_field(v.get<std::string>());
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_float()) return num(v.get<double>());
    if (v.is_null()) return "";
    return v.dump();
}

std::string tail_table(const json& rows, const std::string& h) {
    std::string out = "config_hash,epsilon,estimator,M,hits,p_hat,stderr,eps2_log_p,eps2_log_p_err,n_eff,upper95,flag\n";
    for (const auto& r : rows) {
        out += h;
        for (const char* k : {"epsilon", "estimator", "M", "hits", "p_hat", "stderr", "eps2_log_p", "eps2_log_p_err",
                              "n_eff", "upper95", "flag"})
            out += ',' + cell(r.at(k));
        out += '\n';
    }
    return out;
}

void scalars(const json& j, const std::string& prefix, const std::string& h, std::string& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        const json& v = it.value();
        if (v.is_object()) scalars(v, key, h, out);
        else if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i)
                if (v[i].is_primitive()) out += h + ',' + key + "[" + std::to_string(i) + "]," + cell(v[i]) + '\n';
        } else
            out += h + ',' + key + ',' + cell(v) + '\n';
    }
}

} // namespace

std::vector<std::pair<std::string, std::string>> report_tables(const json& report) {
    const std::string h = report.at("config_hash").get<std::string>();
    const std::string kind = report.at("experiment").get<std::string>();
    const json& res = report.at("result");
    std::vector<std::pair<std::string, std::string>> out;
    if (kind == "zero_noise") {
        std::string t = "config_hash,epsilon,M,median,q1,q3,mean,stderr\n";
        for (const auto& r : res.at("rows")) {
            const json& s = r.at("stats");
            t += h + ',' + cell(r.at("epsilon")) + ',' + cell(s.at("n")) + ',' + cell(s.at("median")) + ',' +
                 cell(s.at("q1")) + ',' + cell(s.at("q3")) + ',' + cell(s.at("mean")) + ',' + cell(s.at("stderr")) +
                 '\n';
        }
        out.emplace_back("report.csv", t);
    } else if (kind == "ldp_tail" || kind == "dissipation_ldp") {
        out.emplace_back("report.csv", tail_table(res.at("rows"), h));
    } else if (kind == "evolve") {
        const json& l = res.at("ledger");
        std::string t = "config_hash,time,quantity,value\n";
        const json& times = l.at("times");
        for (std::size_t k = 0; k < times.size(); ++k) {
            const std::string tt = cell(times[k]);
            t += h + ',' + tt + ",l2_squared," + cell(l.at("l2_squared")[k]) + '\n';
            for (const auto& e : l.at("lp")) t += h + ',' + tt + ",lp_" + cell(e.at("p")) + ',' + cell(e.at("values")[k]) + '\n';
            for (const auto& e : l.at("hs")) t += h + ',' + tt + ",hs_" + cell(e.at("s")) + ',' + cell(e.at("values")[k]) + '\n';
        }
        if (l.at("has_martingale").get<bool>() && !times.empty())
            t += h + ',' + cell(times.back()) + ",martingale_term," + cell(l.at("martingale_term")) + '\n';
        out.emplace_back("report.csv", t);
        if (res.contains("dissipation")) {
            const json& d = res.at("dissipation");
            std::string dt = "config_hash,time_start,time_end,cell,value\n";
            const json& edges = d.at("bin_edges");
            const json& cells = d.at("cells");
            for (std::size_t b = 0; b < cells.size(); ++b)
                for (std::size_t c = 0; c < cells[b].size(); ++c)
                    dt += h + ',' + cell(edges[b]) + ',' + cell(edges[b + 1]) + ',' + std::to_string(c) + ',' +
                          cell(cells[b][c]) + '\n';
            out.emplace_back("dissipation.csv", dt);
        }
    } else {
        std::string t = "config_hash,quantity,value\n";
        scalars(res, "", h, t);
        out.emplace_back("report.csv", t);
    }
    return out;
}

// ------------------------------------------------------------------- writer

RunWriter::RunWriter(std::string run_dir) : dir_(std::move(run_dir)) { fs::create_directories(dir_); }

namespace {
void check_rel(const std::string& rel) {
    const fs::path p(rel);
    if (rel.empty() || p.is_absolute()) throw InputError("run writer: path must be relative: " + rel);
    for (const auto& part : p)
        if (part == "..") throw InputError("run writer: path escapes the run directory: " + rel);
}
} // namespace

void RunWriter::record(const std::string& rel) {
    const std::string full = (fs::path(dir_) / rel).string();
    ManifestFile f{rel, sha256_file(full), static_cast<std::uint64_t>(fs::file_size(full))};
    for (auto& g : files_)
        if (g.path == rel) {
            g = f;
            return;
        }
    files_.push_back(f);
}

void RunWriter::text(const std::string& rel, const std::string& content) {
    check_rel(rel);
    const fs::path full = fs::path(dir_) / rel;
    fs::create_directories(full.parent_path());
    write_text_atomic(full.string(), content);
    record(rel);
}

void RunWriter::snapshot(const std::string& rel_base, const ScalarField& f, double time, const std::string& name) {
    check_rel(rel_base);
    const fs::path full = fs::path(dir_) / rel_base;
    fs::create_directories(full.parent_path());
    write_snapshot(full.string(), f, time, name);
    record(rel_base + ".bin");
    record(rel_base + ".json");
}

} // namespace ktl
