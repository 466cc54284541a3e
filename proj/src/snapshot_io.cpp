#include "ktl/snapshot_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ktl/errors.hpp"

namespace ktl {

void write_f64(const std::string& path, const std::vector<double>& data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<double> read_f64(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IntegrityError("cannot open " + path, path);
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    if (bytes % sizeof(double) != 0) throw IntegrityError("truncated float64 file " + path, path);
    is.seekg(0);
    std::vector<double> out(bytes / sizeof(double));
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    return out;
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
        os << text;
        if (!os) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IntegrityError("cannot open " + path, path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_snapshot(const std::string& base, const ScalarField& f, double time, const std::string& name) {
    write_f64(base + ".bin", f.values());
    nlohmann::ordered_json h;
    h["d"] = f.grid().d;
    h["N"] = f.grid().N;
    h["L"] = f.grid().L;
    h["time"] = time;
    h["name"] = name;
    write_text_atomic(base + ".json", h.dump(2) + "\n");
}

Snapshot read_snapshot(const std::string& base) {
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(read_text(base + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("bad snapshot header " + base + ".json: " + e.what(), base + ".json");
    }
    Grid g;
    try {
        g.d = h.at("d").get<int>();
        g.N = h.at("N").get<int>();
        g.L = h.at("L").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("snapshot header missing fields: " + std::string(e.what()), base + ".json");
    }
    g.validate();
    auto v = read_f64(base + ".bin");
    if (v.size() != g.size()) throw IntegrityError("snapshot size does not match header: " + base + ".bin", base + ".bin");
    Snapshot s;
    s.field = ScalarField::from_values(g, std::move(v));
    s.time = h.value("time", 0.0);
    s.name = h.value("name", std::string{});
    return s;
}

} // namespace ktl
