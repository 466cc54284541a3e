#pragma once

#include <string>
#include <vector>

#include "ktl/field.hpp"

namespace ktl {

struct Snapshot {
    ScalarField field;
    double time = 0.0;
    std::string name;
};

/// Writes <base>.bin (row-major float64) and <base>.json {d, N, L, time, name}.
void write_snapshot(const std::string& base, const ScalarField& f, double time, const std::string& name);
Snapshot read_snapshot(const std::string& base);

void write_f64(const std::string& path, const std::vector<double>& data);
std::vector<double> read_f64(const std::string& path);

/// Writes text to path via a temporary file and rename.
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

} // namespace ktl
