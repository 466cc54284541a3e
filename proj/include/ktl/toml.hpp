#pragma once

#include <string>

#include <json.hpp>

namespace ktl {

/// Parses the subset of TOML used by run configs: tables and dotted tables,
/// bare/quoted/dotted keys, basic and literal strings, integers, floats
/// (inf/nan included), booleans, nested multi-line arrays and inline tables.
/// Throws InputError with the offending line.
nlohmann::ordered_json parse_toml(const std::string& text);

/// Emits a document whose top-level objects become tables. Round-trips
/// through parse_toml; floats are written with 17 significant digits.
std::string to_toml(const nlohmann::ordered_json& doc);

} // namespace ktl
