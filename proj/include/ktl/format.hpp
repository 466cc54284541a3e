#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

namespace ktl {

/// Round-trippable decimal text for a double ("inf", "-inf", "nan" spelled out).
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// JSON has no infinities; non-finite values are stored as strings.
inline nlohmann::ordered_json json_num(double v) {
    if (std::isfinite(v)) return v;
    return num(v);
}

inline double json_to_double(const nlohmann::ordered_json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        return NAN;
    }
    return j.get<double>();
}

} // namespace ktl
