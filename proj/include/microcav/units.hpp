#pragma once

#include <cctype>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace microcav {

/// Physical dimension a config field expects.
enum class Unit { length, time, frequency, power, dimensionless };

inline const char* to_string(Unit u) {
    switch (u) {
        case Unit::length: return "length";
        case Unit::time: return "time";
        case Unit::frequency: return "frequency";
        case Unit::power: return "power";
        default: return "dimensionless";
    }
}

namespace detail {

struct UnitEntry {
    const char* suffix;
    Unit dimension;
    double factor;
};

// longest-match table; bare numbers are taken as SI
inline constexpr UnitEntry unit_table[] = {
    {"pm", Unit::length, 1e-12},   {"nm", Unit::length, 1e-9},
    {"um", Unit::length, 1e-6},    {"mm", Unit::length, 1e-3},
    {"cm", Unit::length, 1e-2},    {"m", Unit::length, 1.0},
    {"ns", Unit::time, 1e-9},      {"us", Unit::time, 1e-6},
    {"ms", Unit::time, 1e-3},      {"s", Unit::time, 1.0},
    {"THz", Unit::frequency, 1e12}, {"GHz", Unit::frequency, 1e9},
    {"MHz", Unit::frequency, 1e6}, {"kHz", Unit::frequency, 1e3},
    {"Hz", Unit::frequency, 1.0},  {"mW", Unit::power, 1e-3},
    {"kW", Unit::power, 1e3},      {"W", Unit::power, 1.0},
};

}  // namespace detail

/// Parse "130 um", "17 MHz", "300W", or a bare SI number. The suffix, when
/// present, must carry the expected dimension.
inline double parse_quantity(const std::string& text, Unit expected) {
    const char* s = text.c_str();
    char* end = nullptr;
    const double value = std::strtod(s, &end);
    if (end == s) throw std::invalid_argument("not a number: '" + text + "'");
    while (*end != '\0' && std::isspace(static_cast<unsigned char>(*end))) ++end;
    const std::string suffix(end);
    if (suffix.empty()) return value;  // bare number: SI
    for (const auto& e : detail::unit_table) {
        if (suffix == e.suffix) {
            if (e.dimension != expected)
                throw std::invalid_argument("unit '" + suffix + "' is a " +
                                            to_string(e.dimension) + ", expected " +
                                            to_string(expected) + " in '" + text + "'");
            return value * e.factor;
        }
    }
    throw std::invalid_argument("unknown unit '" + suffix + "' in '" + text + "'");
}

}  // namespace microcav
