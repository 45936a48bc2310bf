#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "microcav/version.hpp"

namespace microcav {

/// FNV-1a 64-bit hash; stable across platforms, used for run identifiers.
inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Builder for the human-readable results format: nested key-value lines,
/// two-space indentation, fields emitted in call order so output is stable.
class ResultsWriter {
public:
    ResultsWriter() { text_ = "# format: " + std::string(results_format) + "\n"; }

    ResultsWriter& section(const std::string& name) {
        line(name + ":");
        ++depth_;
        return *this;
    }

    ResultsWriter& end_section() {
        if (depth_ > 0) --depth_;
        return *this;
    }

    ResultsWriter& field(const std::string& key, const std::string& value) {
        line(key + ": " + value);
        return *this;
    }

    ResultsWriter& field(const std::string& key, const char* value) {
        return field(key, std::string(value));
    }

    ResultsWriter& field(const std::string& key, double value) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.12g", value);
        return field(key, std::string(buf));
    }

    ResultsWriter& field(const std::string& key, bool value) {
        return field(key, std::string(value ? "true" : "false"));
    }

    ResultsWriter& field(const std::string& key, std::uint64_t value) {
        return field(key, std::to_string(value));
    }

    ResultsWriter& field(const std::string& key, std::int64_t value) {
        return field(key, std::to_string(value));
    }

    const std::string& str() const { return text_; }

private:
    void line(const std::string& content) {
        for (int i = 0; i < depth_; ++i) text_ += "  ";
        text_ += content;
        text_ += "\n";
    }

    std::string text_;
    int depth_ = 0;
};

}  // namespace microcav
