#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "microcav/planner.hpp"
#include "microcav/transit.hpp"
#include "microcav/version.hpp"

namespace microcav {

/// Ordered metadata block of a trace or scan file.
using MetaBlock = std::vector<std::pair<std::string, std::string>>;

inline const std::string* meta_find(const MetaBlock& meta, const std::string& key) {
    for (const auto& [k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

namespace detail {

/// Full-precision text for a double; round-trips exactly through strtod.
inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Write `content` to `path` via a temp file and rename, so readers never
/// observe a half-written file and failures leave no partial output.
inline void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot move '" + tmp + "' to '" + path +
                                 "': " + ec.message());
    }
}

// ---------------------------------------------------------------------------
// time traces:  "# key: value" header block, then time_s,transmission rows
// ---------------------------------------------------------------------------

inline std::string format_trace(const TransmissionTrace& trace, const MetaBlock& extra) {
    std::ostringstream out;
    out << "# format: " << trace_format << "\n";
    out << "# sample_rate: " << detail::num(trace.sample_rate) << "\n";
    out << "# noise_sigma: " << detail::num(trace.noise_sigma) << "\n";
    out << "# baseline: " << detail::num(trace.baseline) << "\n";
    for (const auto& [k, v] : extra) out << "# " << k << ": " << v << "\n";
    out << "time_s,transmission\n";
    for (std::size_t i = 0; i < trace.time.size(); ++i)
        out << detail::num(trace.time[i]) << ',' << detail::num(trace.transmission[i])
            << "\n";
    return out.str();
}

inline void write_trace(const std::string& path, const TransmissionTrace& trace,
                        const MetaBlock& extra = {}) {
    atomic_write(path, format_trace(trace, extra));
}

struct TraceFile {
    MetaBlock meta;
    TransmissionTrace trace;
};

namespace detail {

inline MetaBlock read_meta(std::istream& in, std::string& line) {
    MetaBlock meta;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] != '#') break;
        std::size_t start = 1;
        while (start < line.size() && line[start] == ' ') ++start;
        const std::size_t colon = line.find(':', start);
        if (colon == std::string::npos) continue;  // stray comment, not metadata
        std::size_t vstart = colon + 1;
        while (vstart < line.size() && line[vstart] == ' ') ++vstart;
        meta.emplace_back(line.substr(start, colon - start), line.substr(vstart));
    }
    return meta;
}

inline double meta_number(const MetaBlock& meta, const std::string& key, double fallback) {
    const std::string* s = meta_find(meta, key);
    return s ? std::strtod(s->c_str(), nullptr) : fallback;
}

inline bool parse_pair(const std::string& line, double& a, double& b) {
    const char* s = line.c_str();
    char* end = nullptr;
    a = std::strtod(s, &end);
    if (end == s || *end != ',') return false;
    s = end + 1;
    b = std::strtod(s, &end);
    return end != s;
}

}  // namespace detail

inline TraceFile read_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace file '" + path + "'");
    std::string line;
    TraceFile out;
    out.meta = detail::read_meta(in, line);
    const std::string* fmt = meta_find(out.meta, "format");
    if (!fmt || *fmt != trace_format)
        throw std::runtime_error("'" + path + "' is not a " + std::string(trace_format) +
                                 " file");
    if (line != "time_s,transmission")
        throw std::runtime_error("'" + path + "': expected time_s,transmission header, got '" +
                                 line + "'");
    double a = 0.0, b = 0.0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!detail::parse_pair(line, a, b))
            throw std::runtime_error("'" + path + "': malformed data row '" + line + "'");
        out.trace.time.push_back(a);
        out.trace.transmission.push_back(b);
    }
    if (out.trace.time.size() < 2)
        throw std::runtime_error("'" + path + "': fewer than 2 samples");
    out.trace.sample_rate = detail::meta_number(
        out.meta, "sample_rate",
        static_cast<double>(out.trace.time.size() - 1) /
            (out.trace.time.back() - out.trace.time.front()));
    out.trace.noise_sigma = detail::meta_number(out.meta, "noise_sigma", 0.0);
    out.trace.baseline = detail::meta_number(out.meta, "baseline", 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// frequency scans:  same header block, position,transmission rows
// ---------------------------------------------------------------------------

inline std::string format_scan(const FrequencyScan& scan, const MetaBlock& extra) {
    std::ostringstream out;
    out << "# format: " << scan_format << "\n";
    out << "# sideband_hz: " << detail::num(scan.sideband_hz) << "\n";
    for (const auto& [k, v] : extra) out << "# " << k << ": " << v << "\n";
    out << "position,transmission\n";
    for (std::size_t i = 0; i < scan.position.size(); ++i)
        out << detail::num(scan.position[i]) << ',' << detail::num(scan.transmission[i])
            << "\n";
    return out.str();
}

inline void write_scan(const std::string& path, const FrequencyScan& scan,
                       const MetaBlock& extra = {}) {
    atomic_write(path, format_scan(scan, extra));
}

struct ScanFile {
    MetaBlock meta;
    FrequencyScan scan;
};

inline ScanFile read_scan(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open scan file '" + path + "'");
    std::string line;
    ScanFile out;
    out.meta = detail::read_meta(in, line);
    const std::string* fmt = meta_find(out.meta, "format");
    if (!fmt || *fmt != scan_format)
        throw std::runtime_error("'" + path + "' is not a " + std::string(scan_format) +
                                 " file");
    if (line != "position,transmission")
        throw std::runtime_error("'" + path +
                                 "': expected position,transmission header, got '" + line +
                                 "'");
    double a = 0.0, b = 0.0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!detail::parse_pair(line, a, b))
            throw std::runtime_error("'" + path + "': malformed data row '" + line + "'");
        out.scan.position.push_back(a);
        out.scan.transmission.push_back(b);
    }
    out.scan.sideband_hz = detail::meta_number(out.meta, "sideband_hz", 0.0);
    if (out.scan.position.size() < 16)
        throw std::runtime_error("'" + path + "': fewer than 16 samples");
    return out;
}

// ---------------------------------------------------------------------------
// batch ground truth and feasibility tables
// ---------------------------------------------------------------------------

inline std::string format_truth(const std::vector<SimulatedEvent>& events,
                                std::uint64_t base_seed) {
    std::ostringstream out;
    out << "# format: " << table_format << "\n";
    out << "# content: ground-truth trajectories\n";
    out << "# base_seed: " << base_seed << "\n";
    out << "event,vx_m_s,vz_m_s,y0_m,z0_m,t0_s\n";
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Trajectory& tr = events[i].truth;
        out << i << ',' << detail::num(tr.vx) << ',' << detail::num(tr.vz) << ','
            << detail::num(tr.y0) << ',' << detail::num(tr.z0) << ','
            << detail::num(tr.t0) << "\n";
    }
    return out.str();
}

inline std::string format_sweep_table(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out << "# format: " << table_format << "\n";
    out << "# content: required finesse over the design grid\n";
    out << "q,P_cav_W,mass_amu,L_m,R_m,w0_m,Vm_m3,F_A,F_B,F_required,binding\n";
    for (const SweepCell& c : cells) {
        out << detail::num(c.ratio) << ',' << detail::num(c.power) << ','
            << detail::num(c.mass_amu) << ',' << detail::num(c.length) << ','
            << detail::num(c.mirror_radius) << ',' << detail::num(c.waist) << ','
            << detail::num(c.mode_volume) << ',' << detail::num(c.finesse_strong_coupling)
            << ',' << detail::num(c.finesse_resolved_sideband) << ','
            << detail::num(c.required_finesse) << ',' << to_string(c.binding) << "\n";
    }
    return out.str();
}

inline void write_sweep_table(const std::string& path, const std::vector<SweepCell>& cells) {
    atomic_write(path, format_sweep_table(cells));
}

}  // namespace microcav
