#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "microcav/constants.hpp"
#include "microcav/physics.hpp"
#include "microcav/planner.hpp"
#include "microcav/transit.hpp"
#include "microcav/units.hpp"

namespace microcav {

using json = nlohmann::ordered_json;

/// Feasibility-search settings for the plan subcommand.
struct PlanSettings {
    Material material = silicon;
    double ratio = 1.5;
    double power = 300.0;
    DesignConstraints constraints{2e5, 20e-6, 5e-6, 500e-6, 1.0, 64};
};

/// Grids for the parameter-space sweep; defaults emit 3 x 2 x 20 x 50 rows.
struct SweepGrids {
    std::vector<double> ratios{0.5, 1.0, 1.5};
    std::vector<double> powers{100.0, 300.0};
    std::vector<double> masses_amu;  // default: 20 log points, 1e6..1e12
    std::vector<double> lengths;     // default: 50 log points, 5 um..500 um
};

/// Full run configuration. Every field has a default; a config file only
/// overrides what it names. Unknown keys are rejected so typos cannot
/// silently fall back to defaults.
struct RunConfig {
    CavityGeometry geometry{130e-6, 1.3e-3, 1547e-9, 34000.0};
    bool particle_given = true;     // false: design reports cavity-only numbers
    Particle particle{150e-9, silica.permittivity, silica.density};
    double detuning_kappa = -2.3;   // probe detuning in units of kappa
    double drive_power = 0.0;       // intracavity power [W]; only omega_z reads it
    SamplingConfig sampling;
    EventRanges ranges;
    std::size_t batch_events = 1;
    double threshold_sigma = 5.0;   // transit detection threshold
    double pad_factor = 2.5;        // window padding around detected runs
    ScanShape scan;
    PlanSettings plan;
    SweepGrids sweep;
    std::uint64_t seed = 1;
};

namespace detail {

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

inline double field_quantity(const json& v, Unit unit, const std::string& name) {
    if (v.is_string()) {
        try {
            return parse_quantity(v.get<std::string>(), unit);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(name + ": " + e.what());
        }
    }
    if (v.is_number()) return v.get<double>();
    throw std::invalid_argument("field '" + name + "' must be a number or a unit string");
}

inline std::vector<double> field_array(const json& v, Unit unit, const std::string& name) {
    if (!v.is_array() || v.empty())
        throw std::invalid_argument("field '" + name + "' must be a non-empty array");
    std::vector<double> out;
    out.reserve(v.size());
    std::size_t i = 0;
    for (const auto& e : v)
        out.push_back(field_quantity(e, unit, name + "[" + std::to_string(i++) + "]"));
    return out;
}

inline const json& expect_object(const json& v, const std::string& name) {
    if (!v.is_object())
        throw std::invalid_argument("section '" + name + "' must be an object");
    return v;
}

inline Material material_by_name(const std::string& name) {
    if (name == "silica") return silica;
    if (name == "silicon") return silicon;
    throw std::invalid_argument("unknown material '" + name +
                                "' (expected silica or silicon, or give "
                                "permittivity and density directly)");
}

}  // namespace detail

/// Parse and validate a configuration object. Throws std::invalid_argument
/// with a field-level message on any unknown key, malformed value, or
/// violated physical invariant; nothing is computed past validation.
inline RunConfig parse_config(const json& root) {
    RunConfig cfg;
    cfg.particle_given = false;
    if (!root.is_object())
        throw std::invalid_argument("config root must be a JSON object");

    using detail::expect_object;
    using detail::field_quantity;

    for (const auto& [key, val] : root.items()) {
        if (key == "geometry") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "geometry." + k;
                if (k == "length")
                    cfg.geometry.length = field_quantity(v, Unit::length, name);
                else if (k == "mirror_radius")
                    cfg.geometry.mirror_radius = field_quantity(v, Unit::length, name);
                else if (k == "wavelength")
                    cfg.geometry.wavelength = field_quantity(v, Unit::length, name);
                else if (k == "finesse")
                    cfg.geometry.finesse = field_quantity(v, Unit::dimensionless, name);
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "particle") {
            cfg.particle_given = true;
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "particle." + k;
                if (k == "radius")
                    cfg.particle.radius = field_quantity(v, Unit::length, name);
                else if (k == "material") {
                    const Material m = detail::material_by_name(v.get<std::string>());
                    cfg.particle.permittivity = m.permittivity;
                    cfg.particle.density = m.density;
                } else if (k == "permittivity")
                    cfg.particle.permittivity = field_quantity(v, Unit::dimensionless, name);
                else if (k == "density")
                    cfg.particle.density = field_quantity(v, Unit::dimensionless, name);
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "drive") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "drive." + k;
                if (k == "detuning_kappa")
                    cfg.detuning_kappa = field_quantity(v, Unit::dimensionless, name);
                else if (k == "power")
                    cfg.drive_power = field_quantity(v, Unit::power, name);
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "sampling") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "sampling." + k;
                if (k == "sample_rate")
                    cfg.sampling.sample_rate = field_quantity(v, Unit::frequency, name);
                else if (k == "duration")
                    cfg.sampling.duration = field_quantity(v, Unit::time, name);
                else if (k == "snr")
                    cfg.sampling.snr = field_quantity(v, Unit::dimensionless, name);
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "batch") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "batch." + k;
                if (k == "events")
                    cfg.batch_events = static_cast<std::size_t>(
                        field_quantity(v, Unit::dimensionless, name));
                else if (k == "vx_min")
                    cfg.ranges.vx_min = field_quantity(v, Unit::dimensionless, name);
                else if (k == "vx_max")
                    cfg.ranges.vx_max = field_quantity(v, Unit::dimensionless, name);
                else if (k == "vz_min")
                    cfg.ranges.vz_min = field_quantity(v, Unit::dimensionless, name);
                else if (k == "vz_max")
                    cfg.ranges.vz_max = field_quantity(v, Unit::dimensionless, name);
                else if (k == "y0_max_waists")
                    cfg.ranges.y0_max_waists = field_quantity(v, Unit::dimensionless, name);
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "analysis") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "analysis." + k;
                if (k == "threshold_sigma")
                    cfg.threshold_sigma = field_quantity(v, Unit::dimensionless, name);
                else if (k == "pad_factor")
                    cfg.pad_factor = field_quantity(v, Unit::dimensionless, name);
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "scan") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "scan." + k;
                if (k == "sideband")
                    cfg.scan.sideband_hz = field_quantity(v, Unit::frequency, name);
                else if (k == "span")
                    cfg.scan.span_hz = field_quantity(v, Unit::frequency, name);
                else if (k == "depth")
                    cfg.scan.sideband_depth = field_quantity(v, Unit::dimensionless, name);
                else if (k == "scale")
                    cfg.scan.scale = field_quantity(v, Unit::dimensionless, name);
                else if (k == "amplitude")
                    cfg.scan.amplitude = field_quantity(v, Unit::dimensionless, name);
                else if (k == "offset")
                    cfg.scan.offset = field_quantity(v, Unit::dimensionless, name);
                else if (k == "noise")
                    cfg.scan.noise = field_quantity(v, Unit::dimensionless, name);
                else if (k == "samples")
                    cfg.scan.samples = static_cast<std::size_t>(
                        field_quantity(v, Unit::dimensionless, name));
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "plan") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "plan." + k;
                if (k == "material")
                    cfg.plan.material = detail::material_by_name(v.get<std::string>());
                else if (k == "permittivity")
                    cfg.plan.material.permittivity =
                        field_quantity(v, Unit::dimensionless, name);
                else if (k == "density")
                    cfg.plan.material.density = field_quantity(v, Unit::dimensionless, name);
                else if (k == "ratio")
                    cfg.plan.ratio = field_quantity(v, Unit::dimensionless, name);
                else if (k == "power")
                    cfg.plan.power = field_quantity(v, Unit::power, name);
                else if (k == "max_finesse")
                    cfg.plan.constraints.max_finesse =
                        field_quantity(v, Unit::dimensionless, name);
                else if (k == "min_mirror_radius")
                    cfg.plan.constraints.min_mirror_radius =
                        field_quantity(v, Unit::length, name);
                else if (k == "length_min")
                    cfg.plan.constraints.length_min = field_quantity(v, Unit::length, name);
                else if (k == "length_max")
                    cfg.plan.constraints.length_max = field_quantity(v, Unit::length, name);
                else if (k == "safety_margin")
                    cfg.plan.constraints.safety_margin =
                        field_quantity(v, Unit::dimensionless, name);
                else if (k == "grid_points")
                    cfg.plan.constraints.grid_points = static_cast<int>(
                        field_quantity(v, Unit::dimensionless, name));
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "sweep") {
            for (const auto& [k, v] : expect_object(val, key).items()) {
                const std::string name = "sweep." + k;
                if (k == "ratios")
                    cfg.sweep.ratios = detail::field_array(v, Unit::dimensionless, name);
                else if (k == "powers")
                    cfg.sweep.powers = detail::field_array(v, Unit::power, name);
                else if (k == "masses_amu")
                    cfg.sweep.masses_amu = detail::field_array(v, Unit::dimensionless, name);
                else if (k == "lengths")
                    cfg.sweep.lengths = detail::field_array(v, Unit::length, name);
                else
                    throw std::invalid_argument("unknown key '" + name + "'");
            }
        } else if (key == "seed") {
            cfg.seed = root.at("seed").get<std::uint64_t>();
        } else {
            throw std::invalid_argument("unknown key '" + key + "'");
        }
    }

    if (cfg.sweep.masses_amu.empty())
        cfg.sweep.masses_amu = detail::log_grid(1e6, 1e12, 20);
    if (cfg.sweep.lengths.empty())
        cfg.sweep.lengths = detail::log_grid(5e-6, 500e-6, 50);

    // validate everything up front; no computation on a bad config
    validate(cfg.geometry);
    validate(cfg.particle);
    if (!(cfg.sampling.sample_rate > 0.0))
        throw std::invalid_argument("sampling.sample_rate must be > 0");
    if (!(cfg.sampling.duration > 0.0))
        throw std::invalid_argument("sampling.duration must be > 0");
    if (!(cfg.ranges.vx_max >= cfg.ranges.vx_min && cfg.ranges.vx_min > 0.0))
        throw std::invalid_argument("batch vx range must be positive and ordered");
    if (!(cfg.ranges.vz_max >= cfg.ranges.vz_min && cfg.ranges.vz_min >= 0.0))
        throw std::invalid_argument("batch vz range must be non-negative and ordered");
    if (!(cfg.threshold_sigma > 0.0))
        throw std::invalid_argument("analysis.threshold_sigma must be > 0");
    if (!(cfg.pad_factor >= 0.0))
        throw std::invalid_argument("analysis.pad_factor must be >= 0");
    if (!(cfg.scan.samples >= 16))
        throw std::invalid_argument("scan.samples must be at least 16");
    validate(cfg.plan.constraints);
    validate(DesignPoint{cfg.plan.constraints.length_min, cfg.plan.ratio, cfg.plan.power,
                         cfg.geometry.wavelength, cfg.plan.material});
    for (double q : cfg.sweep.ratios)
        if (!(q > 0.0 && q < 2.0))
            throw std::invalid_argument("sweep.ratios entries must lie in (0, 2)");
    for (double m : cfg.sweep.masses_amu)
        if (!(m > 0.0)) throw std::invalid_argument("sweep.masses_amu entries must be > 0");
    for (double L : cfg.sweep.lengths)
        if (!(L > 0.0)) throw std::invalid_argument("sweep.lengths entries must be > 0");
    return cfg;
}

/// Read a config file. With no path at all, every default applies including
/// the reference particle; an explicit config omitting the particle section
/// opts out of particle-dependent reporting.
inline RunConfig load_config(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg = parse_config(json::object());
        cfg.particle_given = true;
        return cfg;
    }
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config '" + path + "': " + e.what());
    }
    return parse_config(j);
}

/// Fully resolved configuration (defaults applied, SI values). Feeding this
/// back through parse_config reproduces the identical RunConfig.
inline json resolved_json(const RunConfig& cfg) {
    json j;
    j["geometry"] = {{"length", cfg.geometry.length},
                     {"mirror_radius", cfg.geometry.mirror_radius},
                     {"wavelength", cfg.geometry.wavelength},
                     {"finesse", cfg.geometry.finesse}};
    if (cfg.particle_given)
        j["particle"] = {{"radius", cfg.particle.radius},
                         {"permittivity", cfg.particle.permittivity},
                         {"density", cfg.particle.density}};
    j["drive"] = {{"detuning_kappa", cfg.detuning_kappa}, {"power", cfg.drive_power}};
    j["sampling"] = {{"sample_rate", cfg.sampling.sample_rate},
                     {"duration", cfg.sampling.duration},
                     {"snr", cfg.sampling.snr}};
    j["batch"] = {{"events", cfg.batch_events},
                  {"vx_min", cfg.ranges.vx_min},
                  {"vx_max", cfg.ranges.vx_max},
                  {"vz_min", cfg.ranges.vz_min},
                  {"vz_max", cfg.ranges.vz_max},
                  {"y0_max_waists", cfg.ranges.y0_max_waists}};
    j["analysis"] = {{"threshold_sigma", cfg.threshold_sigma},
                     {"pad_factor", cfg.pad_factor}};
    j["scan"] = {{"sideband", cfg.scan.sideband_hz},
                 {"span", cfg.scan.span_hz},
                 {"depth", cfg.scan.sideband_depth},
                 {"scale", cfg.scan.scale},
                 {"amplitude", cfg.scan.amplitude},
                 {"offset", cfg.scan.offset},
                 {"noise", cfg.scan.noise},
                 {"samples", cfg.scan.samples}};
    j["plan"] = {{"permittivity", cfg.plan.material.permittivity},
                 {"density", cfg.plan.material.density},
                 {"ratio", cfg.plan.ratio},
                 {"power", cfg.plan.power},
                 {"max_finesse", cfg.plan.constraints.max_finesse},
                 {"min_mirror_radius", cfg.plan.constraints.min_mirror_radius},
                 {"length_min", cfg.plan.constraints.length_min},
                 {"length_max", cfg.plan.constraints.length_max},
                 {"safety_margin", cfg.plan.constraints.safety_margin},
                 {"grid_points", cfg.plan.constraints.grid_points}};
    j["sweep"] = {{"ratios", cfg.sweep.ratios},
                  {"powers", cfg.sweep.powers},
                  {"masses_amu", cfg.sweep.masses_amu},
                  {"lengths", cfg.sweep.lengths}};
    j["seed"] = cfg.seed;
    return j;
}

/// Probe built from the configured cavity, particle, and detuning.
inline ProbeSetup probe_from_config(const RunConfig& cfg) {
    return make_probe(cfg.geometry, cfg.particle, cfg.detuning_kappa, cfg.drive_power);
}

}  // namespace microcav
