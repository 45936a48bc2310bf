// command-line front end: design, simulate, analyze, plan
//
// Exit codes: 0 success (including empty analysis results and infeasible but
// well-posed plans), 2 validation error, 4 I/O error.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "microcav/analysis.hpp"
#include "microcav/config.hpp"
#include "microcav/planner.hpp"
#include "microcav/results.hpp"
#include "microcav/trace_io.hpp"
#include "microcav/version.hpp"

namespace fs = std::filesystem;
using namespace microcav;

namespace {

struct CliState {
    RunConfig cfg;
    std::string config_json;  // resolved, compact
    std::string out_dir;
    unsigned threads = 0;
    bool verbose = false;
    std::chrono::steady_clock::time_point start;
};

double elapsed_s(const CliState& st) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - st.start)
        .count();
}

void record_header(ResultsWriter& w, const char* cmd, const CliState& st) {
    w.field("run_id",
            hex16(fnv1a(std::string(version_string) + "|" + cmd + "|" + st.config_json)));
    w.field("version", version_string);
    w.field("command", cmd);
    w.field("config_json", st.config_json);
}

void emit_record(const CliState& st, const std::string& name, ResultsWriter& w) {
    w.field("timing_s", elapsed_s(st));
    const std::string path = (fs::path(st.out_dir) / name).string();
    atomic_write(path, w.str());
    if (st.verbose) std::fprintf(stderr, "wrote %s\n", path.c_str());
}

std::string out_path(const CliState& st, const std::string& name) {
    return (fs::path(st.out_dir) / name).string();
}

// ---------------------------------------------------------------------------

int cmd_design(const CliState& st) {
    const RunConfig& cfg = st.cfg;
    const CavityMode mode = derive_mode(cfg.geometry);

    ResultsWriter w;
    record_header(w, "design", st);
    w.section("cavity");
    w.field("length_m", mode.length);
    w.field("waist_m", mode.waist);
    w.field("fsr_hz", mode.fsr);
    w.field("kappa_rad_s", mode.kappa);
    w.field("kappa_over_2pi_hz", mode.kappa / (2.0 * pi));
    w.field("finesse", cfg.geometry.finesse);
    w.field("mode_volume_m3", mode.mode_volume);
    w.end_section();

    std::printf("cavity: w0 = %.4g um, FSR = %.6g THz, kappa/2pi = %.6g MHz, Vm = %.4g pL\n",
                mode.waist * 1e6, mode.fsr / 1e12, mode.kappa / (2.0 * pi) / 1e6,
                mode.mode_volume * 1e15);

    if (cfg.particle_given) {
        const CouplingParams cp =
            coupling_params(cfg.particle, mode, DriveSettings{0.0, cfg.drive_power});
        const ProbeSetup setup = probe_from_config(cfg);
        w.section("particle");
        w.field("radius_m", cfg.particle.radius);
        w.field("permittivity", cfg.particle.permittivity);
        w.field("density_kg_m3", cfg.particle.density);
        w.field("mass_amu", mass_amu(cfg.particle));
        w.field("u0_rad_s", cp.dispersive_shift);
        w.field("u0_over_kappa", cp.dispersive_shift / mode.kappa);
        w.field("kappa_s_rad_s", cp.scattering_loss);
        w.field("kappa_s_over_kappa", cp.scattering_loss / mode.kappa);
        if (cfg.drive_power > 0.0) {
            w.field("omega_z_rad_s", cp.trap_frequency);
            w.field("omega_z_over_kappa", cp.trap_frequency / mode.kappa);
        }
        w.field("detuning_kappa", cfg.detuning_kappa);
        w.field("baseline_transmission", setup.baseline());
        w.end_section();
        std::printf("particle: r = %.4g nm, U0/kappa = %.4g, kappa_s/kappa = %.4g, "
                    "mass = %.6g amu\n",
                    cfg.particle.radius * 1e9, cp.dispersive_shift / mode.kappa,
                    cp.scattering_loss / mode.kappa, mass_amu(cfg.particle));
    }

    emit_record(st, "design.txt", w);
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CliState& st, bool scan_mode) {
    const RunConfig& cfg = st.cfg;

    if (scan_mode) {
        const CavityMode mode = derive_mode(cfg.geometry);
        const FrequencyScan scan = synthesize_scan(mode, cfg.scan, cfg.seed);
        const std::string path = out_path(st, "scan.csv");
        write_scan(path, scan,
                   {{"seed", std::to_string(cfg.seed)}, {"config_json", st.config_json}});
        ResultsWriter w;
        record_header(w, "simulate", st);
        w.field("scan_file", "scan.csv");
        w.field("samples", static_cast<std::uint64_t>(scan.position.size()));
        emit_record(st, "simulate.txt", w);
        std::printf("wrote %s (%zu samples)\n", path.c_str(), scan.position.size());
        return 0;
    }

    const ProbeSetup setup = probe_from_config(cfg);
    const std::vector<SimulatedEvent> events = generate_event_batch(
        setup, cfg.sampling, cfg.ranges, cfg.batch_events, cfg.seed, st.threads);

    ResultsWriter w;
    record_header(w, "simulate", st);
    w.field("events", static_cast<std::uint64_t>(events.size()));
    for (std::size_t i = 0; i < events.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "trace_%03zu.csv", i);
        const Trajectory& tr = events[i].truth;
        MetaBlock meta{{"event", std::to_string(i)},
                       {"base_seed", std::to_string(cfg.seed)},
                       {"truth_vx_m_s", detail::num(tr.vx)},
                       {"truth_vz_m_s", detail::num(tr.vz)},
                       {"truth_y0_m", detail::num(tr.y0)},
                       {"truth_z0_m", detail::num(tr.z0)},
                       {"truth_t0_s", detail::num(tr.t0)},
                       {"config_json", st.config_json}};
        write_trace(out_path(st, name), events[i].trace, meta);
        std::printf("wrote %s (vx = %.3f m/s, vz = %.3f m/s)\n", out_path(st, name).c_str(),
                    tr.vx, tr.vz);
    }
    atomic_write(out_path(st, "truth.csv"), format_truth(events, cfg.seed));
    std::printf("wrote %s (%zu events)\n", out_path(st, "truth.csv").c_str(), events.size());
    emit_record(st, "simulate.txt", w);
    return 0;
}

// ---------------------------------------------------------------------------

std::string sniff_format(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("# format: ", 0) != 0)
        throw std::runtime_error("'" + path + "': missing '# format:' header");
    return line.substr(10);
}

int cmd_analyze(const CliState& st, const std::vector<std::string>& paths) {
    const RunConfig& cfg = st.cfg;
    const ProbeSetup setup = probe_from_config(cfg);

    ResultsWriter w;
    record_header(w, "analyze", st);
    std::size_t total_events = 0;

    for (const std::string& path : paths) {
        const std::string fmt = sniff_format(path);
        const std::string base = fs::path(path).filename().string();
        w.section(base);
        if (fmt == scan_format) {
            const ScanFile sf = read_scan(path);
            const CalibrationResult cal =
                calibrate_and_fit_scan(sf.scan, setup.mode.fsr);
            w.field("kind", "calibration");
            w.field("kappa_rad_s", cal.kappa);
            w.field("kappa_over_2pi_hz", cal.kappa / (2.0 * pi));
            w.field("finesse", cal.finesse);
            w.field("scan_scale_per_hz", cal.scan_scale);
            w.field("residual_rms", cal.residual_rms);
            w.field("converged", cal.converged);
            std::printf("%s: kappa/2pi = %.6g MHz, finesse = %.6g\n", base.c_str(),
                        cal.kappa / (2.0 * pi) / 1e6, cal.finesse);
        } else if (fmt == trace_format) {
            const TraceFile tf = read_trace(path);
            const DetectionResult det = detect_transits(tf.trace.transmission,
                                                        cfg.threshold_sigma, cfg.pad_factor);
            w.field("kind", "transit");
            w.field("baseline", det.baseline);
            w.field("noise", det.noise);
            w.field("events", static_cast<std::uint64_t>(det.windows.size()));
            std::printf("%s: %zu event(s)\n", base.c_str(), det.windows.size());
            const double sigma =
                tf.trace.noise_sigma > 0.0 ? tf.trace.noise_sigma : det.noise;
            for (std::size_t e = 0; e < det.windows.size(); ++e) {
                const auto [a, b] = det.windows[e];
                const std::vector<double> tw(tf.trace.time.begin() + a,
                                             tf.trace.time.begin() + b + 1);
                const std::vector<double> Tw(tf.trace.transmission.begin() + a,
                                             tf.trace.transmission.begin() + b + 1);
                const TransitEstimate est = extract_velocities(setup, tw, Tw, sigma);
                w.section("event_" + std::to_string(e));
                w.field("window_start_s", tw.front());
                w.field("window_end_s", tw.back());
                w.field("vx_m_s", est.vx);
                w.field("vx_sigma_m_s", est.vx_sigma);
                w.field("vx_available", est.vx_available);
                if (!est.vx_note.empty()) w.field("vx_note", est.vx_note);
                w.field("vz_m_s", est.vz);
                w.field("vz_sigma_m_s", est.vz_sigma);
                w.field("vz_available", est.vz_available);
                if (!est.vz_note.empty()) w.field("vz_note", est.vz_note);
                w.field("modulated", est.modulated);
                w.field("fringe_maxima", static_cast<std::int64_t>(est.fringe_maxima));
                w.field("shift_amplitude_rad_s", est.shift_amplitude);
                w.field("peak_shift_over_kappa", est.peak_shift_over_kappa);
                w.field("center_time_s", est.center_time);
                w.field("chi2_reduced", est.chi2_reduced);
                w.field("ambiguous_fraction", est.ambiguous_fraction);
                w.end_section();
                ++total_events;
                if (est.vx_available && est.vz_available)
                    std::printf("  event %zu: vx = %.3f +/- %.3f m/s, vz = %.4f +/- %.4f "
                                "m/s, peak shift %.3g kappa\n",
                                e, est.vx, est.vx_sigma, est.vz, est.vz_sigma,
                                est.peak_shift_over_kappa);
                else
                    std::printf("  event %zu: vx %s, vz %s\n", e,
                                est.vx_available ? "ok" : est.vx_note.c_str(),
                                est.vz_available ? "ok" : est.vz_note.c_str());
            }
        } else {
            throw std::runtime_error("'" + path + "': unsupported format '" + fmt + "'");
        }
        w.end_section();
    }

    w.field("total_events", static_cast<std::uint64_t>(total_events));
    emit_record(st, "analysis.txt", w);
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_plan(const CliState& st) {
    const RunConfig& cfg = st.cfg;

    const std::vector<SweepCell> table = sweep_parameter_space(
        cfg.sweep.ratios, cfg.sweep.powers, cfg.sweep.masses_amu, cfg.sweep.lengths,
        cfg.geometry.wavelength, cfg.plan.material, st.threads);
    write_sweep_table(out_path(st, "sweep_table.csv"), table);
    std::printf("wrote %s (%zu rows)\n", out_path(st, "sweep_table.csv").c_str(),
                table.size());

    ResultsWriter w;
    record_header(w, "plan", st);
    w.field("sweep_rows", static_cast<std::uint64_t>(table.size()));
    w.section("min_coolable_mass");
    try {
        const MinMassResult mm =
            min_coolable_mass(cfg.plan.material, cfg.plan.ratio, cfg.plan.power,
                              cfg.geometry.wavelength, cfg.plan.constraints);
        // margin already enters through the radius; do not apply it twice
        const FeasibilityResult fr = required_finesse(
            Particle{mm.radius, cfg.plan.material.permittivity, cfg.plan.material.density},
            mm.design);
        w.field("feasible", true);
        w.field("mass_amu", mm.mass_amu);
        w.field("radius_m", mm.radius);
        w.field("length_m", mm.design.length);
        w.field("mirror_radius_m", mm.design.length / mm.design.ratio);
        w.field("kappa_rad_s", mm.kappa);
        w.field("omega_z_rad_s", mm.omega_z);
        w.field("required_finesse", fr.required_finesse);
        w.field("binding", to_string(fr.binding));
        std::printf("min coolable mass: %.6g amu (r = %.4g nm) at L = %.4g um, "
                    "binding %s\n",
                    mm.mass_amu, mm.radius * 1e9, mm.design.length * 1e6,
                    to_string(fr.binding));
    } catch (const std::domain_error& e) {
        w.field("feasible", false);
        w.field("reason", e.what());
        std::printf("min coolable mass: infeasible (%s)\n", e.what());
    }
    w.end_section();
    emit_record(st, "plan_summary.txt", w);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"open microcavity nanoparticle detection toolkit"};
    app.set_version_flag("--version", version_string);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    unsigned threads = 0;
    bool verbose = false;
    app.add_option("--config", config_path, "JSON configuration file");
    CLI::Option* seed_opt = app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out_dir, "output directory (created if missing)");
    app.add_option("--threads", threads, "worker threads (0 = hardware)");
    app.add_flag("--verbose", verbose, "progress and timing on stderr");

    CLI::App* design = app.add_subcommand("design", "report cavity and coupling numbers");
    CLI::App* simulate = app.add_subcommand("simulate", "synthesize transit traces");
    bool scan_mode = false;
    simulate->add_flag("--scan", scan_mode, "synthesize a calibration scan instead");
    CLI::App* analyze = app.add_subcommand("analyze", "extract events from trace files");
    std::vector<std::string> paths;
    analyze->add_option("paths", paths, "trace or scan files")->required();
    CLI::App* plan = app.add_subcommand("plan", "feasibility sweep and mass minimum");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CliState st;
        st.start = std::chrono::steady_clock::now();
        st.cfg = load_config(config_path);
        if (seed_opt->count() > 0) st.cfg.seed = seed;
        st.config_json = resolved_json(st.cfg).dump();
        st.out_dir = out_dir;
        st.threads = threads;
        st.verbose = verbose;

        std::error_code ec;
        fs::create_directories(st.out_dir, ec);
        if (ec)
            throw std::runtime_error("cannot create output directory '" + st.out_dir +
                                     "': " + ec.message());

        if (app.got_subcommand(design)) return cmd_design(st);
        if (app.got_subcommand(simulate)) return cmd_simulate(st, scan_mode);
        if (app.got_subcommand(analyze)) return cmd_analyze(st, paths);
        if (app.got_subcommand(plan)) return cmd_plan(st);
        return 2;  // unreachable with require_subcommand(1)
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}
