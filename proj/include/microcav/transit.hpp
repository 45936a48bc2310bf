#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "microcav/parallel.hpp"
#include "microcav/physics.hpp"
#include "microcav/rng.hpp"

namespace microcav {

/// Probe-side description of one experiment: the cavity mode, the particle's
/// coupling rates, and the fixed laser detuning (angular, negative = red).
struct ProbeSetup {
    CavityMode mode;
    CouplingParams coupling;
    double detuning = 0.0;

    double baseline() const { return lorentzian_transmission(detuning, mode.kappa); }
};

inline ProbeSetup make_probe(const CavityGeometry& geom, const Particle& particle,
                             double detuning_in_kappa, double power = 0.0) {
    ProbeSetup s;
    s.mode = derive_mode(geom);
    s.coupling = coupling_params(particle, s.mode, {0.0, power});
    s.detuning = detuning_in_kappa * s.mode.kappa;
    return s;
}

/// Straight-line flight through the mode: transverse speed vx along x, axial
/// speed vz along the standing wave, closest approach y0 off axis at time t0.
struct Trajectory {
    double vx = 0.0;
    double vz = 0.0;
    double y0 = 0.0;
    double z0 = 0.0;   // axial position at t0, sets the fringe phase
    double t0 = -1.0;  // time of closest approach; <0 means center of record
};

struct SamplingConfig {
    double sample_rate = 100e6;  // Hz
    double duration = 8e-6;      // s
    double snr = 35.0;           // peak contrast over noise sigma; <= 0 disables noise
};

struct TransmissionTrace {
    std::vector<double> time;
    std::vector<double> transmission;
    double sample_rate = 0.0;
    double noise_sigma = 0.0;
    double baseline = 0.0;
};

inline void validate(const Trajectory& tr, const ProbeSetup& setup,
                     const SamplingConfig& s) {
    if (!(s.sample_rate > 0.0))
        throw std::invalid_argument("sample_rate must be positive");
    if (!(s.duration > 0.0)) throw std::invalid_argument("duration must be positive");
    if (s.duration * s.sample_rate < 16)
        throw std::invalid_argument("record too short: need at least 16 samples");
    const double fringe = 2.0 * std::abs(tr.vz) / setup.mode.wavelength;
    if (fringe > 0.0 && s.sample_rate < 10.0 * fringe) {
        std::ostringstream msg;
        msg << "sample_rate " << s.sample_rate << " Hz cannot resolve the axial fringe at "
            << fringe << " Hz; need at least " << 10.0 * fringe << " Hz";
        throw std::invalid_argument(msg.str());
    }
    if (fringe > setup.mode.kappa / (2.0 * pi)) {
        std::ostringstream msg;
        msg << "axial fringe frequency " << fringe
            << " Hz exceeds the cavity bandwidth " << setup.mode.kappa / (2.0 * pi)
            << " Hz; the quasi-static transmission model no longer holds";
        throw std::invalid_argument(msg.str());
    }
}

/// Normalized mode intensity seen by the particle at time t.
inline double transit_intensity(const Trajectory& tr, const ProbeSetup& setup,
                                double t, double t0) {
    const double x = tr.vx * (t - t0);
    const double z = tr.z0 + tr.vz * (t - t0);
    const double cz = std::cos(setup.mode.wavenumber * z);
    const double w0 = setup.mode.waist;
    return cz * cz * std::exp(-2.0 * (x * x + tr.y0 * tr.y0) / (w0 * w0));
}

/// Quasi-static transmission of a single transit, plus optional white noise.
///
/// The particle shifts the resonance by U0 I(t) and adds scattering loss
/// kappa_s I(t); the detector sees the instantaneous steady-state Lorentzian.
/// Noise sigma is (1 - baseline)/snr: the full on-resonance contrast divided
/// by the requested signal-to-noise ratio.
inline TransmissionTrace simulate_transit(const ProbeSetup& setup, const Trajectory& tr,
                                          const SamplingConfig& s, std::uint64_t seed) {
    validate(tr, setup, s);
    const std::size_t n = static_cast<std::size_t>(std::llround(s.duration * s.sample_rate));
    const double t0 = tr.t0 >= 0.0 ? tr.t0 : 0.5 * s.duration;

    TransmissionTrace out;
    out.sample_rate = s.sample_rate;
    out.baseline = setup.baseline();
    out.noise_sigma = s.snr > 0.0 ? (1.0 - out.baseline) / s.snr : 0.0;
    out.time.resize(n);
    out.transmission.resize(n);

    const double u0 = setup.coupling.dispersive_shift;
    const double ks = setup.coupling.scattering_loss;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / s.sample_rate;
        const double I = transit_intensity(tr, setup, t, t0);
        double T = lorentzian_transmission(setup.detuning + u0 * I, setup.mode.kappa,
                                           ks * I);
        if (out.noise_sigma > 0.0) T += out.noise_sigma * rng.gaussian();
        out.time[i] = t;
        out.transmission[i] = T;
    }
    return out;
}

/// Ranges for randomized event batches.
struct EventRanges {
    double vx_min = 5.0, vx_max = 30.0;    // m/s
    double vz_min = 0.5, vz_max = 5.0;     // m/s
    double y0_max_waists = 0.5;            // impact parameter cap, units of w0
};

struct SimulatedEvent {
    Trajectory truth;
    TransmissionTrace trace;
};

/// Batch of independent random transits.
///
/// Each event draws its trajectory and noise from a seed derived from
/// (base_seed, index), so the batch content is identical for any thread
/// count and any subset ordering.
inline std::vector<SimulatedEvent> generate_event_batch(const ProbeSetup& setup,
                                                        const SamplingConfig& s,
                                                        const EventRanges& ranges,
                                                        std::size_t count,
                                                        std::uint64_t base_seed,
                                                        unsigned threads = 1) {
    std::vector<SimulatedEvent> events(count);
    parallel_for(count, threads, [&](std::size_t i) {
        Rng draw(derive_seed(base_seed, 2 * i));
        Trajectory tr;
        tr.vx = draw.uniform(ranges.vx_min, ranges.vx_max);
        tr.vz = draw.uniform(ranges.vz_min, ranges.vz_max);
        tr.y0 = draw.uniform(0.0, ranges.y0_max_waists * setup.mode.waist);
        tr.z0 = draw.uniform(0.0, setup.mode.wavelength / 2.0);
        events[i].truth = tr;
        events[i].trace = simulate_transit(setup, tr, s, derive_seed(base_seed, 2 * i + 1));
    });
    return events;
}

/// Sideband-calibration scan: the probe carrier plus two phase-modulation
/// sidebands swept across the resonance in uncalibrated scan units.
struct FrequencyScan {
    std::vector<double> position;      // scan coordinate, arbitrary units
    std::vector<double> transmission;
    double sideband_hz = 0.0;          // known modulation frequency
};

struct ScanShape {
    double sideband_hz = 100e6;
    double span_hz = 350e6;          // half width of the sweep
    double sideband_depth = 0.35;    // sideband amplitude relative to carrier
    double scale = 7.3e-4;           // scan units per Hz (what calibration recovers)
    double amplitude = 1.0;          // overall detector gain
    double offset = 0.0;             // detector offset
    double noise = 0.01;
    std::size_t samples = 4000;
};

inline FrequencyScan synthesize_scan(const CavityMode& mode, const ScanShape& shape,
                                     std::uint64_t seed) {
    FrequencyScan scan;
    scan.sideband_hz = shape.sideband_hz;
    scan.position.resize(shape.samples);
    scan.transmission.resize(shape.samples);
    Rng rng(seed);
    const double kap = mode.kappa;
    for (std::size_t i = 0; i < shape.samples; ++i) {
        const double x = -shape.span_hz * shape.scale +
                         2.0 * shape.span_hz * shape.scale * static_cast<double>(i) /
                             static_cast<double>(shape.samples - 1);
        const double nu = x / shape.scale;
        double T = 0.0;
        const double centers[3] = {0.0, shape.sideband_hz, -shape.sideband_hz};
        const double amps[3] = {1.0, shape.sideband_depth, shape.sideband_depth};
        for (int j = 0; j < 3; ++j) {
            const double d = 2.0 * pi * (nu - centers[j]);
            T += amps[j] * kap * kap / (kap * kap + d * d);
        }
        scan.position[i] = x;
        scan.transmission[i] =
            shape.offset + shape.amplitude * T +
            (shape.noise > 0.0 ? shape.noise * rng.gaussian() : 0.0);
    }
    return scan;
}

}  // namespace microcav
