#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "microcav/constants.hpp"

namespace microcav {

struct CavityGeometry {
    double length = 0.0;         // m
    double mirror_radius = 0.0;  // m, both mirrors identical
    double wavelength = 0.0;     // m
    double finesse = 0.0;
};

// Derived mode quantities. kappa is the angular-frequency HWHM, so the
// frequency-domain FWHM is kappa/pi Hz and F = fsr/(kappa/pi).
struct CavityMode {
    double fsr = 0.0;          // Hz
    double waist = 0.0;        // m
    double mode_volume = 0.0;  // m^3
    double kappa = 0.0;        // rad/s
    double wavenumber = 0.0;   // rad/m
    double laser_omega = 0.0;  // rad/s
    double wavelength = 0.0;   // m
    double length = 0.0;       // m
};

struct Particle {
    double radius = 0.0;        // m
    double permittivity = 1.0;  // relative, real
    double density = 0.0;       // kg/m^3
};

struct DriveSettings {
    double detuning = 0.0;  // rad/s, laser minus empty cavity; negative = red
    double power = 0.0;     // W, one-way circulating
};

struct CouplingParams {
    double dispersive_shift = 0.0;  // U0, rad/s
    double trap_frequency = 0.0;    // omega_z, rad/s
    double scattering_loss = 0.0;   // kappa_s, rad/s, antinode value
};

inline void validate(const CavityGeometry& g) {
    if (!(g.length > 0.0))
        throw std::invalid_argument("cavity length must be positive, got L = " +
                                    std::to_string(g.length) + " m");
    if (!(g.mirror_radius > 0.0))
        throw std::invalid_argument("mirror radius must be positive, got R = " +
                                    std::to_string(g.mirror_radius) + " m");
    if (!(g.length < 2.0 * g.mirror_radius))
        throw std::invalid_argument(
            "cavity unstable: requires L < 2R, got L = " + std::to_string(g.length) +
            " m with 2R = " + std::to_string(2.0 * g.mirror_radius) + " m");
    if (!(g.wavelength > 0.0))
        throw std::invalid_argument("wavelength must be positive");
    if (!(g.finesse > 1.0))
        throw std::invalid_argument("finesse must exceed 1, got " +
                                    std::to_string(g.finesse));
}

inline void validate(const Particle& p) {
    if (!(p.radius > 0.0)) throw std::invalid_argument("particle radius must be positive");
    if (!(p.permittivity >= 1.0))
        throw std::invalid_argument("relative permittivity must be >= 1, got " +
                                    std::to_string(p.permittivity));
    if (!(p.density > 0.0)) throw std::invalid_argument("particle density must be positive");
}

[[nodiscard]] inline CavityMode derive_mode(const CavityGeometry& g) {
    validate(g);
    CavityMode m;
    m.length = g.length;
    m.wavelength = g.wavelength;
    m.waist = std::sqrt((g.wavelength / (2.0 * pi)) *
                        std::sqrt(g.length * (2.0 * g.mirror_radius - g.length)));
    m.fsr = c_light / (2.0 * g.length);
    m.kappa = c_light * pi / (2.0 * g.finesse * g.length);
    m.mode_volume = (pi / 4.0) * m.waist * m.waist * g.length;
    m.wavenumber = 2.0 * pi / g.wavelength;
    m.laser_omega = c_light * m.wavenumber;
    return m;
}

// T = kappa^2 / ((kappa + kappa_extra)^2 + delta_eff^2), 1 on empty resonance.
[[nodiscard]] inline double lorentzian_transmission(double delta_eff, double kappa,
                                                    double kappa_extra = 0.0) {
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    if (kappa_extra < 0.0) throw std::invalid_argument("kappa_extra must be >= 0");
    const double kt = kappa + kappa_extra;
    return kappa * kappa / (kt * kt + delta_eff * delta_eff);
}

// Clausius-Mossotti factor chi = (eps - 1)/(eps + 2).
[[nodiscard]] inline double polarizability_factor(double permittivity) {
    if (permittivity < 1.0)
        throw std::invalid_argument("relative permittivity must be >= 1, got " +
                                    std::to_string(permittivity));
    return (permittivity - 1.0) / (permittivity + 2.0);
}

// U0 = 2 pi omega_L r^3 chi / V_m
[[nodiscard]] inline double dispersive_shift(const Particle& p, const CavityMode& m) {
    const double chi = polarizability_factor(p.permittivity);
    const double r3 = p.radius * p.radius * p.radius;
    return 2.0 * pi * m.laser_omega * r3 * chi / m.mode_volume;
}

// omega_z = sqrt(24 k^2 P_cav chi / (pi w0^2 rho c))
[[nodiscard]] inline double trap_frequency(const Particle& p, const CavityMode& m,
                                           const DriveSettings& d) {
    if (d.power < 0.0) throw std::invalid_argument("intracavity power must be >= 0");
    const double chi = polarizability_factor(p.permittivity);
    return std::sqrt(24.0 * m.wavenumber * m.wavenumber * d.power * chi /
                     (pi * m.waist * m.waist * p.density * c_light));
}

// kappa_s = c sigma_s / (2 V_m),  sigma_s = (8 pi / 3) k^4 (r^3 chi)^2
[[nodiscard]] inline double scattering_loss_rate(const Particle& p, const CavityMode& m) {
    const double chi = polarizability_factor(p.permittivity);
    const double r3chi = p.radius * p.radius * p.radius * chi;
    const double k4 = std::pow(m.wavenumber, 4);
    const double sigma_s = (8.0 * pi / 3.0) * k4 * r3chi * r3chi;
    return c_light * sigma_s / (2.0 * m.mode_volume);
}

[[nodiscard]] inline CouplingParams coupling_params(const Particle& p, const CavityMode& m,
                                                    const DriveSettings& d) {
    validate(p);
    return {dispersive_shift(p, m), trap_frequency(p, m, d), scattering_loss_rate(p, m)};
}

// |f(x,y,z)|^2 = cos^2(k z) exp(-2 (x^2+y^2)/w0^2); waist constant along the axis.
[[nodiscard]] inline double mode_intensity(double x, double y, double z,
                                           const CavityMode& m) {
    const double cz = std::cos(m.wavenumber * z);
    const double rr = (x * x + y * y) / (m.waist * m.waist);
    return cz * cz * std::exp(-2.0 * rr);
}

[[nodiscard]] inline double mass_kg(const Particle& p) {
    return (4.0 / 3.0) * pi * p.radius * p.radius * p.radius * p.density;
}

[[nodiscard]] inline double mass_amu(const Particle& p) { return mass_kg(p) / amu_kg; }

// Exact monotonicity condition for the transmission to drop below the empty
// baseline during a transit: (U0^2 + kappa_s^2) I > 2 (|Delta| U0 - kappa kappa_s).
// Reduces to U0 I > 2 |Delta| when kappa_s = 0 (then the trace never dips for
// shifts bounded by 2|Delta|).
[[nodiscard]] inline bool dips_below_baseline(double u0, double kappa_s, double kappa,
                                              double detuning, double intensity) {
    return (u0 * u0 + kappa_s * kappa_s) * intensity >
           2.0 * (std::abs(detuning) * u0 - kappa * kappa_s);
}

}  // namespace microcav
