#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "microcav/constants.hpp"
#include "microcav/parallel.hpp"
#include "microcav/physics.hpp"

namespace microcav {

// ---------------------------------------------------------------------------
// design feasibility: how good must the cavity be to cool a given particle?
// ---------------------------------------------------------------------------
//
// Two thresholds decide feasibility. Strong coupling needs the per-particle
// dispersive shift to reach the linewidth (U0 >= kappa); sideband cooling
// needs the axial trap frequency to resolve it (omega_z >= kappa). Neither
// U0 nor omega_z depends on finesse, while kappa = c*pi/(2*F*L), so each
// threshold converts to a minimum finesse at fixed geometry.

/// Cavity design parameterized by the length-to-mirror-radius ratio q = L/R.
/// Stability (L < 2R) is exactly q < 2.
struct DesignPoint {
    double length = 0.0;        // mirror separation L [m]
    double ratio = 0.0;         // q = L / R
    double power = 0.0;         // intracavity power [W]
    double wavelength = 0.0;    // probe wavelength [m]
    Material material;          // particle species for mass-based searches
};

inline void validate(const DesignPoint& d) {
    if (!(d.length > 0.0)) throw std::invalid_argument("design length must be > 0");
    if (!(d.ratio > 0.0 && d.ratio < 2.0))
        throw std::invalid_argument("design ratio q = L/R must lie in (0, 2) for stability");
    if (!(d.wavelength > 0.0)) throw std::invalid_argument("design wavelength must be > 0");
    if (!(d.power >= 0.0)) throw std::invalid_argument("design power must be >= 0");
    if (!(d.material.permittivity >= 1.0))
        throw std::invalid_argument("material permittivity must be >= 1");
    if (!(d.material.density > 0.0)) throw std::invalid_argument("material density must be > 0");
}

/// Search bounds for mass minimization.
struct DesignConstraints {
    double max_finesse = 0.0;          // best finesse the mirrors can reach
    double min_mirror_radius = 0.0;    // fabrication bound on R [m]
    double length_min = 5e-6;          // L search range [m]
    double length_max = 500e-6;
    double safety_margin = 1.0;        // require U0, omega_z >= margin * kappa
    int grid_points = 64;              // log-spaced L grid before refinement
};

inline void validate(const DesignConstraints& c) {
    if (!(c.max_finesse > 0.0)) throw std::invalid_argument("max finesse must be > 0");
    if (!(c.min_mirror_radius > 0.0))
        throw std::invalid_argument("min mirror radius must be > 0");
    if (!(c.length_min > 0.0 && c.length_max > c.length_min))
        throw std::invalid_argument("length search range must be positive and ordered");
    if (!(c.safety_margin >= 1.0)) throw std::invalid_argument("safety margin must be >= 1");
    if (c.grid_points < 4) throw std::invalid_argument("need at least 4 grid points");
}

enum class BindingCondition { strong_coupling, resolved_sideband };

inline const char* to_string(BindingCondition b) {
    return b == BindingCondition::strong_coupling ? "strong_coupling" : "resolved_sideband";
}

/// Minimum finesse verdict for one (particle, design) pair.
struct FeasibilityResult {
    double required_finesse = 0.0;
    BindingCondition binding = BindingCondition::strong_coupling;
    double finesse_strong_coupling = 0.0;    // F_A: kappa(F) = U0
    double finesse_resolved_sideband = 0.0;  // F_B: kappa(F) = omega_z
    double u0_over_kappa = 0.0;              // ratios evaluated at required_finesse
    double omega_z_over_kappa = 0.0;
    double optimal_length = 0.0;
};

namespace detail {

inline CavityMode design_mode(const DesignPoint& d) {
    // finesse placeholder (must pass validation): U0 and omega_z never read kappa
    const CavityGeometry geom{d.length, d.length / d.ratio, d.wavelength, 2.0};
    return derive_mode(geom);
}

}  // namespace detail

/// Minimum finesse so that both thresholds hold for this particle, with the
/// binding (larger) one identified. Throws when no finite finesse works.
inline FeasibilityResult required_finesse(const Particle& p, const DesignPoint& d,
                                          double safety_margin = 1.0) {
    validate(p);
    validate(d);
    if (!(safety_margin >= 1.0)) throw std::invalid_argument("safety margin must be >= 1");
    const CavityMode mode = detail::design_mode(d);
    const double u0 = dispersive_shift(p, mode);
    const double wz = trap_frequency(p, mode, DriveSettings{0.0, d.power});
    if (!(u0 > 0.0))
        throw std::domain_error(
            "infeasible: strong-coupling condition cannot be met (zero dispersive shift)");
    if (!(wz > 0.0))
        throw std::domain_error(
            "infeasible: resolved-sideband condition cannot be met (zero trap frequency)");
    FeasibilityResult out;
    out.finesse_strong_coupling = safety_margin * c_light * pi / (2.0 * d.length * u0);
    out.finesse_resolved_sideband = safety_margin * c_light * pi / (2.0 * d.length * wz);
    out.binding = out.finesse_strong_coupling >= out.finesse_resolved_sideband
                      ? BindingCondition::strong_coupling
                      : BindingCondition::resolved_sideband;
    out.required_finesse =
        std::max(out.finesse_strong_coupling, out.finesse_resolved_sideband);
    const double kappa = c_light * pi / (2.0 * out.required_finesse * d.length);
    out.u0_over_kappa = u0 / kappa;
    out.omega_z_over_kappa = wz / kappa;
    out.optimal_length = d.length;
    return out;
}

/// Lightest coolable particle and the design achieving it.
struct MinMassResult {
    double mass_amu = 0.0;
    double radius = 0.0;    // [m]
    DesignPoint design;     // length set to the optimal L
    double kappa = 0.0;     // linewidth at max finesse and the optimal L
    double omega_z = 0.0;
};

/// Smallest coolable mass at the constraint edge. At each length the sideband
/// condition fixes feasibility outright (omega_z is radius-independent), and
/// the strong-coupling condition then gives the smallest radius via
/// r^3 = kappa * V_m / (2*pi*omega_L*chi). A log grid over L is refined by
/// golden-section search around the best cell until the mass is converged to
/// better than 0.1%.
inline MinMassResult min_coolable_mass(const Material& material, double q, double power,
                                       double wavelength, const DesignConstraints& cons) {
    validate(cons);
    DesignPoint base{cons.length_min, q, power, wavelength, material};
    validate(base);  // q, wavelength, material checks

    const double chi = polarizability_factor(material.permittivity);
    if (!(chi > 0.0))
        throw std::domain_error(
            "infeasible: strong-coupling condition cannot be met (zero polarizability)");

    const double lo = std::max(cons.length_min, q * cons.min_mirror_radius);
    const double hi = cons.length_max;
    if (!(hi > lo))
        throw std::domain_error("empty length range after applying the mirror-radius bound");

    // mass at one length, +inf when the sideband condition fails there
    const Particle probe{1e-9, material.permittivity, material.density};  // radius unused
    double best_ratio = 0.0;  // closest omega_z/kappa seen, for the error message
    auto mass_at = [&](double L) {
        DesignPoint d = base;
        d.length = L;
        const CavityMode mode = detail::design_mode(d);
        const double kappa = c_light * pi / (2.0 * cons.max_finesse * L);
        const double wz = trap_frequency(probe, mode, DriveSettings{0.0, power});
        best_ratio = std::max(best_ratio, wz / (cons.safety_margin * kappa));
        if (!(wz >= cons.safety_margin * kappa))
            return std::numeric_limits<double>::infinity();
        const double r3 = cons.safety_margin * kappa * mode.mode_volume /
                          (2.0 * pi * mode.laser_omega * chi);
        return mass_amu(Particle{std::cbrt(r3), material.permittivity, material.density});
    };

    const int n = cons.grid_points;
    std::vector<double> grid(static_cast<std::size_t>(n));
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < n; ++i)
        grid[static_cast<std::size_t>(i)] =
            std::exp(llo + (lhi - llo) * static_cast<double>(i) / (n - 1));
    grid.front() = lo;
    grid.back() = hi;

    int best = -1;
    double best_mass = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double m = mass_at(grid[static_cast<std::size_t>(i)]);
        if (m < best_mass) {
            best_mass = m;
            best = i;
        }
    }
    if (best < 0)
        throw std::domain_error(
            "infeasible: resolved-sideband condition unmet over the whole length range "
            "(best omega_z/kappa = " +
            std::to_string(best_ratio) + ")");

    // refine inside the bracket around the best cell
    double a = grid[static_cast<std::size_t>(std::max(best - 1, 0))];
    double b = grid[static_cast<std::size_t>(std::min(best + 1, n - 1))];
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = mass_at(x1), f2 = mass_at(x2);
    for (int it = 0; it < 200; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = mass_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = mass_at(x2);
        }
        const double m_lo = std::min(f1, f2), m_hi = std::max(f1, f2);
        if (std::isfinite(m_hi) && m_hi - m_lo < 1e-3 * m_lo) break;
    }
    // admit the bracket ends so a boundary optimum is hit exactly
    double best_L = grid[static_cast<std::size_t>(best)];
    best_mass = mass_at(best_L);
    for (double cand : {a, b, x1, x2}) {
        const double m = mass_at(cand);
        if (m < best_mass) {
            best_mass = m;
            best_L = cand;
        }
    }

    MinMassResult out;
    out.mass_amu = best_mass;
    out.radius = std::cbrt(best_mass * amu_kg / (4.0 / 3.0 * pi * material.density));
    out.design = base;
    out.design.length = best_L;
    out.kappa = c_light * pi / (2.0 * cons.max_finesse * best_L);
    out.omega_z =
        trap_frequency(probe, detail::design_mode(out.design), DriveSettings{0.0, power});
    return out;
}

/// One row of the feasibility table.
struct SweepCell {
    double ratio = 0.0;
    double power = 0.0;
    double mass_amu = 0.0;
    double length = 0.0;
    double mirror_radius = 0.0;
    double waist = 0.0;
    double mode_volume = 0.0;
    double finesse_strong_coupling = 0.0;
    double finesse_resolved_sideband = 0.0;
    double required_finesse = 0.0;
    BindingCondition binding = BindingCondition::strong_coupling;
};

/// Required finesse over the full (q, power, mass, length) grid, one row per
/// cell in lexicographic grid order. Cells are pure and evaluated in
/// parallel; ordering is by index, not completion.
inline std::vector<SweepCell> sweep_parameter_space(
    const std::vector<double>& ratios, const std::vector<double>& powers,
    const std::vector<double>& masses_amu, const std::vector<double>& lengths,
    double wavelength, const Material& material, unsigned threads = 0) {
    if (ratios.empty() || powers.empty() || masses_amu.empty() || lengths.empty())
        throw std::invalid_argument("sweep grids must be non-empty");
    const std::size_t nq = ratios.size(), np = powers.size(), nm = masses_amu.size(),
                      nl = lengths.size();
    std::vector<SweepCell> table(nq * np * nm * nl);
    parallel_for(table.size(), threads, [&](std::size_t idx) {
        std::size_t rem = idx;
        const std::size_t il = rem % nl;
        rem /= nl;
        const std::size_t im = rem % nm;
        rem /= nm;
        const std::size_t ip = rem % np;
        const std::size_t iq = rem / np;

        const double mass = masses_amu[im];
        const double radius =
            std::cbrt(mass * amu_kg / (4.0 / 3.0 * pi * material.density));
        const Particle p{radius, material.permittivity, material.density};
        const DesignPoint d{lengths[il], ratios[iq], powers[ip], wavelength, material};
        const FeasibilityResult f = required_finesse(p, d);
        const CavityMode mode = detail::design_mode(d);

        SweepCell& cell = table[idx];
        cell.ratio = d.ratio;
        cell.power = d.power;
        cell.mass_amu = mass;
        cell.length = d.length;
        cell.mirror_radius = d.length / d.ratio;
        cell.waist = mode.waist;
        cell.mode_volume = mode.mode_volume;
        cell.finesse_strong_coupling = f.finesse_strong_coupling;
        cell.finesse_resolved_sideband = f.finesse_resolved_sideband;
        cell.required_finesse = f.required_finesse;
        cell.binding = f.binding;
    });
    return table;
}

}  // namespace microcav
