#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "microcav/planner.hpp"

using namespace microcav;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace {

DesignPoint optimized_design() { return {30e-6, 1.5, 300.0, 1547e-9, silicon}; }

Particle si12() { return {12e-9, silicon.permittivity, silicon.density}; }

DesignConstraints default_constraints() { return {2e5, 20e-6, 5e-6, 500e-6, 1.0, 64}; }

// dense-grid reference for the mass minimum
double brute_force_mass(const Material& mat, double q, double power, double wavelength,
                        const DesignConstraints& cons, int points = 2000) {
    const double chi = polarizability_factor(mat.permittivity);
    const double lo = std::max(cons.length_min, q * cons.min_mirror_radius);
    const Particle probe{1e-9, mat.permittivity, mat.density};
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
        const double L = std::exp(std::log(lo) + (std::log(cons.length_max) - std::log(lo)) *
                                                     static_cast<double>(i) / (points - 1));
        const CavityMode mode = derive_mode({L, L / q, wavelength, 2.0});
        const double kappa = c_light * pi / (2.0 * cons.max_finesse * L);
        const double wz = trap_frequency(probe, mode, {0.0, power});
        if (wz < cons.safety_margin * kappa) continue;
        const double r3 = cons.safety_margin * kappa * mode.mode_volume /
                          (2.0 * pi * mode.laser_omega * chi);
        best = std::min(best, mass_amu(Particle{std::cbrt(r3), mat.permittivity,
                                                mat.density}));
    }
    return best;
}

}  // namespace

TEST_CASE("required finesse at the optimized design point") {
    const FeasibilityResult f = required_finesse(si12(), optimized_design());
    CHECK_THAT(f.finesse_strong_coupling, WithinRel(1.51552744e+05, 1e-8));
    CHECK_THAT(f.finesse_resolved_sideband, WithinRel(1.57006328e+05, 1e-8));
    CHECK(f.binding == BindingCondition::resolved_sideband);
    CHECK(f.required_finesse == f.finesse_resolved_sideband);
    CHECK(f.required_finesse < 2e5);  // within reach of the mirror coating

    // at the required finesse the binding ratio is exactly one, the other at
    // least one
    CHECK_THAT(f.omega_z_over_kappa, WithinRel(1.0, 1e-9));
    CHECK(f.u0_over_kappa >= 1.0);
    CHECK_THAT(f.u0_over_kappa,
               WithinRel(f.required_finesse / f.finesse_strong_coupling, 1e-12));
    CHECK(std::string(to_string(f.binding)) == "resolved_sideband");
}

TEST_CASE("required finesse scales as expected") {
    const DesignPoint d = optimized_design();
    const FeasibilityResult base = required_finesse(si12(), d);

    // doubling the radius cuts the strong-coupling finesse eightfold and
    // leaves the sideband threshold untouched
    Particle big = si12();
    big.radius *= 2.0;
    const FeasibilityResult f2 = required_finesse(big, d);
    CHECK_THAT(f2.finesse_strong_coupling,
               WithinRel(base.finesse_strong_coupling / 8.0, 1e-12));
    CHECK_THAT(f2.finesse_resolved_sideband,
               WithinRel(base.finesse_resolved_sideband, 1e-12));

    // quadrupling the power halves the sideband threshold
    DesignPoint hot = d;
    hot.power *= 4.0;
    const FeasibilityResult f4 = required_finesse(si12(), hot);
    CHECK_THAT(f4.finesse_resolved_sideband,
               WithinRel(base.finesse_resolved_sideband / 2.0, 1e-12));
    CHECK_THAT(f4.finesse_strong_coupling,
               WithinRel(base.finesse_strong_coupling, 1e-12));

    // a safety margin scales both thresholds linearly
    const FeasibilityResult fm = required_finesse(si12(), d, 1.5);
    CHECK_THAT(fm.finesse_strong_coupling,
               WithinRel(1.5 * base.finesse_strong_coupling, 1e-12));
    CHECK_THAT(fm.finesse_resolved_sideband,
               WithinRel(1.5 * base.finesse_resolved_sideband, 1e-12));
}

TEST_CASE("required finesse rejects hopeless or invalid designs") {
    DesignPoint d = optimized_design();

    Particle vacuum = si12();
    vacuum.permittivity = 1.0;
    CHECK_THROWS_WITH(required_finesse(vacuum, d),
                      ContainsSubstring("zero dispersive shift"));

    DesignPoint cold = d;
    cold.power = 0.0;
    CHECK_THROWS_WITH(required_finesse(si12(), cold),
                      ContainsSubstring("zero trap frequency"));

    DesignPoint unstable = d;
    unstable.ratio = 2.0;
    CHECK_THROWS_WITH(required_finesse(si12(), unstable),
                      ContainsSubstring("stability"));
    unstable.ratio = -0.5;
    CHECK_THROWS(required_finesse(si12(), unstable));

    CHECK_THROWS_WITH(required_finesse(si12(), d, 0.5),
                      ContainsSubstring("safety margin"));
}

TEST_CASE("minimum coolable mass at the reference constraints") {
    const MinMassResult r =
        min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, default_constraints());
    CHECK_THAT(r.mass_amu, WithinRel(7.69283296e+06, 1e-6));
    CHECK_THAT(r.radius, WithinRel(1.09402e-08, 1e-5));
    // the optimum sits at the mirror-radius boundary: L = q * R_min
    CHECK_THAT(r.design.length, WithinRel(30e-6, 1e-9));
    CHECK(r.mass_amu < 1e7);
    CHECK(r.radius < 12e-9);

    CHECK_THAT(r.kappa, WithinRel(c_light * pi / (2.0 * 2e5 * 30e-6), 1e-12));
    CHECK_THAT(r.omega_z, WithinRel(9.9977475774e+07, 1e-8));
    // the solution radius saturates the strong-coupling condition
    const CavityMode mode = derive_mode({30e-6, 20e-6, 1547e-9, 2.0});
    const Particle sol{r.radius, silicon.permittivity, silicon.density};
    CHECK_THAT(dispersive_shift(sol, mode) / r.kappa, WithinRel(1.0, 1e-9));
}

TEST_CASE("minimum mass search agrees with a dense grid") {
    struct Config {
        Material mat;
        double q, power;
    };
    const Config configs[] = {{silicon, 1.5, 300.0},
                              {silica, 1.0, 150.0},
                              {silicon, 0.8, 500.0},
                              {silicon, 1.9, 50.0}};
    const DesignConstraints cons = default_constraints();
    for (const auto& c : configs) {
        const double ref = brute_force_mass(c.mat, c.q, c.power, 1547e-9, cons);
        const MinMassResult r = min_coolable_mass(c.mat, c.q, c.power, 1547e-9, cons);
        CHECK(std::abs(r.mass_amu - ref) / ref < 2e-3);
    }
}

TEST_CASE("minimum mass responds to the constraints") {
    const DesignConstraints cons = default_constraints();
    const MinMassResult base = min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, cons);

    // with the optimum pinned at the boundary, the margin scales the mass
    // linearly (r^3 grows with margin * kappa)
    DesignConstraints tight = cons;
    tight.safety_margin = 1.2;
    const MinMassResult m =
        min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, tight);
    CHECK_THAT(m.mass_amu, WithinRel(1.2 * base.mass_amu, 1e-9));

    // relaxing the mirror bound can only help
    DesignConstraints loose = cons;
    loose.min_mirror_radius = 5e-6;
    const MinMassResult better =
        min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, loose);
    CHECK(better.mass_amu <= base.mass_amu);

    // weaker mirrors raise it
    DesignConstraints dull = cons;
    dull.max_finesse = 1e5;
    const MinMassResult worse = min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, dull);
    CHECK(worse.mass_amu > base.mass_amu);
}

TEST_CASE("minimum mass search reports infeasibility honestly") {
    const DesignConstraints cons = default_constraints();

    // negligible power: the sideband condition fails everywhere
    CHECK_THROWS_WITH(min_coolable_mass(silicon, 1.5, 1e-6, 1547e-9, cons),
                      ContainsSubstring("resolved-sideband"));
    try {
        min_coolable_mass(silicon, 1.5, 1e-6, 1547e-9, cons);
        FAIL("expected infeasibility");
    } catch (const std::domain_error& e) {
        CHECK_THAT(e.what(), ContainsSubstring("omega_z/kappa"));
    }

    // vacuum particle cannot couple at all
    CHECK_THROWS_WITH(min_coolable_mass({1.0, 2000.0}, 1.5, 300.0, 1547e-9, cons),
                      ContainsSubstring("zero polarizability"));

    // mirror bound pushes the length window past its upper end
    DesignConstraints cramped = cons;
    cramped.min_mirror_radius = 400e-6;
    CHECK_THROWS_WITH(min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, cramped),
                      ContainsSubstring("empty length range"));

    DesignConstraints bad = cons;
    bad.max_finesse = 0.0;
    CHECK_THROWS(min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, bad));
    bad = cons;
    bad.grid_points = 2;
    CHECK_THROWS(min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, bad));
    bad = cons;
    bad.safety_margin = 0.9;
    CHECK_THROWS(min_coolable_mass(silicon, 1.5, 300.0, 1547e-9, bad));
}

TEST_CASE("sweep covers the grid in lexicographic order with pure cells") {
    const std::vector<double> ratios{0.5, 1.5};
    const std::vector<double> powers{100.0, 300.0};
    const std::vector<double> masses{1e8, 1e9, 1e10};
    const std::vector<double> lengths{50e-6, 130e-6, 300e-6, 500e-6};

    const auto table =
        sweep_parameter_space(ratios, powers, masses, lengths, 1547e-9, silicon, 4);
    REQUIRE(table.size() == 48);

    std::size_t idx = 0;
    for (double q : ratios)
        for (double P : powers)
            for (double mass : masses)
                for (double L : lengths) {
                    const SweepCell& cell = table[idx++];
                    CHECK(cell.ratio == q);
                    CHECK(cell.power == P);
                    CHECK(cell.mass_amu == mass);
                    CHECK(cell.length == L);
                    CHECK_THAT(cell.mirror_radius, WithinRel(L / q, 1e-12));

                    // recompute the cell from scratch: no cross-cell state
                    const double radius = std::cbrt(
                        mass * amu_kg / (4.0 / 3.0 * pi * silicon.density));
                    const Particle p{radius, silicon.permittivity, silicon.density};
                    const FeasibilityResult f =
                        required_finesse(p, {L, q, P, 1547e-9, silicon});
                    CHECK(cell.finesse_strong_coupling == f.finesse_strong_coupling);
                    CHECK(cell.finesse_resolved_sideband == f.finesse_resolved_sideband);
                    CHECK(cell.required_finesse == f.required_finesse);
                    CHECK(cell.binding == f.binding);
                    const CavityMode mode = derive_mode({L, L / q, 1547e-9, 2.0});
                    CHECK(cell.waist == mode.waist);
                    CHECK(cell.mode_volume == mode.mode_volume);
                }

    // heavier particles never need more finesse; the plateau is the
    // mass-independent sideband threshold
    for (std::size_t iq = 0; iq < ratios.size(); ++iq)
        for (std::size_t ip = 0; ip < powers.size(); ++ip)
            for (std::size_t il = 0; il < lengths.size(); ++il) {
                double prev = std::numeric_limits<double>::infinity();
                for (std::size_t im = 0; im < masses.size(); ++im) {
                    const SweepCell& cell =
                        table[((iq * powers.size() + ip) * masses.size() + im) *
                                  lengths.size() +
                              il];
                    CHECK(cell.required_finesse <= prev);
                    prev = cell.required_finesse;
                    if (im + 1 == masses.size()) {
                        CHECK(cell.binding == BindingCondition::resolved_sideband);
                        CHECK(cell.required_finesse == cell.finesse_resolved_sideband);
                    }
                }
            }
}

TEST_CASE("sweep is deterministic for any thread count") {
    const std::vector<double> ratios{0.7, 1.3};
    const std::vector<double> powers{200.0};
    const std::vector<double> masses{1e7, 1e9};
    const std::vector<double> lengths{40e-6, 90e-6, 200e-6};
    const auto a = sweep_parameter_space(ratios, powers, masses, lengths, 1547e-9,
                                         silica, 1);
    const auto b = sweep_parameter_space(ratios, powers, masses, lengths, 1547e-9,
                                         silica, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].required_finesse == b[i].required_finesse);
        CHECK(a[i].waist == b[i].waist);
        CHECK(a[i].binding == b[i].binding);
    }

    CHECK_THROWS_WITH(sweep_parameter_space({}, powers, masses, lengths, 1547e-9, silica),
                      ContainsSubstring("non-empty"));
}
