#pragma once

namespace microcav {

inline constexpr double c_light = 299792458.0;     // m/s, exact
inline constexpr double amu_kg = 1.66054e-27;      // kg per atomic mass unit
inline constexpr double pi = 3.141592653589793238462643383279502884;

// Material presets at 1547 nm (config-overridable).
struct Material {
    double permittivity = 1.0;
    double density = 0.0;   // kg/m^3
};

inline constexpr Material silica{2.07, 2200.0};
inline constexpr Material silicon{12.1, 2329.0};

}  // namespace microcav
