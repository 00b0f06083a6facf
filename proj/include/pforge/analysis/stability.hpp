#pragma once

#include <optional>
#include <string>

#include "pforge/errors.hpp"

namespace pforge::analysis {

enum class StabilityClass { Stable, Metastable, Unstable };

std::string to_string(StabilityClass c);
std::optional<StabilityClass> stability_from_string(const std::string& s);

/// Metastability window on the energy above hull, eV/atom.
inline constexpr double kHullMetastableThreshold = 0.05;
/// |E_hull| below this counts as exactly on the hull.
inline constexpr double kHullZeroTolerance = 1e-9;

struct StabilityLabel {
    double formation_energy = 0.0;  // eV/atom
    double energy_above_hull = 0.0; // eV/atom
    StabilityClass cls = StabilityClass::Unstable;
};

/// Stable: E_f < 0 and E_hull = 0 (within 1e-9).
/// Metastable: E_f < 0 and 0 < E_hull < the metastable threshold.
/// Unstable: everything else. Exactly one class per input.
StabilityClass
classify_stability(double formation_energy, double energy_above_hull,
                   double hull_threshold = kHullMetastableThreshold);

StabilityLabel
make_label(double formation_energy, double energy_above_hull,
           double hull_threshold = kHullMetastableThreshold);

} // namespace pforge::analysis
