#include "pforge/analysis/stability.hpp"

#include <cmath>

namespace pforge::analysis {

std::string to_string(StabilityClass c) {
    switch (c) {
    case StabilityClass::Stable: return "stable";
    case StabilityClass::Metastable: return "metastable";
    case StabilityClass::Unstable: return "unstable";
    }
    return "unstable";
}

std::optional<StabilityClass> stability_from_string(const std::string& s) {
    if (s == "stable") return StabilityClass::Stable;
    if (s == "metastable") return StabilityClass::Metastable;
    if (s == "unstable") return StabilityClass::Unstable;
    return std::nullopt;
}

StabilityClass classify_stability(double formation_energy,
                                  double energy_above_hull,
                                  double hull_threshold) {
    if (formation_energy < 0.0) {
        if (std::fabs(energy_above_hull) <= kHullZeroTolerance)
            return StabilityClass::Stable;
        if (energy_above_hull > 0.0 && energy_above_hull < hull_threshold)
            return StabilityClass::Metastable;
    }
    return StabilityClass::Unstable;
}

StabilityLabel make_label(double formation_energy, double energy_above_hull,
                          double hull_threshold) {
    return {formation_energy, energy_above_hull,
            classify_stability(formation_energy, energy_above_hull,
                               hull_threshold)};
}

} // namespace pforge::analysis
