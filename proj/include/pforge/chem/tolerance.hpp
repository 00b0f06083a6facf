#pragma once

#include "pforge/chem/registry.hpp"

namespace pforge::chem {

class SingularRatio : public Error {
public:
    explicit SingularRatio(const std::string& what) : Error(what) {}
};

class NoNeutralAssignment : public Error {
public:
    explicit NoNeutralAssignment(const std::string& what) : Error(what) {}
};

/// Stability threshold on the tolerance factor: tau below this predicts
/// a stable double perovskite.
inline constexpr double kTauStableThreshold = 4.18;

/// tau = r_X/r_B - n_A * (n_A - (r_A/r_B) / ln(r_A/r_B)).
///
/// All radii in Angstrom, n_A is the magnitude of the A-site oxidation
/// state. Throws SingularRatio when r_A/r_B is within 1e-12 of 1 (the
/// log term is singular there).
double new_tolerance_factor(double r_a, double r_b_eff, double r_x, int n_a);

/// Effective B-site radius of the two B cations: arithmetic mean.
double effective_b_radius(double r_b, double r_b_prime);

/// Goldschmidt factor t = (r_A + r_X) / (sqrt(2) * (r_B + r_X)).
double goldschmidt_t(double r_a, double r_b_eff, double r_x);

/// Pseudo-cubic lattice parameter a = 2 * (r_B + r_X) * sqrt(t).
double lattice_parameter(double r_b_eff, double r_x, double t);

struct ToleranceReport {
    double tau = 0.0;
    double goldschmidt_t = 0.0;
    AssignmentQuadruple assignment;
    bool stable_predicted = false; // tau < threshold
    bool cn_fallback_used = false;
    double threshold = kTauStableThreshold;

    double effective_b_radius() const {
        return chem::effective_b_radius(assignment.b.shannon_radius,
                                        assignment.b_prime.shannon_radius);
    }
};

/// Full knowledge pipeline for one composition: first neutral oxidation
/// assignment, effective radii, tau, Goldschmidt t, stability verdict.
/// Throws NoNeutralAssignment when assign_oxidation_states is empty and
/// SingularRatio when radii make the tau formula singular.
ToleranceReport tolerance_report(const Composition& c,
                                 const ElementRegistry& reg,
                                 double threshold = kTauStableThreshold);

/// Same, but for a caller-chosen assignment.
ToleranceReport tolerance_report(const AssignmentQuadruple& quad,
                                 double threshold = kTauStableThreshold);

} // namespace pforge::chem
