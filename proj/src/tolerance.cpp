#include "pforge/chem/tolerance.hpp"

#include <cmath>

namespace pforge::chem {

double new_tolerance_factor(double r_a, double r_b_eff, double r_x, int n_a) {
    if (r_a <= 0.0 || r_b_eff <= 0.0 || r_x <= 0.0)
        throw Error("tolerance factor needs positive radii");
    if (n_a < 1)
        throw Error("tolerance factor needs n_A >= 1");
    const double ratio = r_a / r_b_eff;
    if (std::fabs(ratio - 1.0) < 1e-12)
        throw SingularRatio("r_A/r_B within 1e-12 of 1, ln term singular");
    const double na = static_cast<double>(n_a);
    return r_x / r_b_eff - na * (na - ratio / std::log(ratio));
}

double effective_b_radius(double r_b, double r_b_prime) {
    return 0.5 * (r_b + r_b_prime);
}

double goldschmidt_t(double r_a, double r_b_eff, double r_x) {
    return (r_a + r_x) / (std::sqrt(2.0) * (r_b_eff + r_x));
}

double lattice_parameter(double r_b_eff, double r_x, double t) {
    return 2.0 * (r_b_eff + r_x) * std::sqrt(t);
}

ToleranceReport tolerance_report(const AssignmentQuadruple& quad,
                                 double threshold) {
    ToleranceReport rep;
    rep.assignment = quad;
    rep.threshold = threshold;
    rep.cn_fallback_used = quad.cn_fallback_used;
    const double r_a = quad.a.shannon_radius;
    const double r_b = effective_b_radius(quad.b.shannon_radius,
                                          quad.b_prime.shannon_radius);
    const double r_x = quad.x.shannon_radius;
    const int n_a = std::abs(quad.a.oxidation_state);
    rep.tau = new_tolerance_factor(r_a, r_b, r_x, n_a);
    rep.goldschmidt_t = chem::goldschmidt_t(r_a, r_b, r_x);
    rep.stable_predicted = rep.tau < threshold;
    return rep;
}

ToleranceReport tolerance_report(const Composition& c,
                                 const ElementRegistry& reg, double threshold) {
    auto quads = assign_oxidation_states(c, reg);
    if (quads.empty())
        throw NoNeutralAssignment("no charge-neutral oxidation assignment for " +
                                  format_formula(c));
    return tolerance_report(quads.front(), threshold);
}

} // namespace pforge::chem
