#pragma once

#include <map>
#include <string>
#include <vector>

#include "pforge/chem/composition.hpp"
#include "pforge/chem/registry.hpp"

namespace pforge::analysis {

class UnrankedElement : public Error {
public:
    explicit UnrankedElement(const std::string& what) : Error(what) {}
};

class InsufficientTrainingSet : public Error {
public:
    explicit InsufficientTrainingSet(const std::string& what) : Error(what) {}
};

/// Element fractions summing to 1 (within 1e-12 after normalize()).
struct FractionalComposition {
    std::map<std::string, double> fractions;

    /// Rescale so fractions sum to exactly 1. Throws on empty or
    /// non-positive total.
    void normalize();

    static FractionalComposition from_composition(const chem::Composition& c);
    static FractionalComposition
    from_formula(const std::string& formula); // A2BB'X6 only
};

/// Elemental mover's distance: 1-D optimal transport between two
/// fractional compositions with each element placed at its normalized
/// modified-Pettifor position. Computed as the integral of
/// |CDF_p - CDF_q| over the scale, which is exact for 1-D transport.
double eimd(const FractionalComposition& p, const FractionalComposition& q,
            const chem::ElementRegistry& reg);

/// Mean EIMD to the ten nearest members of `training`. Requires at
/// least ten entries.
double top10_eimd(const chem::Composition& c,
                  const std::vector<chem::Composition>& training,
                  const chem::ElementRegistry& reg);

double top10_eimd(const FractionalComposition& c,
                  const std::vector<FractionalComposition>& training,
                  const chem::ElementRegistry& reg);

/// Top-10 EIMD cutoff separating in-distribution from out-of-distribution
/// compositions: the midpoint between the two cluster means of the
/// dataset under test. Values at or below the cutoff count as ID.
double id_ood_threshold(const std::vector<double>& id_cluster,
                        const std::vector<double>& ood_cluster);

inline bool is_in_distribution(double top10_value, double threshold) {
    return top10_value <= threshold;
}

} // namespace pforge::analysis
