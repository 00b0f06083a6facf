#include "pforge/analysis/eimd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pforge::analysis {

void FractionalComposition::normalize() {
    double total = 0.0;
    for (const auto& [_, f] : fractions)
        total += f;
    if (fractions.empty() || total <= 0.0)
        throw Error("cannot normalize empty or non-positive composition");
    for (auto& [_, f] : fractions)
        f /= total;
}

FractionalComposition
FractionalComposition::from_composition(const chem::Composition& c) {
    FractionalComposition fc;
    fc.fractions[c.a_site] += 2.0;
    fc.fractions[c.b_site] += 1.0;
    fc.fractions[c.b_prime_site] += 1.0;
    fc.fractions[c.x_site] += 6.0;
    fc.normalize();
    return fc;
}

FractionalComposition
FractionalComposition::from_formula(const std::string& formula) {
    return from_composition(chem::parse_formula(formula));
}

double eimd(const FractionalComposition& p, const FractionalComposition& q,
            const chem::ElementRegistry& reg) {
    // Merge supports onto the scale axis: (position, p_mass - q_mass).
    std::map<double, double> delta;
    auto place = [&](const FractionalComposition& fc, double sign) {
        for (const auto& [sym, f] : fc.fractions) {
            if (!reg.contains(sym))
                throw UnrankedElement("element '" + sym +
                                      "' has no Pettifor rank in the registry");
            delta[reg.pettifor_position(sym)] += sign * f;
        }
    };
    place(p, +1.0);
    place(q, -1.0);

    // EMD = integral over the scale of |CDF_p - CDF_q|.
    double dist = 0.0, cdf = 0.0;
    double prev_x = 0.0;
    bool first = true;
    for (const auto& [x, d] : delta) {
        if (!first)
            dist += std::fabs(cdf) * (x - prev_x);
        cdf += d;
        prev_x = x;
        first = false;
    }
    return dist;
}

double top10_eimd(const FractionalComposition& c,
                  const std::vector<FractionalComposition>& training,
                  const chem::ElementRegistry& reg) {
    constexpr size_t k = 10;
    if (training.size() < k)
        throw InsufficientTrainingSet("top-10 EIMD needs >= 10 training entries, got " +
                                      std::to_string(training.size()));
    std::vector<double> dists;
    dists.reserve(training.size());
    for (const auto& t : training)
        dists.push_back(eimd(c, t, reg));
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    return std::accumulate(dists.begin(), dists.begin() + k, 0.0) /
           static_cast<double>(k);
}

double top10_eimd(const chem::Composition& c,
                  const std::vector<chem::Composition>& training,
                  const chem::ElementRegistry& reg) {
    std::vector<FractionalComposition> tr;
    tr.reserve(training.size());
    for (const auto& t : training)
        tr.push_back(FractionalComposition::from_composition(t));
    return top10_eimd(FractionalComposition::from_composition(c), tr, reg);
}

double id_ood_threshold(const std::vector<double>& id_cluster,
                        const std::vector<double>& ood_cluster) {
    if (id_cluster.empty() || ood_cluster.empty())
        throw Error("both clusters must be non-empty for an ID/OOD split");
    auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) /
               static_cast<double>(v.size());
    };
    return 0.5 * (mean(id_cluster) + mean(ood_cluster));
}

} // namespace pforge::analysis
