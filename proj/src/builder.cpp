#include "pforge/structures/builder.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "pforge/analysis/eimd.hpp"

namespace pforge::structures {

using chem::Composition;

std::vector<RankedReference>
nearest_references(const Composition& c,
                   const std::vector<ReferenceCandidate>& refs,
                   const chem::ElementRegistry& reg, size_t k) {
    if (refs.empty())
        throw EmptyReferenceSet("reference set is empty");
    const auto query = analysis::FractionalComposition::from_composition(c);
    std::vector<RankedReference> ranked;
    ranked.reserve(refs.size());
    for (const auto& ref : refs) {
        const auto rc =
            analysis::FractionalComposition::from_composition(ref.composition);
        ranked.push_back({ref, analysis::eimd(query, rc, reg)});
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& l, const auto& r) {
        if (l.distance != r.distance)
            return l.distance < r.distance;
        return chem::format_formula(l.candidate.composition) <
               chem::format_formula(r.candidate.composition);
    });
    if (ranked.size() > k)
        ranked.resize(k);
    return ranked;
}

RankedReference match_reference(const Composition& c,
                                const std::vector<ReferenceCandidate>& refs,
                                const chem::ElementRegistry& reg,
                                const Reranker& reranker) {
    auto shortlist = nearest_references(c, refs, reg, 10);
    if (reranker) {
        if (auto picked = reranker(shortlist)) {
            const auto canon = chem::canonicalize(*picked);
            for (const auto& r : shortlist)
                if (chem::canonicalize(r.candidate.composition) == canon)
                    return r;
        }
    }
    return shortlist.front();
}

Reranker make_llm_reranker(llm::Session& gateway) {
    return [&gateway](const std::vector<RankedReference>& shortlist)
               -> std::optional<Composition> {
        std::ostringstream list;
        for (size_t i = 0; i < shortlist.size(); ++i)
            list << (i ? ", " : "")
                 << chem::format_formula(shortlist[i].candidate.composition);
        std::vector<llm::ChatMessage> messages = {
            {"system",
             "Pick the reference double perovskite whose crystal structure is "
             "the best template for the target composition. Answer with one "
             "formula from the list."},
            {"user", "Candidates: " + list.str()},
        };
        const std::string response = gateway.complete(messages, {});
        // Whichever shortlist formula the reply names first wins.
        std::optional<Composition> best;
        size_t best_pos = std::string::npos;
        for (const auto& r : shortlist) {
            const auto f = chem::format_formula(r.candidate.composition);
            const auto pos = response.find(f);
            if (pos != std::string::npos && pos < best_pos) {
                best_pos = pos;
                best = r.candidate.composition;
            }
        }
        return best;
    };
}

Structure substitute_elements(const Structure& tmpl, const Composition& c) {
    // Recover the template's own A2BB'X6 composition from its counts.
    std::map<std::string, size_t> totals;
    for (const auto& sp : tmpl.species)
        totals[sp.symbol] += sp.count;
    if (totals.size() != 4)
        throw RoleMappingFailure("template has " +
                                 std::to_string(totals.size()) +
                                 " distinct species, expected 4");
    const size_t atoms = tmpl.atom_count();
    if (atoms % 10 != 0)
        throw RoleMappingFailure("template atom count " +
                                 std::to_string(atoms) +
                                 " is not a multiple of 10");
    const size_t m = atoms / 10;

    std::string a, x;
    std::vector<std::string> singles;
    for (const auto& [sym, n] : totals) {
        if (n == 2 * m && a.empty())
            a = sym;
        else if (n == 6 * m && x.empty())
            x = sym;
        else if (n == m && singles.size() < 2)
            singles.push_back(sym);
        else
            throw RoleMappingFailure("template counts are not 2:1:1:6");
    }
    if (a.empty() || x.empty() || singles.size() != 2)
        throw RoleMappingFailure("template counts are not 2:1:1:6");
    const Composition own = chem::canonicalize({a, singles[0], singles[1], x});
    const Composition target = chem::canonicalize(c);

    const std::map<std::string, std::string> mapping = {
        {own.a_site, target.a_site},
        {own.b_site, target.b_site},
        {own.b_prime_site, target.b_prime_site},
        {own.x_site, target.x_site},
    };

    Structure out = tmpl;
    out.comment = chem::format_formula(target) + " (substituted from " +
                  chem::format_formula(own) + ")";
    for (auto& sp : out.species)
        sp.symbol = mapping.at(sp.symbol);
    return out;
}

Structure build_cubic(const Composition& comp,
                      const chem::AssignmentQuadruple& quad) {
    const Composition c = chem::canonicalize(comp);
    if (quad.a.element != c.a_site || quad.b.element != c.b_site ||
        quad.b_prime.element != c.b_prime_site || quad.x.element != c.x_site)
        throw Error("assignment elements do not match composition " +
                    chem::format_formula(c));

    const double r_b = chem::effective_b_radius(quad.b.shannon_radius,
                                                quad.b_prime.shannon_radius);
    const double r_x = quad.x.shannon_radius;
    const double t =
        chem::goldschmidt_t(quad.a.shannon_radius, r_b, r_x);
    const double a = chem::lattice_parameter(r_b, r_x, t);

    Structure s;
    s.comment = chem::format_formula(c) + " rock-salt ordered cubic cell";
    s.scale = a;
    s.lattice = {{{2.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 2.0}}};
    s.species = {{c.a_site, 8}, {c.b_site, 4}, {c.b_prime_site, 4},
                 {c.x_site, 24}};

    // A at the 8c sites.
    for (double i : {0.25, 0.75})
        for (double j : {0.25, 0.75})
            for (double k : {0.25, 0.75})
                s.coords.push_back({i, j, k});
    // B at 4a (fcc), B' at 4b (rock-salt partner).
    const std::vector<Vec3> b_sites = {
        {0.0, 0.0, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}, {0.5, 0.5, 0.0}};
    for (const auto& v : b_sites)
        s.coords.push_back(v);
    for (const auto& v : b_sites)
        s.coords.push_back({v[0] + 0.5 >= 1.0 ? v[0] - 0.5 : v[0] + 0.5,
                            v[1], v[2]});
    // X on the B--B' edges (24e with the ideal x = 1/4).
    for (const auto& b : b_sites) {
        for (size_t axis = 0; axis < 3; ++axis) {
            for (double offset : {0.25, -0.25}) {
                Vec3 v = b;
                v[axis] += offset;
                if (v[axis] < 0.0)
                    v[axis] += 1.0;
                s.coords.push_back(v);
            }
        }
    }
    return s;
}

} // namespace pforge::structures
