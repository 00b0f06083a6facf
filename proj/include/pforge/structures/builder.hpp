#pragma once

#include <functional>
#include <optional>

#include "pforge/chem/tolerance.hpp"
#include "pforge/llm/gateway.hpp"
#include "pforge/structures/structure.hpp"

namespace pforge::structures {

/// A reference entry the matcher can draw from: a known composition and
/// (optionally) the path of its POSCAR file.
struct ReferenceCandidate {
    chem::Composition composition;
    std::string structure_path;
};

struct RankedReference {
    ReferenceCandidate candidate;
    double distance = 0.0;
};

/// The k nearest references by EIMD, non-decreasing distance, distance
/// ties broken by canonical formula order. Throws EmptyReferenceSet.
std::vector<RankedReference>
nearest_references(const chem::Composition& c,
                   const std::vector<ReferenceCandidate>& refs,
                   const chem::ElementRegistry& reg, size_t k = 10);

/// Optional selection hook over the retrieved shortlist; returning
/// nullopt falls back to rank-1.
using Reranker = std::function<std::optional<chem::Composition>(
    const std::vector<RankedReference>&)>;

/// Retrieve the 10 nearest references and select one: rank-1 by default,
/// or whatever the reranker picks from the shortlist.
RankedReference match_reference(const chem::Composition& c,
                                const std::vector<ReferenceCandidate>& refs,
                                const chem::ElementRegistry& reg,
                                const Reranker& reranker = nullptr);

/// LLM selection over the shortlist ("most structurally appropriate");
/// the response must name one of the candidates, otherwise rank-1 wins.
Reranker make_llm_reranker(llm::Session& gateway);

/// Replace the template's species role-wise (A->A, B->B, B'->B', X->X)
/// with the target composition. Lattice, counts and coordinates are
/// preserved bit-exactly. Throws RoleMappingFailure when the template is
/// not a recognizable A2BB'X6 cell.
Structure substitute_elements(const Structure& tmpl,
                              const chem::Composition& c);

/// Rock-salt-ordered cubic double perovskite cell (conventional 40-atom
/// elpasolite setting): scaling factor a = 2 (r_B_eff + r_X) sqrt(t) on a
/// doubled unit lattice. The assignment supplies the radii.
Structure build_cubic(const chem::Composition& c,
                      const chem::AssignmentQuadruple& assignment);

} // namespace pforge::structures
