#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pforge/chem/composition.hpp"
#include "pforge/errors.hpp"

namespace pforge::chem {

class RegistryLoadError : public Error {
public:
    explicit RegistryLoadError(const std::string& what) : Error(what) {}
};

class RadiusUnavailable : public Error {
public:
    explicit RadiusUnavailable(const std::string& what) : Error(what) {}
};

// Site coordination numbers used throughout (cubic perovskite convention).
inline constexpr int kCnASite = 12;
inline constexpr int kCnBSite = 6;
inline constexpr int kCnXSite = 6;

/// One ion of a composition: which element sits on a site, in which
/// oxidation state, and the Shannon radius actually used (the
/// coordination number records the table entry the radius came from,
/// which may be a fallback CN for sparse A-site data).
struct IonAssignment {
    std::string element;
    int oxidation_state = 0;
    int coordination_number = 0;
    double shannon_radius = 0.0;

    bool operator==(const IonAssignment&) const = default;
};

/// The four ions of an A2BB'X6 cell, charge neutral:
/// 2*q_A + q_B + q_B' + 6*q_X = 0.
struct AssignmentQuadruple {
    IonAssignment a, b, b_prime, x;
    bool cn_fallback_used = false; // some site radius came from a non-nominal CN

    int charge_sum() const {
        return 2 * a.oxidation_state + b.oxidation_state +
               b_prime.oxidation_state + 6 * x.oxidation_state;
    }
    bool operator==(const AssignmentQuadruple&) const = default;
};

struct ElementEntry {
    std::string symbol;
    int pettifor_rank = 0;
    std::set<std::string> flags;
    // (oxidation state, coordination number) -> radius in Angstrom
    std::map<std::pair<int, int>, double> radii;

    std::vector<int> allowed_states() const;
    bool has_flag(const std::string& f) const { return flags.count(f) > 0; }
};

/// Immutable per-element data: allowed oxidation states, Shannon radii
/// keyed by (state, CN), modified-Pettifor rank, category flags. Loaded
/// once from CSV and shared read-only afterwards.
class ElementRegistry {
public:
    /// Load from a CSV with header
    /// element,oxidation_state,coordination_number,radius_angstrom,pettifor_rank,flags
    /// Rejects duplicate (element,state,CN) keys, inconsistent per-element
    /// rank/flags, and ranks that are not a permutation of 1..N. With
    /// `require_coverage`, additionally demands every element of the
    /// baseline set (alkali metals through chalcogens) so gaps surface at
    /// load time rather than mid-run.
    static ElementRegistry load(const std::string& path,
                                bool require_coverage = true);

    bool contains(const std::string& symbol) const {
        return entries_.count(symbol) > 0;
    }
    const ElementEntry& entry(const std::string& symbol) const;
    std::vector<std::string> symbols() const;
    size_t size() const { return entries_.size(); }

    /// Tabulated Shannon radius for (element, state, CN), or nullopt.
    std::optional<double> radius(const std::string& symbol, int state,
                                 int cn) const;

    /// Radius with the fallback rule: if (state, CN) is missing, use the
    /// largest tabulated CN for that state and report the CN actually
    /// used. Throws RadiusUnavailable when the state has no entry at all.
    std::pair<double, int> radius_with_fallback(const std::string& symbol,
                                                int state, int cn) const;

    /// Pettifor rank of an element (1..N within this registry).
    int pettifor_rank(const std::string& symbol) const;

    /// Rank normalized to [0,1] across the registry, the coordinate EIMD
    /// transports mass over.
    double pettifor_position(const std::string& symbol) const;

    /// Elements carrying a category flag ("rare_earth", "halogen", ...).
    std::vector<std::string> with_flag(const std::string& flag) const;

    /// Category-default anion state: halogen -1, chalcogen -2, O -2.
    static std::optional<int> default_anion_state(const std::string& symbol);

private:
    std::map<std::string, ElementEntry> entries_;
    int min_rank_ = 0, max_rank_ = 0;
};

/// Exact radius lookup used by the tolerance pipeline; no fallback.
/// Throws RadiusUnavailable when the key is absent.
double shannon_radius(const std::string& element, int oxidation_state,
                      int coordination_number, const ElementRegistry& reg);

/// Enumerate every charge-neutral (q_A, q_B, q_B', q_X) over the allowed
/// state tables that has radius data for its sites (A at CN 12 with the
/// fallback rule, B/B'/X at CN 6 exact). Ordered by: X in its
/// category-default state first, then minimal sum |q| over cations, then
/// lexicographic on the state tuple. Empty result means no neutral
/// assignment exists.
std::vector<AssignmentQuadruple>
assign_oxidation_states(const Composition& c, const ElementRegistry& reg);

} // namespace pforge::chem
