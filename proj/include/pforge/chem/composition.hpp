#pragma once

#include <string>
#include <string_view>

#include "pforge/errors.hpp"

namespace pforge::chem {

class NotDoublePerovskite : public Error {
public:
    explicit NotDoublePerovskite(const std::string& what) : Error(what) {}
};

class UnknownElement : public Error {
public:
    explicit UnknownElement(const std::string& what) : Error(what) {}
};

enum class PerovskiteType { Halide, Chalcogenide, Oxide, Other };

std::string to_string(PerovskiteType t);

/// An A2BB'X6 double perovskite composition. Stoichiometry is fixed at
/// 2:1:1:6; only the four element symbols vary. B and B' are kept in
/// canonical (lexicographic) order so that B/B'-swapped formulas compare
/// equal.
struct Composition {
    std::string a_site;
    std::string b_site;
    std::string b_prime_site;
    std::string x_site;

    bool operator==(const Composition&) const = default;
    auto operator<=>(const Composition&) const = default;
};

/// True if `symbol` names a real element (full periodic table, not just
/// the registry subset).
bool is_element_symbol(std::string_view symbol);

/// True for elements that commonly occur as anions and may occupy the
/// X site.
bool is_anion_capable(std::string_view symbol);

/// Decompose a formula string into the unique A2BB'X6 assignment:
/// the subscript-2 element is A, the subscript-6 element is X, and the
/// two subscript-1 elements are B/B' in canonical order.
///
/// Throws NotDoublePerovskite if the subscript multiset is not {2,1,1,6}
/// or the X slot is not anion-capable; UnknownElement for bad symbols.
Composition parse_formula(std::string_view text);

/// Render as "A2BB'X6", e.g. "Cs2AgBiBr6". Uses the canonical B order.
std::string format_formula(const Composition& c);

/// Return the composition with B/B' in canonical order. Idempotent and
/// invariant under swapping the two B sites of the input.
Composition canonicalize(const Composition& c);

/// Perovskite family by X-site anion: F/Cl/Br/I -> Halide, S/Se/Te ->
/// Chalcogenide, O -> Oxide, anything else -> Other.
PerovskiteType classify_type(const Composition& c);

} // namespace pforge::chem
