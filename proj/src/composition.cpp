#include "pforge/chem/composition.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>
#include <vector>

namespace pforge::chem {

namespace {

constexpr std::array<std::string_view, 118> kSymbols = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg",
    "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr",
    "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
    "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

// Elements that can carry a negative oxidation state in an ionic solid.
constexpr std::array<std::string_view, 13> kAnionCapable = {
    "H", "N", "P", "As", "O", "S", "Se", "Te", "F", "Cl", "Br", "I", "At"};

} // namespace

std::string to_string(PerovskiteType t) {
    switch (t) {
    case PerovskiteType::Halide: return "halide";
    case PerovskiteType::Chalcogenide: return "chalcogenide";
    case PerovskiteType::Oxide: return "oxide";
    case PerovskiteType::Other: return "other";
    }
    return "other";
}

bool is_element_symbol(std::string_view symbol) {
    return std::find(kSymbols.begin(), kSymbols.end(), symbol) != kSymbols.end();
}

bool is_anion_capable(std::string_view symbol) {
    return std::find(kAnionCapable.begin(), kAnionCapable.end(), symbol) !=
           kAnionCapable.end();
}

Composition parse_formula(std::string_view text) {
    // Tokenize into (symbol, count) pairs, merging repeated symbols.
    std::vector<std::pair<std::string, long>> parts;
    size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (!std::isupper(static_cast<unsigned char>(c)))
            throw NotDoublePerovskite("malformed formula: '" + std::string(text) +
                                      "'");
        std::string sym(1, c);
        ++i;
        if (i < text.size() && std::islower(static_cast<unsigned char>(text[i]))) {
            sym += text[i];
            ++i;
        }
        long count = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            count = count * 10 + (text[i] - '0');
            ++i;
        }
        if (count == 0)
            count = 1;
        if (!is_element_symbol(sym))
            throw UnknownElement("unknown element '" + sym + "' in formula '" +
                                 std::string(text) + "'");
        auto it = std::find_if(parts.begin(), parts.end(),
                               [&](const auto& p) { return p.first == sym; });
        if (it != parts.end())
            it->second += count;
        else
            parts.emplace_back(sym, count);
    }

    if (parts.size() != 4)
        throw NotDoublePerovskite("formula '" + std::string(text) +
                                  "' does not have four distinct elements");

    std::string a, x;
    std::vector<std::string> singles;
    for (const auto& [sym, count] : parts) {
        if (count == 2 && a.empty())
            a = sym;
        else if (count == 6 && x.empty())
            x = sym;
        else if (count == 1 && singles.size() < 2)
            singles.push_back(sym);
        else
            throw NotDoublePerovskite("formula '" + std::string(text) +
                                      "' subscripts are not {2,1,1,6}");
    }
    if (a.empty() || x.empty() || singles.size() != 2)
        throw NotDoublePerovskite("formula '" + std::string(text) +
                                  "' subscripts are not {2,1,1,6}");
    if (!is_anion_capable(x))
        throw NotDoublePerovskite("X-site element '" + x +
                                  "' cannot form an anion");
    return canonicalize({a, singles[0], singles[1], x});
}

std::string format_formula(const Composition& c) {
    Composition k = canonicalize(c);
    return k.a_site + "2" + k.b_site + k.b_prime_site + k.x_site + "6";
}

Composition canonicalize(const Composition& c) {
    Composition out = c;
    if (out.b_prime_site < out.b_site)
        std::swap(out.b_site, out.b_prime_site);
    return out;
}

PerovskiteType classify_type(const Composition& c) {
    const std::string& x = c.x_site;
    if (x == "F" || x == "Cl" || x == "Br" || x == "I")
        return PerovskiteType::Halide;
    if (x == "S" || x == "Se" || x == "Te")
        return PerovskiteType::Chalcogenide;
    if (x == "O")
        return PerovskiteType::Oxide;
    return PerovskiteType::Other;
}

} // namespace pforge::chem
