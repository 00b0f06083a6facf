#include "pforge/chem/registry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pforge::chem {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, sep))
        out.push_back(field);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

// Minimum element coverage for a usable shipped registry; checked at
// load so that a gap is a configuration error, not a mid-run surprise.
const std::vector<std::string> kRequiredElements = {
    "Li", "Na", "K",  "Rb", "Cs",                               // alkali
    "Ag", "Cu", "In", "Sb", "Bi", "Tl", "Cd", "Pb",             // B-site pool
    "Ba", "Sr", "Y",  "Nb", "Zr", "Cr",                         // more B/A
    "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", // lanthanides
    "Ho", "Er", "Tm", "Yb", "Lu",
    "F",  "Cl", "Br", "I",                                      // halogens
    "S",  "Se", "Te", "O"};

} // namespace

std::vector<int> ElementEntry::allowed_states() const {
    std::vector<int> out;
    for (const auto& [key, _] : radii)
        if (out.empty() || out.back() != key.first)
            out.push_back(key.first);
    return out;
}

ElementRegistry ElementRegistry::load(const std::string& path,
                                      bool require_coverage) {
    std::ifstream in(path);
    if (!in)
        throw RegistryLoadError("cannot open element registry '" + path + "'");

    ElementRegistry reg;
    std::string line;
    if (!std::getline(in, line))
        throw RegistryLoadError("empty registry file '" + path + "'");
    if (split(line, ',') !=
        std::vector<std::string>{"element", "oxidation_state",
                                 "coordination_number", "radius_angstrom",
                                 "pettifor_rank", "flags"})
        throw RegistryLoadError("unexpected registry header in '" + path + "'");

    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto fields = split(line, ',');
        if (fields.size() != 6)
            throw RegistryLoadError("registry line " + std::to_string(lineno) +
                                    ": expected 6 fields");
        const std::string& sym = fields[0];
        if (!is_element_symbol(sym))
            throw RegistryLoadError("registry line " + std::to_string(lineno) +
                                    ": unknown element '" + sym + "'");
        int state = 0, cn = 0, rank = 0;
        double radius = 0.0;
        try {
            state = std::stoi(fields[1]);
            cn = std::stoi(fields[2]);
            radius = std::stod(fields[3]);
            rank = std::stoi(fields[4]);
        } catch (const std::exception&) {
            throw RegistryLoadError("registry line " + std::to_string(lineno) +
                                    ": malformed numeric field");
        }
        if (radius <= 0.0 || cn <= 0 || state == 0)
            throw RegistryLoadError("registry line " + std::to_string(lineno) +
                                    ": radius/CN must be positive, state nonzero");

        std::set<std::string> flags;
        for (const auto& f : split(fields[5], '|'))
            if (!f.empty())
                flags.insert(f);

        auto [it, fresh] = reg.entries_.try_emplace(sym);
        ElementEntry& e = it->second;
        if (fresh) {
            e.symbol = sym;
            e.pettifor_rank = rank;
            e.flags = flags;
        } else {
            if (e.pettifor_rank != rank)
                throw RegistryLoadError("registry line " + std::to_string(lineno) +
                                        ": inconsistent pettifor_rank for " + sym);
            if (e.flags != flags)
                throw RegistryLoadError("registry line " + std::to_string(lineno) +
                                        ": inconsistent flags for " + sym);
        }
        if (!e.radii.emplace(std::make_pair(state, cn), radius).second)
            throw RegistryLoadError("registry line " + std::to_string(lineno) +
                                    ": duplicate key (" + sym + "," +
                                    std::to_string(state) + "," +
                                    std::to_string(cn) + ")");
    }

    if (reg.entries_.empty())
        throw RegistryLoadError("registry '" + path + "' has no entries");

    // Ranks must be a permutation of 1..N over the included elements.
    std::vector<int> ranks;
    for (const auto& [_, e] : reg.entries_)
        ranks.push_back(e.pettifor_rank);
    std::sort(ranks.begin(), ranks.end());
    for (size_t i = 0; i < ranks.size(); ++i)
        if (ranks[i] != static_cast<int>(i) + 1)
            throw RegistryLoadError(
                "pettifor ranks are not a permutation of 1..N in '" + path + "'");
    reg.min_rank_ = 1;
    reg.max_rank_ = static_cast<int>(ranks.size());

    if (require_coverage)
        for (const auto& sym : kRequiredElements)
            if (!reg.contains(sym))
                throw RegistryLoadError("registry '" + path +
                                        "' missing required element " + sym);
    return reg;
}

const ElementEntry& ElementRegistry::entry(const std::string& symbol) const {
    auto it = entries_.find(symbol);
    if (it == entries_.end())
        throw RadiusUnavailable("element '" + symbol + "' not in registry");
    return it->second;
}

std::vector<std::string> ElementRegistry::symbols() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [sym, _] : entries_)
        out.push_back(sym);
    return out;
}

std::optional<double> ElementRegistry::radius(const std::string& symbol,
                                              int state, int cn) const {
    auto it = entries_.find(symbol);
    if (it == entries_.end())
        return std::nullopt;
    auto rit = it->second.radii.find({state, cn});
    if (rit == it->second.radii.end())
        return std::nullopt;
    return rit->second;
}

std::pair<double, int>
ElementRegistry::radius_with_fallback(const std::string& symbol, int state,
                                      int cn) const {
    const ElementEntry& e = entry(symbol);
    if (auto it = e.radii.find({state, cn}); it != e.radii.end())
        return {it->second, cn};
    // Largest tabulated CN for this state. Map keys are ordered, so the
    // last entry with matching state has the largest CN.
    int best_cn = 0;
    double best_r = 0.0;
    for (const auto& [key, r] : e.radii) {
        if (key.first == state && key.second > best_cn) {
            best_cn = key.second;
            best_r = r;
        }
    }
    if (best_cn == 0)
        throw RadiusUnavailable("no Shannon radius for " + symbol + " state " +
                                std::to_string(state));
    return {best_r, best_cn};
}

int ElementRegistry::pettifor_rank(const std::string& symbol) const {
    return entry(symbol).pettifor_rank;
}

double ElementRegistry::pettifor_position(const std::string& symbol) const {
    if (max_rank_ == min_rank_)
        return 0.0;
    return static_cast<double>(pettifor_rank(symbol) - min_rank_) /
           static_cast<double>(max_rank_ - min_rank_);
}

std::vector<std::string>
ElementRegistry::with_flag(const std::string& flag) const {
    std::vector<std::string> out;
    for (const auto& [sym, e] : entries_)
        if (e.has_flag(flag))
            out.push_back(sym);
    return out;
}

std::optional<int>
ElementRegistry::default_anion_state(const std::string& symbol) {
    if (symbol == "F" || symbol == "Cl" || symbol == "Br" || symbol == "I" ||
        symbol == "At")
        return -1;
    if (symbol == "O" || symbol == "S" || symbol == "Se" || symbol == "Te")
        return -2;
    return std::nullopt;
}

double shannon_radius(const std::string& element, int oxidation_state,
                      int coordination_number, const ElementRegistry& reg) {
    auto r = reg.radius(element, oxidation_state, coordination_number);
    if (!r)
        throw RadiusUnavailable("no Shannon radius for (" + element + "," +
                                std::to_string(oxidation_state) + ",CN" +
                                std::to_string(coordination_number) + ")");
    return *r;
}

std::vector<AssignmentQuadruple>
assign_oxidation_states(const Composition& comp, const ElementRegistry& reg) {
    const Composition c = canonicalize(comp);
    std::vector<AssignmentQuadruple> out;
    if (!reg.contains(c.a_site) || !reg.contains(c.b_site) ||
        !reg.contains(c.b_prime_site) || !reg.contains(c.x_site))
        return out;

    const auto& ea = reg.entry(c.a_site);
    const auto& eb = reg.entry(c.b_site);
    const auto& ebp = reg.entry(c.b_prime_site);
    const auto& ex = reg.entry(c.x_site);

    auto make_ion = [&](const std::string& sym, int q, int nominal_cn,
                        bool allow_fallback, IonAssignment& ion,
                        bool& used_fallback) -> bool {
        if (auto r = reg.radius(sym, q, nominal_cn)) {
            ion = {sym, q, nominal_cn, *r};
            return true;
        }
        if (!allow_fallback)
            return false;
        try {
            auto [r, cn] = reg.radius_with_fallback(sym, q, nominal_cn);
            ion = {sym, q, cn, r};
            used_fallback = true;
            return true;
        } catch (const RadiusUnavailable&) {
            return false;
        }
    };

    for (int qa : ea.allowed_states()) {
        for (int qb : eb.allowed_states()) {
            for (int qbp : ebp.allowed_states()) {
                for (int qx : ex.allowed_states()) {
                    if (2 * qa + qb + qbp + 6 * qx != 0)
                        continue;
                    AssignmentQuadruple quad;
                    bool fb = false;
                    // A-site CN 12 is sparse in Shannon's table; allow the
                    // largest-CN fallback there only.
                    if (!make_ion(c.a_site, qa, kCnASite, true, quad.a, fb))
                        continue;
                    if (!make_ion(c.b_site, qb, kCnBSite, false, quad.b, fb))
                        continue;
                    if (!make_ion(c.b_prime_site, qbp, kCnBSite, false,
                                  quad.b_prime, fb))
                        continue;
                    if (!make_ion(c.x_site, qx, kCnXSite, false, quad.x, fb))
                        continue;
                    quad.cn_fallback_used = fb;
                    out.push_back(quad);
                }
            }
        }
    }

    auto x_default = ElementRegistry::default_anion_state(c.x_site);
    auto sort_key = [&](const AssignmentQuadruple& q) {
        int non_default_x = (x_default && q.x.oxidation_state == *x_default) ? 0 : 1;
        int cation_abs = std::abs(q.a.oxidation_state) +
                         std::abs(q.b.oxidation_state) +
                         std::abs(q.b_prime.oxidation_state);
        return std::make_tuple(non_default_x, cation_abs, q.a.oxidation_state,
                               q.b.oxidation_state, q.b_prime.oxidation_state,
                               q.x.oxidation_state);
    };
    std::sort(out.begin(), out.end(),
              [&](const auto& l, const auto& r) { return sort_key(l) < sort_key(r); });
    return out;
}

} // namespace pforge::chem
