#include "pforge/orch/reference_db.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace pforge::orch {

ReferenceDb ReferenceDb::load_csv(const std::string& path,
                                  const std::string& structures_dir) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open reference database '" + path + "'");
    ReferenceDb db;
    std::string line;
    bool first = true;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        if (first && line.rfind("formula", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        std::istringstream ss(line);
        std::string formula, ef, ehull;
        std::getline(ss, formula, ',');
        std::getline(ss, ef, ',');
        std::getline(ss, ehull, ',');

        ReferenceEntry entry;
        try {
            entry.composition = chem::parse_formula(formula);
        } catch (const Error& e) {
            throw Error("reference db '" + path + "' line " +
                        std::to_string(lineno) + ": " + e.what());
        }
        if (!ef.empty())
            entry.formation_energy = std::stod(ef);
        if (!ehull.empty())
            entry.energy_above_hull = std::stod(ehull);
        if (!structures_dir.empty()) {
            const auto p = std::filesystem::path(structures_dir) /
                           (chem::format_formula(entry.composition) + ".poscar");
            if (std::filesystem::exists(p))
                entry.structure_path = p.string();
        }
        db.add(entry);
    }
    return db;
}

bool ReferenceDb::contains(const chem::Composition& c) const {
    return entries_.count(chem::format_formula(chem::canonicalize(c))) > 0;
}

const ReferenceEntry* ReferenceDb::find(const chem::Composition& c) const {
    auto it = entries_.find(chem::format_formula(chem::canonicalize(c)));
    return it == entries_.end() ? nullptr : &it->second;
}

bool ReferenceDb::add(const ReferenceEntry& entry) {
    ReferenceEntry canon = entry;
    canon.composition = chem::canonicalize(entry.composition);
    return entries_.emplace(chem::format_formula(canon.composition), canon)
        .second;
}

std::vector<chem::Composition> ReferenceDb::compositions() const {
    std::vector<chem::Composition> out;
    out.reserve(entries_.size());
    for (const auto& [_, e] : entries_)
        out.push_back(e.composition);
    return out;
}

std::vector<structures::ReferenceCandidate>
ReferenceDb::structure_candidates() const {
    std::vector<structures::ReferenceCandidate> out;
    for (const auto& [_, e] : entries_)
        if (!e.structure_path.empty())
            out.push_back({e.composition, e.structure_path});
    return out;
}

} // namespace pforge::orch
