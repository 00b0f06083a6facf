#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pforge/chem/composition.hpp"
#include "pforge/structures/builder.hpp"

namespace pforge::orch {

/// One known double perovskite: canonical composition, optional energies
/// (eV/atom), optional POSCAR path.
struct ReferenceEntry {
    chem::Composition composition;
    std::optional<double> formation_energy;
    std::optional<double> energy_above_hull;
    std::string structure_path;
};

/// The growing set of known compositions the comparator rejects against.
/// Seeded from a CSV (formula,formation_energy_ev_per_atom,
/// energy_above_hull_ev_per_atom; energies optional) and extended with
/// every accepted novel composition.
class ReferenceDb {
public:
    ReferenceDb() = default;

    /// Load the CSV; when `structures_dir` is given, a file named
    /// "<canonical formula>.poscar" in it is attached to the entry.
    static ReferenceDb load_csv(const std::string& path,
                                const std::string& structures_dir = "");

    bool contains(const chem::Composition& c) const;
    const ReferenceEntry* find(const chem::Composition& c) const;

    /// Insert if absent; returns true when the composition was new.
    bool add(const ReferenceEntry& entry);
    bool add(const chem::Composition& c) { return add(ReferenceEntry{chem::canonicalize(c), {}, {}, ""}); }

    size_t size() const { return entries_.size(); }
    std::vector<chem::Composition> compositions() const;

    /// Entries usable as structure templates (those with a POSCAR path).
    std::vector<structures::ReferenceCandidate> structure_candidates() const;

private:
    std::map<std::string, ReferenceEntry> entries_; // key: canonical formula
};

} // namespace pforge::orch
