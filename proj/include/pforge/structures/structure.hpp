#pragma once

#include <array>
#include <string>
#include <vector>

#include "pforge/chem/composition.hpp"
#include "pforge/chem/registry.hpp"

namespace pforge::structures {

class MalformedPoscar : public Error {
public:
    MalformedPoscar(const std::string& what, size_t line)
        : Error("POSCAR line " + std::to_string(line) + ": " + what),
          line_number(line) {}
    size_t line_number;
};

class RoleMappingFailure : public Error {
public:
    explicit RoleMappingFailure(const std::string& what) : Error(what) {}
};

class EmptyReferenceSet : public Error {
public:
    explicit EmptyReferenceSet(const std::string& what) : Error(what) {}
};

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

struct SpeciesBlock {
    std::string symbol;
    size_t count = 0;
    bool operator==(const SpeciesBlock&) const = default;
};

/// A crystal structure in the VASP POSCAR model: comment line, scaling
/// factor, lattice rows, species blocks, fractional coordinates in site
/// order.
struct Structure {
    std::string comment;
    double scale = 1.0;
    Mat3 lattice{};
    std::vector<SpeciesBlock> species;
    std::vector<Vec3> coords; // fractional, one per atom

    size_t atom_count() const;
    bool operator==(const Structure&) const = default;
};

/// Emit VASP-5 POSCAR text (species line present, "Direct" coordinates,
/// fixed 16-decimal formatting). Byte-stable: equal structures produce
/// identical bytes.
std::string write_poscar(const Structure& s);

/// Parse VASP-5 POSCAR text. Throws MalformedPoscar (with line number)
/// on syntax or count/coordinate mismatches.
Structure parse_poscar(const std::string& text);

/// write_poscar to `path` atomically (write temp file, then rename).
void save_poscar(const Structure& s, const std::string& path);

Structure load_poscar(const std::string& path);

} // namespace pforge::structures
