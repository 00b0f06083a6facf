#include "pforge/structures/structure.hpp"

namespace pforge::structures {

size_t Structure::atom_count() const {
    size_t n = 0;
    for (const auto& s : species)
        n += s.count;
    return n;
}

} // namespace pforge::structures
