#pragma once

#include <stdexcept>
#include <string>

namespace pforge {

// Base class for all pforge errors. Subclasses carry the failure kind in
// the type so call sites can catch selectively.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pforge
