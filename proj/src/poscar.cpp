#include "pforge/structures/structure.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pforge::structures {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.16f", v);
    return buf;
}

std::vector<std::string> tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t)
        out.push_back(t);
    return out;
}

double parse_double(const std::string& t, size_t lineno) {
    try {
        size_t pos = 0;
        double v = std::stod(t, &pos);
        if (pos != t.size())
            throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw MalformedPoscar("not a number: '" + t + "'", lineno);
    }
}

} // namespace

std::string write_poscar(const Structure& s) {
    std::ostringstream out;
    out << s.comment << "\n";
    out << fmt(s.scale) << "\n";
    for (const auto& row : s.lattice)
        out << "  " << fmt(row[0]) << "  " << fmt(row[1]) << "  " << fmt(row[2])
            << "\n";
    for (size_t i = 0; i < s.species.size(); ++i)
        out << (i ? " " : "") << s.species[i].symbol;
    out << "\n";
    for (size_t i = 0; i < s.species.size(); ++i)
        out << (i ? " " : "") << s.species[i].count;
    out << "\n";
    out << "Direct\n";
    for (const auto& c : s.coords)
        out << "  " << fmt(c[0]) << "  " << fmt(c[1]) << "  " << fmt(c[2])
            << "\n";
    return out.str();
}

Structure parse_poscar(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    // Trailing blank lines are tolerated; internal structure is strict.
    while (!lines.empty() && tokens(lines.back()).empty())
        lines.pop_back();
    if (lines.size() < 8)
        throw MalformedPoscar("file too short for a POSCAR", lines.size());

    Structure s;
    size_t ln = 0;
    s.comment = lines[ln++];

    auto toks = tokens(lines[ln]);
    if (toks.size() != 1)
        throw MalformedPoscar("expected a single scaling factor", ln + 1);
    s.scale = parse_double(toks[0], ln + 1);
    ++ln;

    for (auto& row : s.lattice) {
        toks = tokens(lines[ln]);
        if (toks.size() != 3)
            throw MalformedPoscar("lattice row needs 3 components", ln + 1);
        for (size_t i = 0; i < 3; ++i)
            row[i] = parse_double(toks[i], ln + 1);
        ++ln;
    }

    auto symbol_toks = tokens(lines[ln]);
    if (symbol_toks.empty())
        throw MalformedPoscar("missing species line (VASP-5 format required)",
                              ln + 1);
    for (const auto& t : symbol_toks)
        if (!chem::is_element_symbol(t))
            throw MalformedPoscar("'" + t + "' is not an element symbol; "
                                  "VASP-4 files without a species line are "
                                  "not supported", ln + 1);
    ++ln;

    auto count_toks = tokens(lines[ln]);
    if (count_toks.size() != symbol_toks.size())
        throw MalformedPoscar("species and count lines differ in length",
                              ln + 1);
    for (size_t i = 0; i < symbol_toks.size(); ++i) {
        long n = 0;
        try {
            n = std::stol(count_toks[i]);
        } catch (const std::exception&) {
            throw MalformedPoscar("bad species count '" + count_toks[i] + "'",
                                  ln + 1);
        }
        if (n <= 0)
            throw MalformedPoscar("species count must be positive", ln + 1);
        s.species.push_back({symbol_toks[i], static_cast<size_t>(n)});
    }
    ++ln;

    if (ln >= lines.size())
        throw MalformedPoscar("missing coordinate mode line", ln + 1);
    toks = tokens(lines[ln]);
    if (toks.empty() ||
        (toks[0][0] != 'D' && toks[0][0] != 'd'))
        throw MalformedPoscar("only Direct coordinates are supported", ln + 1);
    ++ln;

    const size_t natoms = s.atom_count();
    for (size_t i = 0; i < natoms; ++i) {
        if (ln >= lines.size())
            throw MalformedPoscar("expected " + std::to_string(natoms) +
                                      " coordinate rows, found " +
                                      std::to_string(i),
                                  ln + 1);
        toks = tokens(lines[ln]);
        if (toks.size() < 3)
            throw MalformedPoscar("coordinate row needs 3 components", ln + 1);
        Vec3 c{};
        for (size_t j = 0; j < 3; ++j)
            c[j] = parse_double(toks[j], ln + 1);
        s.coords.push_back(c);
        ++ln;
    }
    if (ln != lines.size())
        throw MalformedPoscar("trailing content after coordinates (counts/"
                              "coordinates mismatch?)", ln + 1);
    return s;
}

void save_poscar(const Structure& s, const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw Error("cannot write '" + tmp.string() + "'");
        out << write_poscar(s);
    }
    fs::rename(tmp, target);
}

Structure load_poscar(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open POSCAR '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_poscar(ss.str());
}

} // namespace pforge::structures
