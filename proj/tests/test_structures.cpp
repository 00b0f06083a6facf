#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "pforge/structures/builder.hpp"
#include "pforge/structures/structure.hpp"
#include "test_util.hpp"

using namespace pforge;
using structures::Structure;
using structures::Vec3;

namespace {

// Dyadic rationals survive the canonical 16-decimal POSCAR format
// exactly, so round-trips compare bit-identical.
double dyadic(std::mt19937& rng, int denom_pow) {
    std::uniform_int_distribution<long> num(0, (1L << denom_pow) - 1);
    return static_cast<double>(num(rng)) / static_cast<double>(1L << denom_pow);
}

Structure random_structure(std::mt19937& rng) {
    static const std::vector<std::string> symbols = {"Cs", "Ag", "Bi", "Br",
                                                     "Ba", "Y",  "Nb", "O"};
    std::uniform_int_distribution<size_t> nspecies(1, 4);
    std::uniform_int_distribution<size_t> natoms(1, 6);

    Structure s;
    s.comment = "random test structure";
    s.scale = 1.0 + dyadic(rng, 10);
    for (auto& row : s.lattice)
        for (auto& v : row)
            v = dyadic(rng, 10) * 8.0;
    // keep the lattice clearly non-singular
    for (int i = 0; i < 3; ++i)
        s.lattice[i][i] += 4.0;

    size_t n = nspecies(rng);
    for (size_t i = 0; i < n; ++i)
        s.species.push_back({symbols[(i * 3 + 1) % symbols.size()], natoms(rng)});
    for (size_t i = 0; i < s.atom_count(); ++i)
        s.coords.push_back({dyadic(rng, 16), dyadic(rng, 16), dyadic(rng, 16)});
    return s;
}

} // namespace

TEST_CASE("poscar write/parse round-trip on 100 random structures") {
    std::mt19937 rng(90210);
    for (int i = 0; i < 100; ++i) {
        Structure s = random_structure(rng);
        auto text = structures::write_poscar(s);
        Structure back = structures::parse_poscar(text);
        CHECK(back == s);
    }
}

TEST_CASE("poscar writer is byte stable") {
    std::mt19937 rng(7);
    Structure s = random_structure(rng);
    CHECK(structures::write_poscar(s) == structures::write_poscar(s));
}

TEST_CASE("poscar writer is idempotent through a parse") {
    std::mt19937 rng(8675309);
    for (int i = 0; i < 20; ++i) {
        Structure s = random_structure(rng);
        auto once = structures::write_poscar(s);
        auto twice = structures::write_poscar(structures::parse_poscar(once));
        CHECK(once == twice);
    }
}

TEST_CASE("poscar parse failures carry line numbers") {
    const std::string good = structures::write_poscar([] {
        std::mt19937 rng(1);
        return random_structure(rng);
    }());

    SUBCASE("counts vs coordinates mismatch") {
        // drop the last coordinate row
        auto text = good.substr(0, good.find_last_of('\n', good.size() - 2) + 1);
        CHECK_THROWS_AS(structures::parse_poscar(text),
                        structures::MalformedPoscar);
    }
    SUBCASE("non-numeric lattice") {
        auto text = good;
        text.replace(text.find("  "), 2, "  abc ");
        CHECK_THROWS_AS(structures::parse_poscar(text),
                        structures::MalformedPoscar);
    }
    SUBCASE("missing species line (VASP-4)") {
        std::string text = "c\n1.0\n4 0 0\n0 4 0\n0 0 4\n1\nDirect\n0 0 0\n";
        try {
            structures::parse_poscar(text);
            FAIL("expected MalformedPoscar");
        } catch (const structures::MalformedPoscar& e) {
            CHECK(e.line_number == 6);
        }
    }
    SUBCASE("trailing garbage counts as mismatch") {
        auto text = good + "  0.1 0.2 0.3\n";
        CHECK_THROWS_AS(structures::parse_poscar(text),
                        structures::MalformedPoscar);
    }
}

TEST_CASE("poscar parser rejects arbitrary garbage without crashing") {
    std::mt19937 rng(1234);
    std::uniform_int_distribution<int> len(0, 400);
    std::uniform_int_distribution<int> ch(32, 126);
    for (int i = 0; i < 200; ++i) {
        std::string garbage;
        const int n = len(rng);
        for (int k = 0; k < n; ++k)
            garbage += static_cast<char>(ch(rng));
        CHECK_THROWS_AS(structures::parse_poscar(garbage),
                        structures::MalformedPoscar);
    }
}

TEST_CASE("build_cubic geometry and counts") {
    const auto& reg = shipped_registry();
    auto c = chem::parse_formula("Cs2AgBiBr6");
    auto quads = chem::assign_oxidation_states(c, reg);
    REQUIRE(!quads.empty());
    auto s = structures::build_cubic(c, quads.front());

    // species counts are m * {2,1,1,6} with m = 4 (conventional cell)
    REQUIRE(s.species.size() == 4);
    CHECK(s.species[0] == structures::SpeciesBlock{"Cs", 8});
    CHECK(s.species[1] == structures::SpeciesBlock{"Ag", 4});
    CHECK(s.species[2] == structures::SpeciesBlock{"Bi", 4});
    CHECK(s.species[3] == structures::SpeciesBlock{"Br", 24});
    CHECK(s.atom_count() == 40);
    CHECK(s.coords.size() == 40);

    // the scaling factor is exactly the chem-core lattice parameter
    const auto& q = quads.front();
    const double r_b = chem::effective_b_radius(q.b.shannon_radius,
                                                q.b_prime.shannon_radius);
    const double t = chem::goldschmidt_t(q.a.shannon_radius, r_b,
                                         q.x.shannon_radius);
    CHECK(s.scale == chem::lattice_parameter(r_b, q.x.shannon_radius, t));
    CHECK(s.scale == doctest::Approx(5.755565870097168).epsilon(1e-12));

    for (const auto& v : s.coords)
        for (double x : v) {
            CHECK(x >= 0.0);
            CHECK(x < 1.0);
        }
    // cell edge is twice the pseudo-cubic parameter
    CHECK(s.lattice[0][0] == 2.0);
    CHECK(s.lattice[1][1] == 2.0);
    CHECK(s.lattice[2][2] == 2.0);
}

TEST_CASE("build_cubic with the trivial radii example") {
    // t = 1 when r_A = sqrt(2)(r_B + r_X) - r_X; a = 2 (0.7 + 1.4) = 4.2
    chem::AssignmentQuadruple q;
    q.a = {"Cs", 1, 12, std::sqrt(2.0) * 2.1 - 1.4};
    q.b = {"Ag", 1, 6, 0.7};
    q.b_prime = {"Bi", 3, 6, 0.7};
    q.x = {"Br", -1, 6, 1.4};
    auto s = structures::build_cubic({"Cs", "Ag", "Bi", "Br"}, q);
    CHECK(s.scale == doctest::Approx(4.2).epsilon(1e-12));
}

TEST_CASE("substitute_elements replaces labels role-wise only") {
    const auto& reg = shipped_registry();
    auto tmpl_comp = chem::parse_formula("Cs2AgBiCl6");
    auto quads = chem::assign_oxidation_states(tmpl_comp, reg);
    auto tmpl = structures::build_cubic(tmpl_comp, quads.front());

    SUBCASE("identity substitution") {
        auto out = structures::substitute_elements(tmpl, tmpl_comp);
        CHECK(out.species == tmpl.species);
        CHECK(out.coords == tmpl.coords);
        CHECK(out.lattice == tmpl.lattice);
        CHECK(out.scale == tmpl.scale);
    }
    SUBCASE("X swap changes only the 24 X labels") {
        auto out = structures::substitute_elements(
            tmpl, chem::parse_formula("Cs2AgBiBr6"));
        CHECK(out.lattice == tmpl.lattice);
        CHECK(out.coords == tmpl.coords); // bit-identical
        REQUIRE(out.species.size() == 4);
        CHECK(out.species[0].symbol == "Cs");
        CHECK(out.species[1].symbol == "Ag");
        CHECK(out.species[2].symbol == "Bi");
        CHECK(out.species[3].symbol == "Br");
        CHECK(out.species[3].count == 24);
    }
    SUBCASE("B/B' keep canonical role mapping") {
        auto out = structures::substitute_elements(
            tmpl, chem::Composition{"Rb", "Sb", "Ag", "F"});
        // canonical target: b = Ag, b' = Sb
        CHECK(out.species[1].symbol == "Ag");
        CHECK(out.species[2].symbol == "Sb");
    }
    SUBCASE("non-DP template fails role mapping") {
        Structure bad = tmpl;
        bad.species[0].count = 7; // breaks 2:1:1:6
        CHECK_THROWS_AS(structures::substitute_elements(
                            bad, chem::parse_formula("Cs2AgBiBr6")),
                        structures::RoleMappingFailure);
    }
}

TEST_CASE("nearest_references ranks by EIMD") {
    const auto& reg = shipped_registry();
    std::vector<structures::ReferenceCandidate> refs;
    for (const auto& f :
         {"Cs2AgBiCl6", "Ba2YNbO6", "Rb2AgBiBr6", "Cs2AgSbBr6", "Cs2AgBiBr6"})
        refs.push_back({chem::parse_formula(f), ""});

    auto query = chem::parse_formula("Cs2AgBiBr6");
    auto ranked = structures::nearest_references(query, refs, reg);
    REQUIRE(!ranked.empty());
    CHECK(chem::format_formula(ranked[0].candidate.composition) ==
          "Cs2AgBiBr6");
    CHECK(ranked[0].distance == doctest::Approx(0.0));
    for (size_t i = 1; i < ranked.size(); ++i)
        CHECK(ranked[i - 1].distance <= ranked[i].distance);
}

TEST_CASE("match_reference picks the nearer of two candidates") {
    const auto& reg = shipped_registry();
    std::vector<structures::ReferenceCandidate> refs = {
        {chem::parse_formula("Cs2AgBiCl6"), ""},
        {chem::parse_formula("Ba2YNbO6"), ""},
    };
    auto match = structures::match_reference(
        chem::parse_formula("Cs2AgBiBr6"), refs, reg);
    CHECK(chem::format_formula(match.candidate.composition) == "Cs2AgBiCl6");

    CHECK_THROWS_AS(structures::match_reference(
                        chem::parse_formula("Cs2AgBiBr6"), {}, reg),
                    structures::EmptyReferenceSet);
}

TEST_CASE("llm reranker picks a named candidate or falls back to rank 1") {
    const auto& reg = shipped_registry();
    std::vector<structures::ReferenceCandidate> refs = {
        {chem::parse_formula("Cs2AgBiCl6"), ""},
        {chem::parse_formula("Cs2AgSbCl6"), ""},
        {chem::parse_formula("Ba2YNbO6"), ""},
    };
    auto query = chem::parse_formula("Cs2AgBiBr6");

    SUBCASE("reranker override") {
        llm::ScriptedBackend backend(
            {"Cs2AgSbCl6 has the most appropriate structure."});
        llm::Session session(backend);
        auto match = structures::match_reference(
            query, refs, reg, structures::make_llm_reranker(session));
        CHECK(chem::format_formula(match.candidate.composition) ==
              "Cs2AgSbCl6");
    }
    SUBCASE("unrecognized reply falls back to rank 1") {
        llm::ScriptedBackend backend({"no idea, sorry"});
        llm::Session session(backend);
        auto match = structures::match_reference(
            query, refs, reg, structures::make_llm_reranker(session));
        CHECK(chem::format_formula(match.candidate.composition) ==
              "Cs2AgBiCl6");
    }
}

TEST_CASE("save_poscar writes atomically and loads back") {
    std::mt19937 rng(99);
    Structure s = random_structure(rng);
    auto dir = std::filesystem::temp_directory_path() / "pforge_structs";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "test.poscar").string();
    structures::save_poscar(s, path);
    CHECK(!std::filesystem::exists(path + ".tmp"));
    CHECK(structures::load_poscar(path) == s);
}
