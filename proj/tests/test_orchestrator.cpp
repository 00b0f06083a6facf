#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pforge/orch/loop.hpp"
#include "pforge/structures/builder.hpp"
#include "test_util.hpp"

using namespace pforge;
using orch::CaseConfig;
using orch::Orchestrator;
using orch::ReferenceDb;

namespace {

const std::string kQueryHalide =
    "Recommend me thermodynamically stable halide double perovskites";
const std::string kQueryChalco =
    "Recommend me thermodynamically stable chalcogenide double perovskites";

std::string make_structures_dir(const std::vector<std::string>& formulas) {
    const auto& reg = shipped_registry();
    auto dir = std::filesystem::temp_directory_path() / "pforge_refs";
    std::filesystem::create_directories(dir);
    for (const auto& f : formulas) {
        auto c = chem::parse_formula(f);
        auto quads = chem::assign_oxidation_states(c, reg);
        REQUIRE(!quads.empty());
        auto s = structures::build_cubic(c, quads.front());
        structures::save_poscar(s, (dir / (chem::format_formula(c) + ".poscar")).string());
    }
    return dir.string();
}

ReferenceDb make_reference_db(const std::vector<std::string>& formulas,
                              const std::string& structures_dir = "") {
    ReferenceDb db;
    for (const auto& f : formulas) {
        orch::ReferenceEntry e;
        e.composition = chem::parse_formula(f);
        if (!structures_dir.empty()) {
            auto p = std::filesystem::path(structures_dir) /
                     (chem::format_formula(e.composition) + ".poscar");
            if (std::filesystem::exists(p))
                e.structure_path = p.string();
        }
        db.add(e);
    }
    return db;
}

std::string out_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("pforge_out_" + tag);
    std::filesystem::remove_all(dir);
    return dir.string();
}

} // namespace

TEST_CASE("is_known matches reference and history with B/B' symmetry") {
    auto db = make_reference_db({"Cs2AgBiBr6"});
    llm::ScriptedBackend backend({});
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(1),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    CHECK(orch.is_known(chem::parse_formula("Cs2AgBiBr6")));
    CHECK(orch.is_known(chem::parse_formula("Cs2BiAgBr6"))); // swapped B/B'
    CHECK(!orch.is_known(chem::parse_formula("Rb2AgSbF6")));
}

TEST_CASE("case 1: first novel proposal is accepted, zero rejections") {
    const auto refs = std::vector<std::string>{"Cs2AgBiCl6"};
    const auto sdir = make_structures_dir(refs);
    auto db = make_reference_db(refs, sdir);

    llm::ScriptedBackend backend({"Cs2AgBiBr6"});
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(1),
                      {&session, &shipped_registry(), nullptr, &db,
                       out_dir("case1")});
    auto rec = orch.run_generation(kQueryHalide);

    CHECK(rec.success);
    CHECK(rec.final_formula == "Cs2AgBiBr6");
    CHECK(rec.rejection_count == 0);
    CHECK(rec.iterations.size() == 1);
    // accepted composition entered the reference set
    CHECK(db.contains(chem::parse_formula("Cs2AgBiBr6")));
    // matcher path produced a POSCAR adapted from the Cl6 reference
    REQUIRE(!rec.structure_path.empty());
    auto s = structures::load_poscar(rec.structure_path);
    CHECK(s.species[3].symbol == "Br");
    CHECK(s.species[3].count == 24);
}

TEST_CASE("case 1: duplicates count as rejections and are recorded") {
    auto db = make_reference_db({"Cs2AgBiBr6"});
    // B/B'-swapped duplicate first, then a novel one
    llm::ScriptedBackend backend({"Cs2BiAgBr6", "Rb2AgSbF6"});
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(1),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    auto rec = orch.run_generation(kQueryHalide);

    CHECK(rec.success);
    CHECK(rec.final_formula == "Rb2AgSbF6");
    CHECK(rec.rejection_count == 1);
    REQUIRE(rec.iterations.size() == 2);
    CHECK(rec.iterations[0].duplicate);
    CHECK(rec.iterations[0].rejection_reason == "duplicate");
    CHECK(orch.history().contains(chem::parse_formula("Cs2AgBiBr6")));
}

TEST_CASE("case 2: LLM rejection produces a gradient, next proposal lands") {
    auto db = make_reference_db({});
    llm::ScriptedBackend backend({
        "Rb2InCuI6",                                               // proposal 1
        "```json\n{\"verdicts\": {\"stability\": \"fail\", "
        "\"perovskite_type\": \"pass\"}}\n```",                    // eval 1
        "replace B-site In with Ag",                               // gradient 1
        "Rb2AgSbF6",                                               // proposal 2
        "all conditions satisfied",                                // eval 2
    });
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(2),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    auto rec = orch.run_generation(kQueryHalide);

    CHECK(rec.success);
    CHECK(rec.final_formula == "Rb2AgSbF6");
    CHECK(rec.rejection_count == 1);
    REQUIRE(rec.iterations.size() == 2);
    CHECK(rec.iterations[0].rejection_reason == "llm_reject");
    REQUIRE(rec.iterations[0].gradient_directives.size() == 1);
    CHECK(rec.iterations[0].gradient_directives[0] ==
          "replace B-site In with Ag");
    CHECK(backend.calls() == 5);
}

TEST_CASE("case 2: proposal prompt carries history formulas verbatim") {
    auto db = make_reference_db({"Cs2AgBiBr6", "Cs2AgBiCl6"});
    llm::ScriptedBackend backend(
        {"Cs2AgBiBr6", "Cs2AgBiCl6", "Rb2AgSbF6", "all conditions satisfied"});
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(2),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    auto rec = orch.run_generation(kQueryHalide);
    REQUIRE(rec.success);
    CHECK(rec.rejection_count == 2);

    // The third proposal request must list both rejected formulas.
    const auto& transcript = session.transcript();
    REQUIRE(transcript.size() == 4);
    const std::string& third_prompt = transcript[2].messages.back().content;
    CHECK(third_prompt.find("Cs2AgBiBr6") != std::string::npos);
    CHECK(third_prompt.find("Cs2AgBiCl6") != std::string::npos);
}

TEST_CASE("case 3: tau-rejected proposals are refined until tau passes") {
    auto db = make_reference_db({});
    llm::ScriptedBackend backend({
        "Rb2ZrCrSe6",               // proposal 1 (tau = 5.14, rejected)
        "all conditions satisfied", // LLM eval 1 (type passes)
        "Ba2YNbS6",                 // proposal 2 (tau = 4.06, accepted)
        "all conditions satisfied", // LLM eval 2
    });
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(3),
                      {&session, &shipped_registry(), nullptr, &db,
                       out_dir("case3")});
    auto rec = orch.run_generation(kQueryChalco);

    CHECK(rec.success);
    CHECK(rec.final_formula == "Ba2NbYS6"); // canonical B order
    CHECK(rec.rejection_count == 1);
    REQUIRE(rec.iterations.size() == 2);
    CHECK(rec.iterations[0].rejection_reason == "tau_above_threshold");
    // the knowledge gradient is deterministic and names the threshold
    REQUIRE(!rec.iterations[0].gradient_directives.empty());
    CHECK(rec.iterations[0].gradient_directives[0].find("4.18") !=
          std::string::npos);

    // accepted composition satisfies tau < 4.18 on its first assignment
    auto rep = chem::tolerance_report(
        chem::parse_formula(rec.final_formula), shipped_registry());
    CHECK(rep.tau < chem::kTauStableThreshold);

    // Case 3 writes the formatter-path (cubic) structure
    REQUIRE(!rec.structure_path.empty());
    auto s = structures::load_poscar(rec.structure_path);
    CHECK(s.atom_count() == 40);
    CHECK(s.species[0].symbol == "Ba");
}

TEST_CASE("case 3 never accepts tau >= 4.18") {
    auto db = make_reference_db({});
    // All proposals fail the tolerance check; budget runs out.
    llm::ScriptedBackend backend({
        "Rb2ZrCrSe6", "all conditions satisfied",
        "Rb2ZrCrS6", "all conditions satisfied",   // tau 4.90 still > 4.18
        "Cs2ZrCrSe6", "all conditions satisfied",  // tau > 4.18 as well
    });
    llm::Session session(backend);
    CaseConfig cfg = CaseConfig::for_case(3);
    cfg.max_iterations = 3;
    Orchestrator orch(cfg, {&session, &shipped_registry(), nullptr, &db, ""});
    auto rec = orch.run_generation(kQueryChalco);

    CHECK(!rec.success);
    CHECK(rec.failure_reason.find("budget") != std::string::npos);
    for (const auto& it : rec.iterations)
        CHECK(!it.accepted);
}

TEST_CASE("deterministic re-check overrides a hacked LLM acceptance") {
    auto db = make_reference_db({});
    llm::ScriptedBackend backend({
        "Ba2YNbS6",                 // proposal 1: chalcogenide, not halide
        "all conditions satisfied", // LLM eval wrongly passes it
        "Cs2AgBiBr6",               // proposal 2: actually halide
        "all conditions satisfied", // eval 2
    });
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(2),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    auto rec = orch.run_generation(kQueryHalide);

    CHECK(rec.success);
    CHECK(rec.final_formula == "Cs2AgBiBr6");
    REQUIRE(rec.iterations.size() == 2);
    CHECK(rec.iterations[0].rejection_reason.find("recheck_failed") == 0);
    CHECK(rec.iterations[0].llm_recheck_disagreement);

    // final acceptance passes the deterministic check
    auto cs = rec.condition_set;
    auto rep = conditions::check_conditions(
        chem::parse_formula(rec.final_formula), cs, shipped_registry());
    CHECK(rep.overall_deterministic_pass);
}

TEST_CASE("unparseable proposals fail the run without throwing") {
    auto db = make_reference_db({});
    llm::ScriptedBackend backend({"no formula here", "still nothing"});
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(1),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    auto rec = orch.run_generation(kQueryHalide);
    CHECK(!rec.success);
    CHECK(!rec.failure_reason.empty());
}

TEST_CASE("batch_run shares history and reference growth") {
    auto db = make_reference_db({});
    llm::ScriptedBackend backend({
        "Cs2AgBiBr6",  // run 1 accepted
        "Cs2AgBiBr6",  // run 2: now a duplicate
        "Cs2AgBiCl6",  // run 2 accepted
        "Rb2AgSbF6",   // run 3 accepted
    });
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(1),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    auto records = orch.batch_run(kQueryHalide, 3);

    REQUIRE(records.size() == 3);
    CHECK(records[0].rejection_count == 0);
    CHECK(records[1].rejection_count == 1);
    CHECK(records[2].rejection_count == 0);

    auto stats = orch::compute_stats(records);
    CHECK(stats.runs == 3);
    CHECK(stats.accepted == 3);
    CHECK(stats.mean_rejections_per_accepted ==
          doctest::Approx(1.0 / 3.0)); // hand-counted from the script
    CHECK(db.size() == 3);
}

TEST_CASE("replay of a recorded session reproduces the record byte-for-byte") {
    const auto transcript_path =
        (std::filesystem::temp_directory_path() / "pforge_replay_loop.jsonl")
            .string();
    std::filesystem::remove(transcript_path);

    std::string first_json;
    {
        auto db = make_reference_db({});
        llm::ScriptedBackend backend({
            "Rb2InCuI6",
            "```json\n{\"verdicts\": {\"stability\": \"fail\", "
            "\"perovskite_type\": \"pass\"}}\n```",
            "replace B-site In with Ag",
            "Rb2AgSbF6",
            "all conditions satisfied",
        });
        llm::Session session(backend, transcript_path);
        Orchestrator orch(CaseConfig::for_case(2),
                          {&session, &shipped_registry(), nullptr, &db, ""});
        first_json = orch.run_generation(kQueryHalide).to_canonical_string();
    }
    {
        auto db = make_reference_db({});
        auto replay = llm::ReplayBackend::from_file(transcript_path);
        llm::Session session(replay);
        Orchestrator orch(CaseConfig::for_case(2),
                          {&session, &shipped_registry(), nullptr, &db, ""});
        auto replay_json =
            orch.run_generation(kQueryHalide).to_canonical_string();
        CHECK(replay_json == first_json);
    }
}

TEST_CASE("case 2 + ml: surrogate rejection drives the refinement") {
    const auto& reg = shipped_registry();
    auto db = make_reference_db({});
    eval::KnnSurrogate surrogate(
        {{chem::parse_formula("Rb2InCuI6"), eval::SurrogateClass::Unstable},
         {chem::parse_formula("Rb2AgSbF6"),
          eval::SurrogateClass::StableOrMetastable}},
        reg, 1);
    llm::ScriptedBackend backend({
        "Rb2InCuI6",                // proposal 1
        "all conditions satisfied", // llm eval 1 passes
        "Rb2AgSbF6",                // proposal 2
        "all conditions satisfied", // llm eval 2
    });
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(2, /*with_ml=*/true),
                      {&session, &reg, &surrogate, &db, ""});
    auto rec = orch.run_generation(kQueryHalide);

    CHECK(rec.success);
    CHECK(rec.final_formula == "Rb2AgSbF6");
    CHECK(rec.rejection_count == 1);
    REQUIRE(rec.iterations.size() == 2);
    CHECK(rec.iterations[0].rejection_reason == "ml_reject");
    // the ML gradient is deterministic (no extra LLM call)
    CHECK(backend.calls() == 4);
    REQUIRE(!rec.iterations[0].gradient_directives.empty());
    CHECK(rec.iterations[0].gradient_directives[0].find("surrogate") !=
          std::string::npos);
}

TEST_CASE("case 3 lead-free query walks element and tau rejections") {
    const std::string query =
        "Recommend me thermodynamically stable, lead-free halide double "
        "perovskite";
    auto db = make_reference_db({});
    llm::ScriptedBackend backend({
        "Cs2PbAgBr6", // proposal 1: contains Pb
        "```json\n{\"verdicts\": {\"elements\": \"fail\", "
        "\"perovskite_type\": \"pass\"}}\n```",
        "replace B-site Pb with Cu", // llm gradient 1
        "Cs2CuSbI6",                 // proposal 2: tau 4.61 -> knowledge reject
        "all conditions satisfied",  // llm eval 2
        "Cs2CuSbF6",                 // proposal 3: tau 3.47 -> accept
        "all conditions satisfied",  // llm eval 3
    });
    llm::Session session(backend);
    Orchestrator orch(CaseConfig::for_case(3),
                      {&session, &shipped_registry(), nullptr, &db, ""});
    auto rec = orch.run_generation(query);

    CHECK(rec.success);
    CHECK(rec.final_formula == "Cs2CuSbF6");
    CHECK(rec.rejection_count == 2);
    REQUIRE(rec.iterations.size() == 3);
    CHECK(rec.iterations[0].rejection_reason == "llm_reject");
    CHECK(rec.iterations[1].rejection_reason == "tau_above_threshold");
    // knowledge gradient for a halide suggests the smaller-radius anions
    REQUIRE(!rec.iterations[1].gradient_directives.empty());
    CHECK(rec.iterations[1].gradient_directives.back().find("F") !=
          std::string::npos);
    // and the accepted candidate is lead-free halide below threshold
    CHECK(rec.final_formula.find("Pb") == std::string::npos);
    CHECK(chem::tolerance_report(chem::parse_formula(rec.final_formula),
                                 shipped_registry())
              .tau < chem::kTauStableThreshold);
}

TEST_CASE("config invariants are enforced") {
    auto db = make_reference_db({});
    llm::ScriptedBackend backend({});
    llm::Session session(backend);
    CaseConfig cfg = CaseConfig::for_case(2, /*with_ml=*/true);
    CHECK_THROWS_AS(
        Orchestrator(cfg, {&session, &shipped_registry(), nullptr, &db, ""}),
        Error);
    CHECK_THROWS_AS(CaseConfig::for_case(4), Error);

    CaseConfig zero = CaseConfig::for_case(1);
    zero.max_iterations = 0;
    CHECK_THROWS_AS(
        Orchestrator(zero, {&session, &shipped_registry(), nullptr, &db, ""}),
        Error);
}
