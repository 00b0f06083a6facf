#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pforge/conditions/conditions.hpp"
#include "pforge/eval/evaluators.hpp"
#include "pforge/orch/reference_db.hpp"

namespace pforge::orch {

class ProposalParseFailure : public Error {
public:
    explicit ProposalParseFailure(const std::string& what) : Error(what) {}
};

/// Which evaluators run, and the iteration budget. Case 1 = no
/// evaluators, Case 2 = LLM, Case 3 = LLM + knowledge; the ML evaluator
/// can be switched on for any of them.
struct CaseConfig {
    bool llm_eval_enabled = false;
    bool knowledge_eval_enabled = false;
    bool ml_eval_enabled = false;
    int max_iterations = 50;
    double tau_threshold = chem::kTauStableThreshold;
    std::string label = "case1";

    static CaseConfig for_case(int case_number, bool with_ml = false);
};

/// Append-only log of rejected (or already-known) compositions, the
/// reasons, and the gradients issued. No canonical duplicates.
class HistoryBuffer {
public:
    struct Entry {
        chem::Composition composition;
        std::string reason;
        std::vector<eval::TextGradient> gradients;
    };

    bool contains(const chem::Composition& c) const;
    /// Appends unless the canonical composition is already present.
    bool add(Entry entry);
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<std::string> formulas() const;
    size_t size() const { return entries_.size(); }

private:
    std::vector<Entry> entries_;
    std::set<std::string> seen_;
};

struct IterationRecord {
    std::string formula; // canonical
    bool duplicate = false;
    bool accepted = false;
    std::string rejection_reason; // empty when accepted
    bool llm_recheck_disagreement = false;
    std::vector<std::string> evaluator_summaries;
    std::vector<std::string> gradient_directives;

    nlohmann::json to_json() const;
};

/// Full trace of one accepted (or failed) generation.
struct GenerationRecord {
    std::string query;
    conditions::ConditionSet condition_set;
    std::string case_label;
    std::vector<IterationRecord> iterations;
    int rejection_count = 0;
    bool success = false;
    std::string final_formula;   // empty on failure
    std::string failure_reason;  // empty on success
    std::string structure_path;  // empty when no file was written
    std::string structure_error; // set when finalization failed post-accept

    /// Canonical JSON (stable key order, no timestamps), so a replayed
    /// session serializes byte-identically.
    nlohmann::json to_json() const;
    std::string to_canonical_string() const { return to_json().dump(2); }
};

struct Backends {
    llm::Session* gateway = nullptr;
    const chem::ElementRegistry* registry = nullptr;
    eval::SurrogateModel* surrogate = nullptr;
    ReferenceDb* reference_db = nullptr;
    /// Directory for accepted-candidate POSCARs; empty disables writes.
    std::string structures_out_dir;
};

struct BatchStats {
    size_t runs = 0;
    size_t accepted = 0;
    double mean_rejections_per_accepted = 0.0;
};

BatchStats compute_stats(const std::vector<GenerationRecord>& records);

/// The propose -> compare -> evaluate -> gradient loop of one query.
/// One run is sequential by construction; a batch shares this object's
/// history and reference state.
class Orchestrator {
public:
    Orchestrator(CaseConfig config, Backends backends);

    /// True iff the canonical form is in the reference database or the
    /// history buffer.
    bool is_known(const chem::Composition& c) const;

    /// One proposal round-trip: prompt = conditions + concatenated
    /// gradient directives + history exclusions; the reply is parsed
    /// with parse_formula, with one corrective re-prompt.
    chem::Composition propose(const std::string& query,
                              const conditions::ConditionSet& cs,
                              const std::vector<eval::TextGradient>& gradients);

    GenerationRecord run_generation(const std::string& query);
    std::vector<GenerationRecord> batch_run(const std::string& query, size_t n);

    const HistoryBuffer& history() const { return history_; }
    const CaseConfig& config() const { return config_; }

private:
    /// Emit the accepted composition's POSCAR: matcher path (nearest
    /// reference + element substitution) for Cases 1-2, direct cubic
    /// construction for Case 3. Returns the file path, or "" when no
    /// output directory is configured.
    std::string finalize_structure(const chem::Composition& c);

    CaseConfig config_;
    Backends backends_;
    HistoryBuffer history_;
};

} // namespace pforge::orch
