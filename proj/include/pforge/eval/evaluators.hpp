#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pforge/chem/tolerance.hpp"
#include "pforge/conditions/conditions.hpp"
#include "pforge/eval/surrogate.hpp"
#include "pforge/llm/gateway.hpp"

namespace pforge::eval {

class EvaluatorParseFailure : public Error {
public:
    explicit EvaluatorParseFailure(const std::string& what) : Error(what) {}
};

enum class EvaluatorSource { LLM, Knowledge, ML };
enum class EvalVerdict { Accept, Reject };

std::string to_string(EvaluatorSource s);

/// One evaluator's text-based loss: verdict plus rationale, with the
/// structured payload matching the source (tolerance report for the
/// knowledge evaluator, class prediction for the ML one, per-condition
/// verdicts for the LLM one).
struct EvaluationResult {
    EvaluatorSource source = EvaluatorSource::LLM;
    EvalVerdict verdict = EvalVerdict::Accept;
    std::string loss_text;

    std::map<std::string, bool> condition_verdicts;  // LLM
    std::optional<chem::ToleranceReport> tolerance;  // Knowledge
    std::optional<SurrogatePrediction> prediction;   // ML

    bool accepted() const { return verdict == EvalVerdict::Accept; }
};

/// Improvement directive derived from a rejecting evaluation: free-text
/// instruction plus per-site substitution hints ("A"/"B"/"B'"/"X" ->
/// candidate elements, best first).
struct TextGradient {
    EvaluatorSource source = EvaluatorSource::LLM;
    std::string directive_text;
    std::map<std::string, std::vector<std::string>> site_hints;
};

/// Ask the gateway whether the composition satisfies the conditions
/// (optionally excluding the stability condition, which the knowledge
/// evaluator owns in Case 3). Rejects if any checked condition fails.
/// Unparseable output is retried once, then raises
/// EvaluatorParseFailure.
EvaluationResult evaluate_llm(const chem::Composition& c,
                              const conditions::ConditionSet& cs,
                              llm::Session& gateway,
                              bool exclude_stability = false);

/// Compute the tolerance factor on the first neutral oxidation
/// assignment; Accept iff tau < threshold. Throws NoNeutralAssignment /
/// SingularRatio from the chemistry layer.
EvaluationResult
evaluate_knowledge(const chem::Composition& c, const chem::ElementRegistry& reg,
                   double threshold = chem::kTauStableThreshold);

/// Accept iff the surrogate predicts stable-or-metastable.
EvaluationResult evaluate_ml(const chem::Composition& c,
                             const SurrogateModel& model);

/// LLM-phrased directive for a rejecting LLM evaluation; substitution
/// hints are parsed from the response where present (lenient).
TextGradient gradient_llm(const EvaluationResult& er,
                          const chem::Composition& c,
                          const std::vector<std::string>& history_formulas,
                          llm::Session& gateway);

/// Deterministic directive from the tolerance factor's analytic
/// structure: tau rises with r_X, so smaller-radius X candidates within
/// the allowed anion family are suggested, along with B/B' substitutions
/// found by a registry scan. Every emitted suggestion strictly lowers
/// tau.
TextGradient gradient_knowledge(const EvaluationResult& er,
                                const chem::Composition& c,
                                const conditions::ConditionSet& cs,
                                const chem::ElementRegistry& reg);

struct MlGradientOptions {
    // Candidate elements per scan; empty means every registry element.
    std::vector<std::string> candidate_pool;
    size_t max_suggestions = 5;
    llm::Session* phrasing_gateway = nullptr; // optional LLM paraphrase
};

/// Re-score single-site substitutions with the surrogate and suggest the
/// top score-improving ones, sorted by predicted stability descending.
TextGradient gradient_ml(const EvaluationResult& er, const chem::Composition& c,
                         const SurrogateModel& model,
                         const chem::ElementRegistry& reg,
                         const MlGradientOptions& opts = {});

} // namespace pforge::eval
