#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pforge/chem/composition.hpp"
#include "pforge/chem/registry.hpp"

#include <nlohmann/json.hpp>

namespace pforge::conditions {

class ExtractionFailed : public Error {
public:
    explicit ExtractionFailed(const std::string& what) : Error(what) {}
};

enum class PropertyCondition { ThermodynamicStability };

/// Category tag prefix inside include_elements: "tag:rare_earth" expands
/// through registry flags, bare symbols match literally.
inline constexpr const char* kCategoryTagPrefix = "tag:";

/// The three condition classes a query can carry: a property target
/// (thermodynamic stability), element include/exclude constraints, and a
/// perovskite-type constraint on the X-site anion.
struct ConditionSet {
    std::optional<PropertyCondition> property;
    std::set<std::string> include_elements; // symbols or "tag:<flag>"
    std::set<std::string> exclude_elements; // symbols only
    std::optional<chem::PerovskiteType> perovskite_type;

    bool operator==(const ConditionSet&) const = default;

    /// Canonical JSON (stable key order) for logging and replay.
    nlohmann::json to_json() const;
    static ConditionSet from_json(const nlohmann::json& j);
};

enum class Verdict { Pass, Fail, Deferred };

std::string to_string(Verdict v);

struct ConditionVerdict {
    std::string condition; // "property", "include:<x>", "exclude:<x>", "type"
    Verdict verdict = Verdict::Deferred;
    std::string reason;
};

struct ConditionReport {
    std::vector<ConditionVerdict> verdicts;
    // True iff every non-deferred condition passed.
    bool overall_deterministic_pass = true;

    bool has_failure() const;
};

/// Pluggable extraction backend: the rule-based one is deterministic and
/// default, an LLM one can be layered on by the caller.
class ConditionExtractor {
public:
    virtual ~ConditionExtractor() = default;
    virtual ConditionSet extract(const std::string& query) = 0;
};

/// Keyword extractor covering the query templates this pipeline targets:
/// "thermodynamically stable", the halide/chalcogenide/oxide families,
/// "lead-free", and "contains rare earth elements".
class RuleBasedExtractor : public ConditionExtractor {
public:
    ConditionSet extract(const std::string& query) override;
};

/// Opt-in extractor that asks a chat gateway to formalize the query as a
/// fenced JSON ConditionSet. Unparseable output falls back to the rule
/// extractor; ExtractionFailed only when both fail.
class LlmExtractor : public ConditionExtractor {
public:
    /// `complete` maps a prompt to the assistant text (bind a
    /// llm::Session here; kept as a callable so this header stays free
    /// of gateway types).
    using CompleteFn = std::function<std::string(const std::string& prompt)>;
    explicit LlmExtractor(CompleteFn complete);
    ConditionSet extract(const std::string& query) override;

private:
    CompleteFn complete_;
    RuleBasedExtractor fallback_;
};

ConditionSet extract_conditions(const std::string& query,
                                ConditionExtractor& extractor);

/// Deterministic check of element and type conditions; the property
/// condition is always Deferred here (stability needs an evaluator).
ConditionReport check_conditions(const chem::Composition& c,
                                 const ConditionSet& cs,
                                 const chem::ElementRegistry& reg);

/// Query presets ("Table 1"), 1-based index 1..5.
const std::vector<std::string>& builtin_queries();

} // namespace pforge::conditions
