#include "pforge/conditions/conditions.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace pforge::conditions {

using chem::PerovskiteType;

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool contains_phrase(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

std::optional<PerovskiteType> type_from_string(const std::string& s) {
    if (s == "halide") return PerovskiteType::Halide;
    if (s == "chalcogenide") return PerovskiteType::Chalcogenide;
    if (s == "oxide") return PerovskiteType::Oxide;
    if (s == "other") return PerovskiteType::Other;
    return std::nullopt;
}

} // namespace

std::string to_string(Verdict v) {
    switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Deferred: return "deferred";
    }
    return "deferred";
}

nlohmann::json ConditionSet::to_json() const {
    nlohmann::json j;
    j["property"] = property ? nlohmann::json("thermodynamic_stability")
                             : nlohmann::json(nullptr);
    j["include_elements"] = include_elements;
    j["exclude_elements"] = exclude_elements;
    j["perovskite_type"] = perovskite_type
                               ? nlohmann::json(chem::to_string(*perovskite_type))
                               : nlohmann::json(nullptr);
    return j;
}

ConditionSet ConditionSet::from_json(const nlohmann::json& j) {
    ConditionSet cs;
    if (j.contains("property") && !j["property"].is_null())
        cs.property = PropertyCondition::ThermodynamicStability;
    if (j.contains("include_elements"))
        for (const auto& e : j["include_elements"])
            cs.include_elements.insert(e.get<std::string>());
    if (j.contains("exclude_elements"))
        for (const auto& e : j["exclude_elements"])
            cs.exclude_elements.insert(e.get<std::string>());
    if (j.contains("perovskite_type") && !j["perovskite_type"].is_null())
        cs.perovskite_type = type_from_string(j["perovskite_type"].get<std::string>());
    return cs;
}

bool ConditionReport::has_failure() const {
    return std::any_of(verdicts.begin(), verdicts.end(), [](const auto& v) {
        return v.verdict == Verdict::Fail;
    });
}

ConditionSet RuleBasedExtractor::extract(const std::string& query) {
    const std::string q = lowercase(query);
    ConditionSet cs;
    bool matched = false;

    if (contains_phrase(q, "thermodynamically stable") ||
        contains_phrase(q, "thermodynamic stability")) {
        cs.property = PropertyCondition::ThermodynamicStability;
        matched = true;
    }
    for (const auto& [word, type] :
         {std::pair{"halide", PerovskiteType::Halide},
          std::pair{"chalcogenide", PerovskiteType::Chalcogenide},
          std::pair{"oxide", PerovskiteType::Oxide}}) {
        if (contains_phrase(q, word)) {
            cs.perovskite_type = type;
            matched = true;
            break;
        }
    }
    if (contains_phrase(q, "lead-free") || contains_phrase(q, "lead free")) {
        cs.exclude_elements.insert("Pb");
        matched = true;
    }
    if (contains_phrase(q, "rare earth") || contains_phrase(q, "rare-earth")) {
        cs.include_elements.insert(std::string(kCategoryTagPrefix) + "rare_earth");
        matched = true;
    }
    if (!matched)
        throw ExtractionFailed("no recognizable condition in query: " + query);
    return cs;
}

LlmExtractor::LlmExtractor(CompleteFn complete)
    : complete_(std::move(complete)) {}

ConditionSet LlmExtractor::extract(const std::string& query) {
    const std::string prompt =
        "Formalize the materials-generation query below as a fenced JSON "
        "object with keys: property (\"thermodynamic_stability\" or null), "
        "include_elements (symbols or \"tag:rare_earth\"), exclude_elements "
        "(symbols), perovskite_type (\"halide\"|\"chalcogenide\"|\"oxide\" or "
        "null).\nQuery: " +
        query;
    const std::string response = complete_(prompt);

    static const std::regex fence(R"(```(?:json)?\s*([\s\S]*?)```)");
    std::smatch m;
    std::string payload;
    if (std::regex_search(response, m, fence))
        payload = m[1].str();
    else
        payload = response; // maybe bare JSON
    try {
        auto cs = ConditionSet::from_json(nlohmann::json::parse(payload));
        // include/exclude disjointness is a ConditionSet invariant
        for (const auto& e : cs.include_elements)
            if (cs.exclude_elements.count(e))
                throw ExtractionFailed("LLM produced overlapping include and "
                                       "exclude sets");
        return cs;
    } catch (const nlohmann::json::exception&) {
        // fall back to the deterministic rules
    }
    return fallback_.extract(query);
}

ConditionSet extract_conditions(const std::string& query,
                                ConditionExtractor& extractor) {
    if (query.empty())
        throw ExtractionFailed("empty query");
    return extractor.extract(query);
}

ConditionReport check_conditions(const chem::Composition& comp,
                                 const ConditionSet& cs,
                                 const chem::ElementRegistry& reg) {
    const chem::Composition c = chem::canonicalize(comp);
    const std::vector<std::string> members = {c.a_site, c.b_site,
                                              c.b_prime_site, c.x_site};
    auto contains_element = [&](const std::string& sym) {
        return std::find(members.begin(), members.end(), sym) != members.end();
    };
    auto contains_flagged = [&](const std::string& flag) {
        return std::any_of(members.begin(), members.end(), [&](const auto& m) {
            return reg.contains(m) && reg.entry(m).has_flag(flag);
        });
    };

    ConditionReport rep;
    if (cs.property) {
        rep.verdicts.push_back({"property", Verdict::Deferred,
                                "stability requires an evaluator"});
    }
    for (const auto& inc : cs.include_elements) {
        bool ok;
        if (inc.rfind(kCategoryTagPrefix, 0) == 0)
            ok = contains_flagged(inc.substr(std::string(kCategoryTagPrefix).size()));
        else
            ok = contains_element(inc);
        rep.verdicts.push_back({"include:" + inc,
                                ok ? Verdict::Pass : Verdict::Fail,
                                ok ? "required element present"
                                   : "required element missing"});
    }
    for (const auto& exc : cs.exclude_elements) {
        bool bad = contains_element(exc);
        rep.verdicts.push_back({"exclude:" + exc,
                                bad ? Verdict::Fail : Verdict::Pass,
                                bad ? "excluded element " + exc + " present"
                                    : "excluded element absent"});
    }
    if (cs.perovskite_type) {
        auto actual = chem::classify_type(c);
        bool ok = actual == *cs.perovskite_type;
        rep.verdicts.push_back({"type", ok ? Verdict::Pass : Verdict::Fail,
                                "x-site " + c.x_site + " gives " +
                                    chem::to_string(actual) + ", wanted " +
                                    chem::to_string(*cs.perovskite_type)});
    }
    rep.overall_deterministic_pass = !rep.has_failure();
    return rep;
}

const std::vector<std::string>& builtin_queries() {
    static const std::vector<std::string> queries = {
        "Recommend me thermodynamically stable halide double perovskites",
        "Recommend me thermodynamically stable chalcogenide double perovskites",
        "Recommend me thermodynamically stable oxide double perovskites",
        "Recommend me thermodynamically stable, lead-free halide double perovskite",
        "Recommend me thermodynamically stable oxide double perovskite that "
        "contains rare earth elements",
    };
    return queries;
}

} // namespace pforge::conditions
