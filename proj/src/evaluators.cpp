#include "pforge/eval/evaluators.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

namespace pforge::eval {

using chem::Composition;
using conditions::ConditionSet;

namespace {

std::string join(const std::vector<std::string>& parts,
                 const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out += sep;
        out += parts[i];
    }
    return out;
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Extract the first ```json fenced block, if any.
std::optional<std::string> fenced_json(const std::string& text) {
    static const std::regex fence(R"(```(?:json)?\s*([\s\S]*?)```)");
    std::smatch m;
    if (std::regex_search(text, m, fence))
        return m[1].str();
    return std::nullopt;
}

std::string describe_conditions(const ConditionSet& cs, bool exclude_stability) {
    std::vector<std::string> parts;
    if (cs.property && !exclude_stability)
        parts.push_back("- stability: the composition must be thermodynamically "
                        "stable (negative formation energy, low energy above hull)");
    for (const auto& inc : cs.include_elements) {
        if (inc.rfind(conditions::kCategoryTagPrefix, 0) == 0)
            parts.push_back("- elements: must contain at least one " +
                            inc.substr(4) + " element");
        else
            parts.push_back("- elements: must contain " + inc);
    }
    for (const auto& exc : cs.exclude_elements)
        parts.push_back("- elements: must not contain " + exc);
    if (cs.perovskite_type)
        parts.push_back("- perovskite_type: must be a " +
                        chem::to_string(*cs.perovskite_type) +
                        " double perovskite (X-site anion decides the family)");
    return join(parts, "\n");
}

std::vector<std::string> checked_condition_keys(const ConditionSet& cs,
                                                bool exclude_stability) {
    std::vector<std::string> keys;
    if (cs.property && !exclude_stability)
        keys.push_back("stability");
    if (!cs.include_elements.empty() || !cs.exclude_elements.empty())
        keys.push_back("elements");
    if (cs.perovskite_type)
        keys.push_back("perovskite_type");
    return keys;
}

/// Parse an evaluator response into per-condition verdicts. Primary
/// format is a fenced JSON object {"verdicts": {key: "pass"|"fail"}};
/// free text with a clear overall verdict is accepted leniently.
std::optional<std::map<std::string, bool>>
parse_llm_verdicts(const std::string& response,
                   const std::vector<std::string>& keys) {
    if (auto block = fenced_json(response)) {
        try {
            auto j = nlohmann::json::parse(*block);
            const auto& verdicts = j.contains("verdicts") ? j["verdicts"] : j;
            std::map<std::string, bool> out;
            for (const auto& [key, val] : verdicts.items()) {
                if (val.is_boolean())
                    out[key] = val.get<bool>();
                else if (val.is_string())
                    out[key] = lowercase(val.get<std::string>()) == "pass";
            }
            if (!out.empty())
                return out;
        } catch (const nlohmann::json::exception&) {
            // fall through to the lenient text scan
        }
    }

    const std::string low = lowercase(response);
    const bool negative = low.find("violat") != std::string::npos ||
                          low.find("not satisfied") != std::string::npos ||
                          low.find("fails") != std::string::npos ||
                          low.find("does not satisfy") != std::string::npos;
    if (negative) {
        std::map<std::string, bool> out;
        for (const auto& k : keys)
            out[k] = true;
        bool any = false;
        auto flag = [&](const char* needle, const char* key) {
            if (low.find(needle) != std::string::npos && out.count(key)) {
                out[key] = false;
                any = true;
            }
        };
        flag("lead", "elements");
        flag("element", "elements");
        flag("rare earth", "elements");
        flag("halide", "perovskite_type");
        flag("chalcogenide", "perovskite_type");
        flag("oxide", "perovskite_type");
        flag("perovskite-type", "perovskite_type");
        flag("type condition", "perovskite_type");
        flag("stab", "stability");
        if (!any && !out.empty()) {
            // A rejection whose reason we cannot attribute: charge the
            // first checked condition so the verdict stays a rejection.
            out.begin()->second = false;
            any = true;
        }
        if (any)
            return out;
    }
    if (low.find("satisfied") != std::string::npos ||
        low.find("all conditions") != std::string::npos ||
        low.find("accept") != std::string::npos) {
        std::map<std::string, bool> out;
        for (const auto& k : keys)
            out[k] = true;
        return out;
    }
    return std::nullopt;
}

} // namespace

std::string to_string(EvaluatorSource s) {
    switch (s) {
    case EvaluatorSource::LLM: return "llm";
    case EvaluatorSource::Knowledge: return "knowledge";
    case EvaluatorSource::ML: return "ml";
    }
    return "llm";
}

EvaluationResult evaluate_llm(const Composition& c, const ConditionSet& cs,
                              llm::Session& gateway, bool exclude_stability) {
    const std::string formula = chem::format_formula(c);
    const auto keys = checked_condition_keys(cs, exclude_stability);

    std::vector<llm::ChatMessage> messages = {
        {"system",
         "You evaluate whether a proposed double perovskite composition "
         "satisfies the user's conditions. Answer with a fenced JSON object: "
         "```json\n{\"verdicts\": {\"<condition>\": \"pass\"|\"fail\"}}\n``` "
         "using exactly the condition keys given."},
        {"user", "Composition: " + formula + "\nConditions:\n" +
                     describe_conditions(cs, exclude_stability) +
                     "\nCondition keys: [" + join(keys, ", ") + "]"},
    };

    std::optional<std::map<std::string, bool>> verdicts;
    std::string response;
    for (int attempt = 0; attempt < 2 && !verdicts; ++attempt) {
        if (attempt == 1)
            messages.push_back(
                {"user", "Your previous answer was not parseable. Reply with "
                         "only the fenced JSON verdict object."});
        response = gateway.complete(messages, {});
        verdicts = parse_llm_verdicts(response, keys);
    }
    if (!verdicts)
        throw EvaluatorParseFailure("LLM evaluator output unparseable after "
                                    "retry for " +
                                    formula);

    EvaluationResult er;
    er.source = EvaluatorSource::LLM;
    er.condition_verdicts = *verdicts;
    const bool all_pass =
        std::all_of(verdicts->begin(), verdicts->end(),
                    [](const auto& kv) { return kv.second; });
    er.verdict = all_pass ? EvalVerdict::Accept : EvalVerdict::Reject;
    er.loss_text = response;
    return er;
}

EvaluationResult evaluate_knowledge(const Composition& c,
                                    const chem::ElementRegistry& reg,
                                    double threshold) {
    auto report = chem::tolerance_report(c, reg, threshold);
    EvaluationResult er;
    er.source = EvaluatorSource::Knowledge;
    er.tolerance = report;
    er.verdict = report.stable_predicted ? EvalVerdict::Accept
                                         : EvalVerdict::Reject;

    std::ostringstream text;
    text << "tolerance factor tau = " << report.tau << " for "
         << chem::format_formula(c) << " (threshold " << threshold
         << ", assignment " << report.assignment.a.element << "^"
         << report.assignment.a.oxidation_state << " "
         << report.assignment.b.element << "^"
         << report.assignment.b.oxidation_state << " "
         << report.assignment.b_prime.element << "^"
         << report.assignment.b_prime.oxidation_state << " "
         << report.assignment.x.element << "^"
         << report.assignment.x.oxidation_state << "): "
         << (report.stable_predicted ? "predicted stable"
                                     : "predicted unstable");
    er.loss_text = text.str();
    return er;
}

EvaluationResult evaluate_ml(const Composition& c,
                             const SurrogateModel& model) {
    auto pred = model.predict(c);
    EvaluationResult er;
    er.source = EvaluatorSource::ML;
    er.prediction = pred;
    er.verdict = pred.cls == SurrogateClass::StableOrMetastable
                     ? EvalVerdict::Accept
                     : EvalVerdict::Reject;
    std::ostringstream text;
    text << "surrogate predicts " << to_string(pred.cls) << " with confidence "
         << pred.confidence << " for " << chem::format_formula(c);
    er.loss_text = text.str();
    return er;
}

TextGradient gradient_llm(const EvaluationResult& er, const Composition& c,
                          const std::vector<std::string>& history_formulas,
                          llm::Session& gateway) {
    if (er.source != EvaluatorSource::LLM || er.accepted())
        throw Error("gradient_llm needs a rejecting LLM evaluation");

    std::vector<std::string> failed;
    for (const auto& [key, pass] : er.condition_verdicts)
        if (!pass)
            failed.push_back(key);

    std::vector<llm::ChatMessage> messages = {
        {"system",
         "You coach a composition-proposal agent. Given a rejected double "
         "perovskite and the unmet conditions, say which site elements to "
         "modify and to what. Optionally include a fenced JSON object "
         "{\"hints\": {\"A\"|\"B\"|\"B'\"|\"X\": [\"El\", ...]}}."},
        {"user", "Rejected composition: " + chem::format_formula(c) +
                     "\nUnmet conditions: [" + join(failed, ", ") +
                     "]\nEvaluator notes: " + er.loss_text +
                     "\nAlready tried (do not repeat): [" +
                     join(history_formulas, ", ") + "]"},
    };
    const std::string response = gateway.complete(messages, {});

    TextGradient grad;
    grad.source = EvaluatorSource::LLM;
    grad.directive_text = response;

    if (auto block = fenced_json(response)) {
        try {
            auto j = nlohmann::json::parse(*block);
            if (j.contains("hints"))
                for (const auto& [site, arr] : j["hints"].items()) {
                    if (site != "A" && site != "B" && site != "B'" &&
                        site != "X")
                        continue;
                    for (const auto& el : arr)
                        if (el.is_string() &&
                            chem::is_element_symbol(el.get<std::string>()))
                            grad.site_hints[site].push_back(
                                el.get<std::string>());
                }
        } catch (const nlohmann::json::exception&) {
            // hints stay empty; the directive text still stands
        }
    }
    if (grad.site_hints.empty()) {
        // "replace B-site In with Ag" / "substitute X-site I with Cl"
        static const std::regex pat(
            R"((?:replace|substitute)\s+(?:the\s+)?([ABX]'?)[- ]site\s+([A-Z][a-z]?)\s+(?:with|by)\s+([A-Z][a-z]?))");
        for (auto it = std::sregex_iterator(response.begin(), response.end(), pat);
             it != std::sregex_iterator(); ++it)
            grad.site_hints[(*it)[1].str()].push_back((*it)[3].str());
    }
    return grad;
}

TextGradient gradient_knowledge(const EvaluationResult& er,
                                const Composition& comp,
                                const ConditionSet& cs,
                                const chem::ElementRegistry& reg) {
    if (er.source != EvaluatorSource::Knowledge || er.accepted() ||
        !er.tolerance)
        throw Error("gradient_knowledge needs a rejecting knowledge evaluation");
    const Composition c = chem::canonicalize(comp);
    const auto& report = *er.tolerance;
    const double tau = report.tau;
    const double threshold = report.threshold;

    TextGradient grad;
    grad.source = EvaluatorSource::Knowledge;

    // X-site candidates: tau is strictly increasing in r_X, so any
    // same-family anion with a smaller radius lowers tau. A type
    // condition restricts the family outright.
    std::vector<std::string> x_family;
    if (cs.perovskite_type) {
        switch (*cs.perovskite_type) {
        case chem::PerovskiteType::Halide: x_family = {"F", "Cl", "Br", "I"}; break;
        case chem::PerovskiteType::Chalcogenide: x_family = {"S", "Se", "Te"}; break;
        case chem::PerovskiteType::Oxide: x_family = {"O"}; break;
        case chem::PerovskiteType::Other: break;
        }
    } else {
        // Same default anion charge as the current X keeps the charge
        // balance intact.
        auto cur_default = chem::ElementRegistry::default_anion_state(c.x_site);
        for (const auto& sym : reg.symbols())
            if (chem::ElementRegistry::default_anion_state(sym) == cur_default)
                x_family.push_back(sym);
    }

    struct Candidate {
        std::string element;
        double tau_after;
    };
    auto tau_of = [&](const Composition& cand) -> std::optional<double> {
        try {
            return chem::tolerance_report(cand, reg, threshold).tau;
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    auto distinct = [](const Composition& cand) {
        return cand.a_site != cand.b_site && cand.a_site != cand.b_prime_site &&
               cand.a_site != cand.x_site && cand.b_site != cand.b_prime_site &&
               cand.b_site != cand.x_site && cand.b_prime_site != cand.x_site;
    };

    std::vector<Candidate> x_cands;
    for (const auto& sym : x_family) {
        if (sym == c.x_site || !reg.contains(sym))
            continue;
        Composition cand = c;
        cand.x_site = sym;
        if (!distinct(cand))
            continue;
        if (auto t = tau_of(cand); t && *t < tau)
            x_cands.push_back({sym, *t});
    }
    // Ascending radius = ascending tau here; sort by the recomputed tau.
    std::sort(x_cands.begin(), x_cands.end(),
              [](const auto& l, const auto& r) { return l.tau_after < r.tau_after; });
    for (const auto& cand : x_cands)
        grad.site_hints["X"].push_back(cand.element);

    // B/B' candidates by registry scan, keeping the top tau reducers.
    auto scan_site = [&](const std::string& site_key, bool prime) {
        std::vector<Candidate> cands;
        for (const auto& sym : reg.symbols()) {
            if (chem::ElementRegistry::default_anion_state(sym))
                continue; // anions stay off the B sites
            Composition cand = c;
            (prime ? cand.b_prime_site : cand.b_site) = sym;
            if (!distinct(cand))
                continue;
            if (auto t = tau_of(cand); t && *t < tau)
                cands.push_back({sym, *t});
        }
        std::sort(cands.begin(), cands.end(), [](const auto& l, const auto& r) {
            return l.tau_after < r.tau_after;
        });
        if (cands.size() > 3)
            cands.resize(3);
        for (const auto& cand : cands)
            grad.site_hints[site_key].push_back(cand.element);
    };
    scan_site("B", false);
    scan_site("B'", true);

    std::ostringstream text;
    text << "tau = " << tau << " is above the stability threshold; bring it "
         << "below " << threshold << ". tau grows with the X-site radius, so "
         << "prefer smaller X anions";
    if (!grad.site_hints["X"].empty())
        text << " (candidates: " << join(grad.site_hints["X"], ", ") << ")";
    text << ".";
    if (grad.site_hints.count("B") || grad.site_hints.count("B'")) {
        text << " B-site substitutions that lower tau:";
        if (grad.site_hints.count("B"))
            text << " B -> {" << join(grad.site_hints["B"], ", ") << "}";
        if (grad.site_hints.count("B'"))
            text << " B' -> {" << join(grad.site_hints["B'"], ", ") << "}";
        text << ".";
    }
    for (auto it = grad.site_hints.begin(); it != grad.site_hints.end();)
        it = it->second.empty() ? grad.site_hints.erase(it) : std::next(it);
    grad.directive_text = text.str();
    return grad;
}

TextGradient gradient_ml(const EvaluationResult& er, const Composition& comp,
                         const SurrogateModel& model,
                         const chem::ElementRegistry& reg,
                         const MlGradientOptions& opts) {
    if (er.source != EvaluatorSource::ML || er.accepted() || !er.prediction)
        throw Error("gradient_ml needs a rejecting ML evaluation");
    const Composition c = chem::canonicalize(comp);
    const double base_score = er.prediction->stable_score();

    const std::vector<std::string> pool =
        opts.candidate_pool.empty() ? reg.symbols() : opts.candidate_pool;

    struct Scored {
        std::string site;
        std::string element;
        double score;
    };
    std::vector<Scored> improvements;

    auto distinct = [](const Composition& cand) {
        return cand.a_site != cand.b_site && cand.a_site != cand.b_prime_site &&
               cand.a_site != cand.x_site && cand.b_site != cand.b_prime_site &&
               cand.b_site != cand.x_site && cand.b_prime_site != cand.x_site;
    };

    const std::pair<std::string, std::string Composition::*> sites[] = {
        {"A", &Composition::a_site},
        {"B", &Composition::b_site},
        {"B'", &Composition::b_prime_site},
        {"X", &Composition::x_site}};
    for (const auto& [site, member] : sites) {
        for (const auto& sym : pool) {
            if (sym == c.*member)
                continue;
            if (site == "X" && !chem::is_anion_capable(sym))
                continue;
            Composition cand = c;
            cand.*member = sym;
            if (!distinct(cand))
                continue;
            const double score = model.predict(cand).stable_score();
            if (score > base_score)
                improvements.push_back({site, sym, score});
        }
    }
    std::sort(improvements.begin(), improvements.end(),
              [](const auto& l, const auto& r) {
                  if (l.score != r.score)
                      return l.score > r.score;
                  return std::tie(l.site, l.element) < std::tie(r.site, r.element);
              });
    if (improvements.size() > opts.max_suggestions)
        improvements.resize(opts.max_suggestions);

    TextGradient grad;
    grad.source = EvaluatorSource::ML;
    std::ostringstream text;
    if (improvements.empty()) {
        text << "surrogate found no single-site substitution that improves the "
             << "predicted stability of " << chem::format_formula(c);
    } else {
        text << "surrogate-ranked substitutions to improve predicted stability "
             << "of " << chem::format_formula(c) << ":";
        for (const auto& s : improvements) {
            text << " " << s.site << " -> " << s.element << " (score "
                 << s.score << ");";
            grad.site_hints[s.site].push_back(s.element);
        }
    }
    grad.directive_text = text.str();

    if (opts.phrasing_gateway && !improvements.empty()) {
        std::vector<llm::ChatMessage> messages = {
            {"system", "Rephrase this refinement instruction for a "
                       "composition-proposal agent. Keep every element symbol."},
            {"user", grad.directive_text},
        };
        grad.directive_text = opts.phrasing_gateway->complete(messages, {});
    }
    return grad;
}

} // namespace pforge::eval
