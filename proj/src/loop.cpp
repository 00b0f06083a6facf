#include "pforge/orch/loop.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

namespace pforge::orch {

using chem::Composition;
using conditions::ConditionSet;

CaseConfig CaseConfig::for_case(int case_number, bool with_ml) {
    CaseConfig cfg;
    switch (case_number) {
    case 1: break;
    case 2: cfg.llm_eval_enabled = true; break;
    case 3:
        cfg.llm_eval_enabled = true;
        cfg.knowledge_eval_enabled = true;
        break;
    default:
        throw Error("case number must be 1, 2 or 3");
    }
    cfg.ml_eval_enabled = with_ml;
    cfg.label = "case" + std::to_string(case_number) + (with_ml ? "+ml" : "");
    return cfg;
}

bool HistoryBuffer::contains(const Composition& c) const {
    return seen_.count(chem::format_formula(chem::canonicalize(c))) > 0;
}

bool HistoryBuffer::add(Entry entry) {
    entry.composition = chem::canonicalize(entry.composition);
    const std::string key = chem::format_formula(entry.composition);
    if (!seen_.insert(key).second)
        return false;
    entries_.push_back(std::move(entry));
    return true;
}

std::vector<std::string> HistoryBuffer::formulas() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_)
        out.push_back(chem::format_formula(e.composition));
    return out;
}

nlohmann::json IterationRecord::to_json() const {
    return {{"formula", formula},
            {"duplicate", duplicate},
            {"accepted", accepted},
            {"rejection_reason", rejection_reason},
            {"llm_recheck_disagreement", llm_recheck_disagreement},
            {"evaluator_summaries", evaluator_summaries},
            {"gradient_directives", gradient_directives}};
}

nlohmann::json GenerationRecord::to_json() const {
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : iterations)
        iters.push_back(it.to_json());
    return {{"query", query},
            {"conditions", condition_set.to_json()},
            {"case", case_label},
            {"iterations", iters},
            {"rejection_count", rejection_count},
            {"success", success},
            {"final_formula", final_formula},
            {"failure_reason", failure_reason},
            {"structure_path", structure_path},
            {"structure_error", structure_error}};
}

BatchStats compute_stats(const std::vector<GenerationRecord>& records) {
    BatchStats stats;
    stats.runs = records.size();
    size_t rejections = 0;
    for (const auto& r : records) {
        if (r.success) {
            ++stats.accepted;
            rejections += static_cast<size_t>(r.rejection_count);
        }
    }
    stats.mean_rejections_per_accepted =
        stats.accepted ? static_cast<double>(rejections) / stats.accepted : 0.0;
    return stats;
}

Orchestrator::Orchestrator(CaseConfig config, Backends backends)
    : config_(std::move(config)), backends_(backends) {
    if (config_.max_iterations < 1)
        throw Error("max_iterations must be >= 1");
    if (config_.tau_threshold <= 0.0)
        throw Error("tau threshold must be positive");
    if (!backends_.gateway)
        throw Error("orchestrator requires a gateway");
    if (!backends_.registry)
        throw Error("orchestrator requires an element registry");
    if (!backends_.reference_db)
        throw Error("orchestrator requires a reference database");
    if (config_.ml_eval_enabled && !backends_.surrogate)
        throw Error("ML evaluation enabled but no surrogate model supplied");
}

bool Orchestrator::is_known(const Composition& c) const {
    return backends_.reference_db->contains(c) || history_.contains(c);
}

namespace {

std::optional<Composition> find_formula_in_text(const std::string& text) {
    // First, the whole trimmed reply; then any token of it.
    auto try_parse = [](const std::string& s) -> std::optional<Composition> {
        try {
            return chem::parse_formula(s);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    std::string trimmed = text;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r\n"));
    trimmed.erase(trimmed.find_last_not_of(" \t\r\n") + 1);
    if (auto c = try_parse(trimmed))
        return c;
    std::string token;
    std::vector<std::string> tokens;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            token += ch;
        } else if (!token.empty()) {
            tokens.push_back(token);
            token.clear();
        }
    }
    if (!token.empty())
        tokens.push_back(token);
    for (const auto& t : tokens)
        if (auto c = try_parse(t))
            return c;
    return std::nullopt;
}

std::string exclusion_section(const HistoryBuffer& history) {
    if (history.entries().empty())
        return "none yet";
    std::ostringstream out;
    bool first = true;
    for (const auto& e : history.entries()) {
        out << (first ? "" : ", ") << chem::format_formula(e.composition);
        if (!e.reason.empty())
            out << " (" << e.reason << ")";
        first = false;
    }
    return out.str();
}

} // namespace

Composition Orchestrator::propose(const std::string& query,
                                  const ConditionSet& cs,
                                  const std::vector<eval::TextGradient>& gradients) {
    std::ostringstream user;
    user << "Query: " << query << "\n";
    user << "Formalized conditions: " << cs.to_json().dump() << "\n";
    if (!gradients.empty()) {
        user << "Improvement directives from the last evaluation:\n";
        for (const auto& g : gradients)
            user << "- [" << eval::to_string(g.source) << "] "
                 << g.directive_text << "\n";
    }
    user << "Do not propose any of these compositions: "
         << exclusion_section(history_) << "\n";
    user << "Propose one new A2BB'X6 double perovskite composition.";

    std::vector<llm::ChatMessage> messages = {
        {"system",
         "You are a formula proposal agent for double perovskites. Reply "
         "with exactly one chemical formula of the form A2BB'X6 (e.g. "
         "Cs2AgBiBr6) and nothing else."},
        {"user", user.str()},
    };

    for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt == 1)
            messages.push_back({"user",
                                "That was not a parseable A2BB'X6 formula. "
                                "Reply with one formula only."});
        const std::string response = backends_.gateway->complete(messages, {});
        if (auto c = find_formula_in_text(response))
            return chem::canonicalize(*c);
    }
    throw ProposalParseFailure("proposal agent did not return a parseable "
                               "formula after retry");
}

GenerationRecord Orchestrator::run_generation(const std::string& query) {
    GenerationRecord record;
    record.query = query;
    record.case_label = config_.label;

    conditions::RuleBasedExtractor extractor;
    try {
        record.condition_set = conditions::extract_conditions(query, extractor);
    } catch (const Error& e) {
        record.failure_reason = std::string("condition extraction: ") + e.what();
        return record;
    }
    const ConditionSet& cs = record.condition_set;
    const chem::ElementRegistry& reg = *backends_.registry;

    std::vector<eval::TextGradient> gradients;

    for (int iter = 0; iter < config_.max_iterations; ++iter) {
        IterationRecord it;
        Composition c;
        try {
            c = propose(query, cs, gradients);
        } catch (const Error& e) {
            record.failure_reason = e.what();
            break;
        }
        it.formula = chem::format_formula(c);
        gradients.clear(); // only last-iteration gradients feed a prompt

        if (is_known(c)) {
            it.duplicate = true;
            it.rejection_reason = "duplicate";
            history_.add({c, "duplicate", {}});
            record.iterations.push_back(it);
            continue;
        }

        // Evaluators run in the fixed order (LLM, Knowledge, ML).
        std::vector<eval::EvaluationResult> results;
        std::vector<std::string> reject_reasons;
        bool backend_failed = false;
        try {
            if (config_.llm_eval_enabled) {
                auto er = eval::evaluate_llm(c, cs, *backends_.gateway,
                                             config_.knowledge_eval_enabled);
                it.evaluator_summaries.push_back("llm: " +
                                                 std::string(er.accepted()
                                                                 ? "accept"
                                                                 : "reject"));
                if (!er.accepted())
                    reject_reasons.push_back("llm_reject");
                results.push_back(std::move(er));
            }
            if (config_.knowledge_eval_enabled) {
                try {
                    auto er = eval::evaluate_knowledge(c, reg,
                                                       config_.tau_threshold);
                    it.evaluator_summaries.push_back(er.loss_text);
                    if (!er.accepted())
                        reject_reasons.push_back("tau_above_threshold");
                    results.push_back(std::move(er));
                } catch (const chem::NoNeutralAssignment& e) {
                    it.evaluator_summaries.push_back(std::string("knowledge: ") +
                                                     e.what());
                    reject_reasons.push_back("no_neutral_assignment");
                }
            }
            if (config_.ml_eval_enabled) {
                auto er = eval::evaluate_ml(c, *backends_.surrogate);
                it.evaluator_summaries.push_back(er.loss_text);
                if (!er.accepted())
                    reject_reasons.push_back("ml_reject");
                results.push_back(std::move(er));
            }
        } catch (const Error& e) {
            record.failure_reason = e.what();
            backend_failed = true;
        }
        if (backend_failed) {
            record.iterations.push_back(it);
            break;
        }

        bool accepted = reject_reasons.empty();
        if (accepted) {
            // Deterministic re-check closes the evaluator-hacking leak:
            // element/type conditions are enforced on every acceptance.
            auto recheck = conditions::check_conditions(c, cs, reg);
            if (!recheck.overall_deterministic_pass) {
                accepted = false;
                std::string why;
                for (const auto& v : recheck.verdicts)
                    if (v.verdict == conditions::Verdict::Fail)
                        why += (why.empty() ? "" : "; ") + v.reason;
                reject_reasons.push_back("recheck_failed: " + why);
                it.llm_recheck_disagreement = config_.llm_eval_enabled;
            }
        }

        if (accepted) {
            it.accepted = true;
            record.iterations.push_back(it);
            record.success = true;
            record.final_formula = chem::format_formula(c);
            record.rejection_count =
                static_cast<int>(record.iterations.size()) - 1;

            try {
                record.structure_path = finalize_structure(c);
            } catch (const Error& e) {
                record.structure_path.clear();
                record.structure_error = e.what();
            }
            backends_.reference_db->add(c);
            return record;
        }

        // Rejected: gradients from every rejecting evaluator, in order.
        std::string reason;
        for (const auto& r : reject_reasons)
            reason += (reason.empty() ? "" : "; ") + r;
        it.rejection_reason = reason;
        try {
            for (const auto& er : results) {
                if (er.accepted())
                    continue;
                eval::TextGradient g;
                switch (er.source) {
                case eval::EvaluatorSource::LLM:
                    g = eval::gradient_llm(er, c, history_.formulas(),
                                           *backends_.gateway);
                    break;
                case eval::EvaluatorSource::Knowledge:
                    g = eval::gradient_knowledge(er, c, cs, reg);
                    break;
                case eval::EvaluatorSource::ML:
                    g = eval::gradient_ml(er, c, *backends_.surrogate, reg);
                    break;
                }
                it.gradient_directives.push_back(g.directive_text);
                gradients.push_back(std::move(g));
            }
        } catch (const Error& e) {
            record.failure_reason = e.what();
            record.iterations.push_back(it);
            break;
        }
        history_.add({c, reason, gradients});
        record.iterations.push_back(it);
    }

    if (!record.success && record.failure_reason.empty())
        record.failure_reason = "iteration budget exhausted after " +
                                std::to_string(config_.max_iterations) +
                                " proposals";
    return record;
}

std::string Orchestrator::finalize_structure(const Composition& c) {
    if (backends_.structures_out_dir.empty())
        return "";
    structures::Structure s;
    if (config_.knowledge_eval_enabled) {
        // Case 3: radii are in hand, build the cubic cell directly.
        auto quads = chem::assign_oxidation_states(c, *backends_.registry);
        if (quads.empty())
            throw chem::NoNeutralAssignment(
                "no neutral assignment for accepted " + chem::format_formula(c));
        s = structures::build_cubic(c, quads.front());
    } else {
        // Cases 1-2: adapt the nearest reference structure.
        auto candidates = backends_.reference_db->structure_candidates();
        auto match =
            structures::match_reference(c, candidates, *backends_.registry);
        auto tmpl = structures::load_poscar(match.candidate.structure_path);
        s = structures::substitute_elements(tmpl, c);
    }
    namespace fs = std::filesystem;
    fs::create_directories(backends_.structures_out_dir);
    const auto path = fs::path(backends_.structures_out_dir) /
                      (chem::format_formula(c) + ".poscar");
    structures::save_poscar(s, path.string());
    return path.string();
}

std::vector<GenerationRecord> Orchestrator::batch_run(const std::string& query,
                                                      size_t n) {
    if (n < 1)
        throw Error("batch size must be >= 1");
    std::vector<GenerationRecord> records;
    records.reserve(n);
    for (size_t i = 0; i < n; ++i)
        records.push_back(run_generation(query));
    return records;
}

} // namespace pforge::orch
