// pforge: conditional double perovskite generation and screening.
//
// Subcommands:
//   generate  run the proposal/evaluation loop for a query (batch)
//   screen    tolerance-factor screening of a formula list
//   analyze   aggregate generation records into summary tables

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pforge/analysis/metrics.hpp"
#include "pforge/analysis/report.hpp"
#include "pforge/chem/tolerance.hpp"
#include "pforge/conditions/conditions.hpp"
#include "pforge/eval/surrogate.hpp"
#include "pforge/llm/gateway.hpp"
#include "pforge/orch/loop.hpp"

namespace fs = std::filesystem;
using namespace pforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitBackend = 2;
constexpr int kExitBudget = 3;

struct GenerateOptions {
    int case_number = 1;
    bool with_ml = false;
    std::string query;
    int query_index = 0; // 1..5 when set
    size_t n = 1;
    int max_iterations = 50;
    double tau_threshold = chem::kTauStableThreshold;
    std::string replay_path;
    bool strict_replay = false;
    bool live = false;
    std::string record_path;
    std::string surrogate_csv;
    std::string surrogate_cmd;
    std::string surrogate_url;
    size_t knn_k = 5;
    std::string registry_path = "data/element_registry.csv";
    std::string reference_db_path = "data/reference_dps.csv";
    std::string structures_dir = "data/reference_structures";
    std::string out_dir = "runs/latest";
    unsigned seed = 0;
};

std::string resolve_query(const GenerateOptions& opt) {
    if (!opt.query.empty())
        return opt.query;
    const auto& presets = conditions::builtin_queries();
    if (opt.query_index < 1 ||
        opt.query_index > static_cast<int>(presets.size()))
        throw Error("--query-index must be 1.." +
                    std::to_string(presets.size()));
    return presets[opt.query_index - 1];
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
    out << text;
}

int cmd_generate(const GenerateOptions& opt) {
    // Validate configuration before touching any backend.
    if (opt.query.empty() && opt.query_index == 0) {
        std::cerr << "config error: provide --query or --query-index\n";
        return kExitConfig;
    }
    if (opt.replay_path.empty() && !opt.live) {
        std::cerr << "config error: choose --replay <transcript> or --live\n";
        return kExitConfig;
    }
    if (!opt.replay_path.empty() && opt.live) {
        std::cerr << "config error: --replay and --live are exclusive\n";
        return kExitConfig;
    }
    if (opt.tau_threshold <= 0.0) {
        std::cerr << "config error: --tau-threshold must be positive\n";
        return kExitConfig;
    }
    const bool has_surrogate = !opt.surrogate_csv.empty() ||
                               !opt.surrogate_cmd.empty() ||
                               !opt.surrogate_url.empty();
    if (opt.with_ml && !has_surrogate) {
        std::cerr << "config error: --ml requires a surrogate "
                     "(--surrogate-csv/--surrogate-cmd/--surrogate-url)\n";
        return kExitConfig;
    }
    llm::LiveBackend::Config live_cfg;
    if (opt.live) {
        live_cfg = llm::LiveBackend::config_from_env();
        if (live_cfg.api_key.empty()) {
            std::cerr << "config error: live mode needs PFORGE_LLM_API_KEY\n";
            return kExitConfig;
        }
    }

    std::string query;
    try {
        query = resolve_query(opt);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        const auto registry = chem::ElementRegistry::load(opt.registry_path);
        auto reference_db = orch::ReferenceDb::load_csv(opt.reference_db_path,
                                                        opt.structures_dir);

        std::unique_ptr<llm::Backend> backend;
        if (opt.live)
            backend = std::make_unique<llm::LiveBackend>(live_cfg);
        else
            backend = std::make_unique<llm::ReplayBackend>(
                llm::ReplayBackend::from_file(
                    opt.replay_path, opt.strict_replay
                                         ? llm::ReplayMatch::Strict
                                         : llm::ReplayMatch::Lenient));

        fs::create_directories(opt.out_dir);
        const std::string transcript =
            opt.record_path.empty()
                ? (fs::path(opt.out_dir) / "transcript.jsonl").string()
                : opt.record_path;
        llm::Session session(*backend, transcript);

        std::unique_ptr<eval::SurrogateModel> surrogate;
        if (!opt.surrogate_csv.empty())
            surrogate = std::make_unique<eval::KnnSurrogate>(
                eval::KnnSurrogate::from_csv(opt.surrogate_csv, registry,
                                             opt.knn_k));
        else if (!opt.surrogate_cmd.empty())
            surrogate =
                std::make_unique<eval::SubprocessSurrogate>(opt.surrogate_cmd);
        else if (!opt.surrogate_url.empty())
            surrogate = std::make_unique<eval::HttpSurrogate>(opt.surrogate_url);

        orch::CaseConfig config =
            orch::CaseConfig::for_case(opt.case_number, opt.with_ml);
        config.max_iterations = opt.max_iterations;
        config.tau_threshold = opt.tau_threshold;

        orch::Backends backends{&session, &registry, surrogate.get(),
                                &reference_db,
                                (fs::path(opt.out_dir) / "structures").string()};
        orch::Orchestrator orchestrator(config, backends);

        nlohmann::json manifest = {
            {"command", "generate"},
            {"case", config.label},
            {"query", query},
            {"n", opt.n},
            {"max_iterations", opt.max_iterations},
            {"tau_threshold", opt.tau_threshold},
            {"backend", opt.live ? "live" : "replay"},
            {"replay_path", opt.replay_path},
            {"registry", opt.registry_path},
            {"reference_db", opt.reference_db_path},
            {"seed", opt.seed},
        };
        write_text(fs::path(opt.out_dir) / "manifest.json",
                   manifest.dump(2) + "\n");

        auto records = orchestrator.batch_run(query, opt.n);

        size_t succeeded = 0, budget_failures = 0;
        for (size_t i = 0; i < records.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "record_%03zu.json", i + 1);
            write_text(fs::path(opt.out_dir) / name,
                       records[i].to_canonical_string() + "\n");
            if (records[i].success)
                ++succeeded;
            else if (records[i].failure_reason.find("budget") !=
                     std::string::npos)
                ++budget_failures;
            std::cout << (records[i].success ? "accepted " : "failed   ")
                      << (records[i].success ? records[i].final_formula
                                             : records[i].failure_reason)
                      << " (rejections: " << records[i].rejection_count
                      << ")\n";
        }
        auto stats = orch::compute_stats(records);
        nlohmann::json stats_json = {
            {"runs", stats.runs},
            {"accepted", stats.accepted},
            {"mean_rejections_per_accepted",
             stats.mean_rejections_per_accepted}};
        write_text(fs::path(opt.out_dir) / "batch_stats.json",
                   stats_json.dump(2) + "\n");
        std::cout << "accepted " << stats.accepted << "/" << stats.runs
                  << ", mean rejections per accepted DP: "
                  << stats.mean_rejections_per_accepted << "\n";

        if (succeeded > 0)
            return kExitOk;
        return budget_failures == records.size() ? kExitBudget : kExitBackend;
    } catch (const llm::TransportError& e) {
        std::cerr << "backend failure: " << e.what() << "\n";
        return kExitBackend;
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

struct ScreenOptions {
    std::string formulas_path;
    std::string registry_path = "data/element_registry.csv";
    std::string out_path; // empty: stdout
    double tau_threshold = chem::kTauStableThreshold;
};

int cmd_screen(const ScreenOptions& opt) {
    std::ifstream in(opt.formulas_path);
    if (!in) {
        std::cerr << "config error: cannot open '" << opt.formulas_path
                  << "'\n";
        return kExitConfig;
    }
    chem::ElementRegistry registry;
    try {
        registry = chem::ElementRegistry::load(opt.registry_path);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    std::ostringstream csv;
    csv << "formula,tau,goldschmidt_t,assignment,stable_predicted,error\n";
    std::string line;
    while (std::getline(in, line)) {
        // allow comments and blanks in the list
        const auto start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#')
            continue;
        std::string formula = line.substr(start);
        formula.erase(formula.find_last_not_of(" \t\r") + 1);
        try {
            auto c = chem::parse_formula(formula);
            auto rep = chem::tolerance_report(c, registry, opt.tau_threshold);
            const auto& q = rep.assignment;
            csv << chem::format_formula(c) << ',' << rep.tau << ','
                << rep.goldschmidt_t << ',' << q.a.element << "^"
                << q.a.oxidation_state << "|" << q.b.element << "^"
                << q.b.oxidation_state << "|" << q.b_prime.element << "^"
                << q.b_prime.oxidation_state << "|" << q.x.element << "^"
                << q.x.oxidation_state << ','
                << (rep.stable_predicted ? "true" : "false") << ",\n";
        } catch (const Error& e) {
            csv << formula << ",,,,," << e.what() << "\n";
        }
    }
    if (opt.out_path.empty()) {
        std::cout << csv.str();
    } else {
        try {
            write_text(opt.out_path, csv.str());
        } catch (const Error& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kExitConfig;
        }
    }
    return kExitOk;
}

struct AnalyzeOptions {
    std::string records_dir;
    std::string labels_path;
    std::string training_path;
    std::string registry_path = "data/element_registry.csv";
    std::string out_dir = "analysis";
    bool eimd_only = false;
    size_t knn_k = 5;
    double hull_threshold = analysis::kHullMetastableThreshold;
};

std::map<std::string, analysis::StabilityLabel>
load_labels(const std::string& path,
            double hull_threshold = analysis::kHullMetastableThreshold) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open labels '" + path + "'");
    std::map<std::string, analysis::StabilityLabel> labels;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        if (first && line.rfind("formula", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        std::istringstream ss(line);
        std::string formula, ef, ehull;
        std::getline(ss, formula, ',');
        std::getline(ss, ef, ',');
        std::getline(ss, ehull, ',');
        if (ef.empty() || ehull.empty())
            continue;
        auto c = chem::parse_formula(formula);
        labels[chem::format_formula(c)] =
            analysis::make_label(std::stod(ef), std::stod(ehull),
                                 hull_threshold);
    }
    return labels;
}

std::vector<chem::Composition> load_training(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open training set '" + path + "'");
    std::vector<chem::Composition> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        if (first && line.rfind("formula", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        std::istringstream ss(line);
        std::string formula;
        std::getline(ss, formula, ',');
        out.push_back(chem::parse_formula(formula));
    }
    return out;
}

int cmd_analyze(const AnalyzeOptions& opt) {
    if (!fs::is_directory(opt.records_dir)) {
        std::cerr << "config error: records dir '" << opt.records_dir
                  << "' does not exist\n";
        return kExitConfig;
    }
    if (opt.hull_threshold <= 0.0) {
        std::cerr << "config error: --hull-threshold must be positive\n";
        return kExitConfig;
    }
    try {
        const auto registry = chem::ElementRegistry::load(opt.registry_path);

        std::map<std::string, analysis::StabilityLabel> labels;
        if (!opt.labels_path.empty() && !opt.eimd_only)
            labels = load_labels(opt.labels_path, opt.hull_threshold);
        std::vector<chem::Composition> training;
        if (!opt.training_path.empty())
            training = load_training(opt.training_path);

        std::vector<analysis::LabeledRecord> records;
        std::set<std::string> seen_formulas;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(opt.records_dir))
            if (entry.path().extension() == ".json" &&
                entry.path().filename().string().rfind("record_", 0) == 0)
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            std::ifstream rin(file);
            nlohmann::json j = nlohmann::json::parse(rin);
            analysis::LabeledRecord rec;
            rec.query = j.value("query", "");
            rec.case_label = j.value("case", "");
            rec.formula = j.value("final_formula", "");
            rec.rejection_count = j.value("rejection_count", 0);
            rec.success = j.value("success", false);
            if (rec.success && labels.count(rec.formula))
                rec.label = labels.at(rec.formula);
            if (rec.success)
                seen_formulas.insert(rec.formula);
            records.push_back(std::move(rec));
        }
        if (records.empty()) {
            std::cerr << "config error: no record_*.json files in '"
                      << opt.records_dir << "'\n";
            return kExitConfig;
        }
        for (const auto& [formula, _] : labels)
            if (!seen_formulas.count(formula))
                std::cerr << "warning: label for unknown formula " << formula
                          << " skipped\n";

        fs::create_directories(opt.out_dir);

        if (opt.eimd_only) {
            if (training.size() < 10) {
                std::cerr << "config error: --eimd-only needs a training set "
                             "with >= 10 entries\n";
                return kExitConfig;
            }
            std::ostringstream csv;
            csv << "formula,top10_eimd\n";
            for (const auto& r : records)
                if (r.success)
                    csv << r.formula << ','
                        << analysis::top10_eimd(chem::parse_formula(r.formula),
                                                training, registry)
                        << '\n';
            write_text(fs::path(opt.out_dir) / "eimd_top10.csv", csv.str());
            std::cout << "wrote " << opt.out_dir << "/eimd_top10.csv\n";
            return kExitOk;
        }

        auto table = analysis::batch_report(records, training, registry);
        write_text(fs::path(opt.out_dir) / "summary.csv", table.to_csv());
        write_text(fs::path(opt.out_dir) / "summary.json",
                   table.to_json().dump(2) + "\n");
        std::cout << "wrote " << opt.out_dir
                  << "/summary.csv and summary.json\n";

        // Surrogate-vs-label confusion per query, when both sides exist.
        if (!training.empty() && !labels.empty()) {
            std::vector<eval::TrainingExample> examples;
            for (const auto& [formula, label] :
                 load_labels(opt.training_path, opt.hull_threshold))
                examples.push_back(
                    {chem::parse_formula(formula),
                     label.cls == analysis::StabilityClass::Unstable
                         ? eval::SurrogateClass::Unstable
                         : eval::SurrogateClass::StableOrMetastable});
            if (!examples.empty()) {
                eval::KnnSurrogate surrogate(std::move(examples), registry,
                                             opt.knn_k);
                std::map<std::string, std::pair<std::vector<std::string>,
                                                std::vector<std::string>>>
                    by_query;
                for (const auto& r : records) {
                    if (!r.success || !r.label)
                        continue;
                    auto pred =
                        surrogate.predict(chem::parse_formula(r.formula));
                    by_query[r.query].first.push_back(
                        eval::to_string(pred.cls));
                    by_query[r.query].second.push_back(
                        r.label->cls == analysis::StabilityClass::Unstable
                            ? "unstable"
                            : "stable_or_metastable");
                }
                size_t qi = 0;
                for (const auto& [q, pr] : by_query) {
                    ++qi;
                    auto rep = analysis::metrics(pr.first, pr.second);
                    write_text(fs::path(opt.out_dir) / ("confusion_query" +
                                                        std::to_string(qi) +
                                                        ".csv"),
                               rep.to_csv());
                }
                if (qi)
                    std::cout << "wrote " << qi << " confusion table(s)\n";
            }
        }
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pforge: conditional double perovskite generation"};
    app.require_subcommand(1);
    app.set_config("--config");

    GenerateOptions gen;
    auto* generate = app.add_subcommand(
        "generate", "run the proposal/evaluation loop for a query");
    generate->add_option("--case", gen.case_number, "feedback case (1, 2, 3)")
        ->check(CLI::Range(1, 3));
    generate->add_flag("--ml", gen.with_ml, "add the ML surrogate evaluator");
    generate->add_option("--query", gen.query, "natural-language query");
    generate->add_option("--query-index", gen.query_index,
                         "built-in query preset (1..5)");
    generate->add_option("--n", gen.n, "compositions to generate");
    generate->add_option("--max-iterations", gen.max_iterations,
                         "proposal budget per composition");
    generate->add_option("--tau-threshold", gen.tau_threshold,
                         "tolerance factor stability threshold");
    generate->add_option("--replay", gen.replay_path,
                         "replay transcript (.jsonl), no network");
    generate->add_flag("--strict", gen.strict_replay,
                       "strict replay matching (request hashes)");
    generate->add_flag("--live", gen.live,
                       "live chat-completion backend (PFORGE_LLM_* env)");
    generate->add_option("--record", gen.record_path,
                         "transcript sink (defaults to <out>/transcript.jsonl)");
    generate->add_option("--surrogate-csv", gen.surrogate_csv,
                         "kNN surrogate training CSV");
    generate->add_option("--surrogate-cmd", gen.surrogate_cmd,
                         "surrogate adapter subprocess (ndjson stdin/stdout)");
    generate->add_option("--surrogate-url", gen.surrogate_url,
                         "surrogate adapter HTTP base url");
    generate->add_option("--knn-k", gen.knn_k, "kNN neighbor count");
    generate->add_option("--registry", gen.registry_path,
                         "element registry CSV");
    generate->add_option("--reference-db", gen.reference_db_path,
                         "known-composition CSV");
    generate->add_option("--structures-dir", gen.structures_dir,
                         "reference POSCAR directory");
    generate->add_option("--out", gen.out_dir, "run output directory");
    generate->add_option("--seed", gen.seed, "seed for stochastic choices");

    ScreenOptions scr;
    auto* screen = app.add_subcommand(
        "screen", "tolerance-factor screening of a formula list");
    screen->add_option("--formulas", scr.formulas_path,
                       "file with one formula per line")
        ->required();
    screen->add_option("--registry", scr.registry_path, "element registry CSV");
    screen->add_option("--out", scr.out_path, "output CSV (default stdout)");
    screen->add_option("--tau-threshold", scr.tau_threshold,
                       "tolerance factor stability threshold");

    AnalyzeOptions ana;
    auto* analyze = app.add_subcommand(
        "analyze", "aggregate generation records into summary tables");
    analyze->add_option("--records", ana.records_dir,
                        "directory of record_*.json files")
        ->required();
    analyze->add_option("--labels", ana.labels_path,
                        "labels CSV (reference-db schema)");
    analyze->add_option("--training", ana.training_path,
                        "surrogate training CSV for EIMD/kNN");
    analyze->add_option("--registry", ana.registry_path,
                        "element registry CSV");
    analyze->add_option("--out", ana.out_dir, "analysis output directory");
    analyze->add_flag("--eimd-only", ana.eimd_only,
                      "only compute the Top-10 EIMD table");
    analyze->add_option("--knn-k", ana.knn_k, "kNN neighbor count");
    analyze->add_option("--hull-threshold", ana.hull_threshold,
                        "metastability window on energy above hull, eV/atom");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (generate->parsed())
        return cmd_generate(gen);
    if (screen->parsed())
        return cmd_screen(scr);
    if (analyze->parsed())
        return cmd_analyze(ana);
    return kExitConfig;
}
