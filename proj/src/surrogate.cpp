#include "pforge/eval/surrogate.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pforge/analysis/eimd.hpp"

namespace pforge::eval {

std::string to_string(SurrogateClass c) {
    return c == SurrogateClass::StableOrMetastable ? "stable_or_metastable"
                                                   : "unstable";
}

KnnSurrogate::KnnSurrogate(std::vector<TrainingExample> training,
                           const chem::ElementRegistry& reg, size_t k)
    : training_(std::move(training)), reg_(&reg), k_(k) {
    if (k_ == 0)
        throw ModelUnavailable("kNN surrogate needs k >= 1");
    if (training_.empty())
        throw ModelUnavailable("kNN surrogate needs a non-empty training set");
    for (auto& ex : training_) {
        ex.composition = chem::canonicalize(ex.composition);
        training_compositions_.push_back(ex.composition);
    }
}

KnnSurrogate KnnSurrogate::from_csv(const std::string& path,
                                    const chem::ElementRegistry& reg,
                                    size_t k) {
    std::ifstream in(path);
    if (!in)
        throw ModelUnavailable("cannot open surrogate training CSV '" + path +
                               "'");
    std::vector<TrainingExample> training;
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
        if (formula.empty() || ef.empty() || ehull.empty())
            continue; // unlabeled rows cannot train the classifier
        auto cls = analysis::classify_stability(std::stod(ef), std::stod(ehull));
        training.push_back({chem::parse_formula(formula),
                            cls == analysis::StabilityClass::Unstable
                                ? SurrogateClass::Unstable
                                : SurrogateClass::StableOrMetastable});
    }
    return KnnSurrogate(std::move(training), reg, k);
}

SurrogatePrediction KnnSurrogate::predict(const chem::Composition& comp) const {
    const auto query =
        analysis::FractionalComposition::from_composition(comp);
    std::vector<std::pair<double, size_t>> ranked;
    ranked.reserve(training_.size());
    for (size_t i = 0; i < training_.size(); ++i) {
        const auto t = analysis::FractionalComposition::from_composition(
            training_[i].composition);
        ranked.emplace_back(analysis::eimd(query, t, *reg_), i);
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& l, const auto& r) {
        if (l.first != r.first)
            return l.first < r.first;
        return chem::format_formula(training_[l.second].composition) <
               chem::format_formula(training_[r.second].composition);
    });

    const size_t k = std::min(k_, ranked.size());
    size_t stable_votes = 0;
    for (size_t i = 0; i < k; ++i)
        if (training_[ranked[i].second].label ==
            SurrogateClass::StableOrMetastable)
            ++stable_votes;
    const size_t unstable_votes = k - stable_votes;

    SurrogatePrediction pred;
    if (stable_votes > unstable_votes) {
        pred.cls = SurrogateClass::StableOrMetastable;
        pred.confidence = static_cast<double>(stable_votes) / k;
    } else {
        // Ties go to unstable.
        pred.cls = SurrogateClass::Unstable;
        pred.confidence = static_cast<double>(unstable_votes) / k;
    }
    return pred;
}

SurrogatePrediction parse_prediction_json(const std::string& payload) {
    try {
        auto j = nlohmann::json::parse(payload);
        const std::string cls = j.at("class").get<std::string>();
        SurrogatePrediction pred;
        if (cls == "stable_or_metastable" || cls == "stable" ||
            cls == "metastable")
            pred.cls = SurrogateClass::StableOrMetastable;
        else if (cls == "unstable")
            pred.cls = SurrogateClass::Unstable;
        else
            throw ModelUnavailable("surrogate returned unknown class '" + cls +
                                   "'");
        pred.confidence = j.value("confidence", 1.0);
        return pred;
    } catch (const nlohmann::json::exception& e) {
        throw ModelUnavailable(std::string("bad surrogate payload: ") + e.what());
    }
}

SubprocessSurrogate::SubprocessSurrogate(std::string command)
    : command_(std::move(command)) {
    spawn();
}

void SubprocessSurrogate::spawn() {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
        throw ModelUnavailable("cannot create surrogate pipes");
    pid_t pid = fork();
    if (pid < 0)
        throw ModelUnavailable("cannot fork surrogate process");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), nullptr);
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    child_stdin_ = to_child[1];
    child_stdout_ = from_child[0];
    child_pid_ = pid;
}

SubprocessSurrogate::~SubprocessSurrogate() {
    if (child_stdin_ >= 0)
        close(child_stdin_);
    if (child_stdout_ >= 0)
        close(child_stdout_);
    if (child_pid_ > 0)
        waitpid(child_pid_, nullptr, 0);
}

SurrogatePrediction
SubprocessSurrogate::predict(const chem::Composition& c) const {
    nlohmann::json req = {{"formula", chem::format_formula(c)}};
    std::string line = req.dump() + "\n";
    ssize_t written = write(child_stdin_, line.data(), line.size());
    if (written != static_cast<ssize_t>(line.size()))
        throw ModelUnavailable("surrogate process is not accepting input");
    std::string response;
    char ch;
    while (true) {
        ssize_t n = read(child_stdout_, &ch, 1);
        if (n <= 0)
            throw ModelUnavailable("surrogate process closed its output");
        if (ch == '\n')
            break;
        response += ch;
    }
    return parse_prediction_json(response);
}

HttpSurrogate::HttpSurrogate(std::string base_url)
    : base_url_(std::move(base_url)) {}

SurrogatePrediction HttpSurrogate::predict(const chem::Composition& c) const {
    httplib::Client client(base_url_);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    nlohmann::json req = {{"formula", chem::format_formula(c)}};
    auto res = client.Post("/predict", req.dump(), "application/json");
    if (!res)
        throw ModelUnavailable("surrogate HTTP request failed: " +
                               httplib::to_string(res.error()));
    if (res->status != 200)
        throw ModelUnavailable("surrogate HTTP " + std::to_string(res->status));
    return parse_prediction_json(res->body);
}

} // namespace pforge::eval
