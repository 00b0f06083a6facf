#pragma once

#include <sys/types.h>

#include <memory>
#include <string>
#include <vector>

#include "pforge/analysis/stability.hpp"
#include "pforge/chem/composition.hpp"
#include "pforge/chem/registry.hpp"

namespace pforge::eval {

class ModelUnavailable : public Error {
public:
    explicit ModelUnavailable(const std::string& what) : Error(what) {}
};

/// Binary stability target the surrogates predict.
enum class SurrogateClass { StableOrMetastable, Unstable };

std::string to_string(SurrogateClass c);

struct SurrogatePrediction {
    SurrogateClass cls = SurrogateClass::Unstable;
    double confidence = 0.0; // in [0,1]

    /// Probability-of-stable view of the prediction, used for ranking
    /// substitution candidates.
    double stable_score() const {
        return cls == SurrogateClass::StableOrMetastable ? confidence
                                                         : 1.0 - confidence;
    }
};

/// A stability predictor standing in for DFT. Deterministic for fixed
/// model state. The training accessor feeds EIMD distance queries; an
/// external adapter that cannot expose its training set returns an
/// empty vector.
class SurrogateModel {
public:
    virtual ~SurrogateModel() = default;
    virtual SurrogatePrediction predict(const chem::Composition& c) const = 0;
    virtual const std::vector<chem::Composition>& training_set() const = 0;
};

struct TrainingExample {
    chem::Composition composition;
    SurrogateClass label = SurrogateClass::Unstable;
};

/// k-nearest-neighbor majority vote under EIMD. Distance ties break by
/// canonical formula order; vote ties resolve to unstable (conservative).
/// Confidence is the winning vote fraction.
class KnnSurrogate : public SurrogateModel {
public:
    KnnSurrogate(std::vector<TrainingExample> training,
                 const chem::ElementRegistry& reg, size_t k = 5);

    /// Load from the reference-database CSV schema
    /// (formula,formation_energy_ev_per_atom,energy_above_hull_ev_per_atom);
    /// rows are labeled through classify_stability.
    static KnnSurrogate from_csv(const std::string& path,
                                 const chem::ElementRegistry& reg,
                                 size_t k = 5);

    SurrogatePrediction predict(const chem::Composition& c) const override;
    const std::vector<chem::Composition>& training_set() const override {
        return training_compositions_;
    }
    size_t k() const { return k_; }

private:
    std::vector<TrainingExample> training_;
    std::vector<chem::Composition> training_compositions_;
    const chem::ElementRegistry* reg_;
    size_t k_;
};

/// Adapter speaking newline-delimited JSON over a child process's
/// stdin/stdout: {"formula": "..."} -> {"class": "...", "confidence": x}.
class SubprocessSurrogate : public SurrogateModel {
public:
    explicit SubprocessSurrogate(std::string command);
    ~SubprocessSurrogate() override;
    SubprocessSurrogate(const SubprocessSurrogate&) = delete;
    SubprocessSurrogate& operator=(const SubprocessSurrogate&) = delete;

    SurrogatePrediction predict(const chem::Composition& c) const override;
    const std::vector<chem::Composition>& training_set() const override {
        return empty_;
    }

private:
    void spawn();
    std::string command_;
    mutable int child_stdin_ = -1;
    mutable int child_stdout_ = -1;
    mutable pid_t child_pid_ = -1;
    std::vector<chem::Composition> empty_;
};

/// Adapter POSTing {"formula": "..."} to <base_url>/predict.
class HttpSurrogate : public SurrogateModel {
public:
    explicit HttpSurrogate(std::string base_url);
    SurrogatePrediction predict(const chem::Composition& c) const override;
    const std::vector<chem::Composition>& training_set() const override {
        return empty_;
    }

private:
    std::string base_url_;
    std::vector<chem::Composition> empty_;
};

SurrogatePrediction parse_prediction_json(const std::string& payload);

} // namespace pforge::eval
