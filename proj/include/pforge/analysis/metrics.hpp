#pragma once

#include <map>
#include <string>
#include <vector>

#include "pforge/errors.hpp"

namespace pforge::analysis {

class LengthMismatch : public Error {
public:
    explicit LengthMismatch(const std::string& what) : Error(what) {}
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    size_t support = 0;
};

/// Confusion matrix plus per-class precision/recall/F1 and their macro
/// (unweighted) and weighted (support-weighted) averages. The 0/0 cases
/// resolve to 0.
struct MetricsReport {
    std::vector<std::string> classes; // sorted; row = truth, col = predicted
    std::vector<std::vector<size_t>> confusion;
    std::map<std::string, ClassMetrics> per_class;
    ClassMetrics macro_avg;
    ClassMetrics weighted_avg;
    double accuracy = 0.0;
    size_t total = 0;

    std::string to_csv() const;
};

MetricsReport metrics(const std::vector<std::string>& predicted,
                      const std::vector<std::string>& truth);

} // namespace pforge::analysis
