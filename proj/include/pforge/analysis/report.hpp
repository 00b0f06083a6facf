#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pforge/analysis/eimd.hpp"
#include "pforge/analysis/stability.hpp"
#include "pforge/chem/registry.hpp"

#include <nlohmann/json.hpp>

namespace pforge::analysis {

/// Generation outcome joined with its (optional) DFT-style label.
struct LabeledRecord {
    std::string query;
    std::string case_label;
    std::string formula; // final accepted formula; empty on failure
    int rejection_count = 0;
    bool success = false;
    std::optional<StabilityLabel> label;
};

/// One (query, case) aggregate. Fields with no supporting data are
/// absent rather than zero.
struct SummaryRow {
    std::string query;
    std::string case_label;
    size_t records = 0;
    size_t accepted = 0;
    size_t labeled = 0;
    std::optional<double> stable_or_metastable_fraction;
    std::optional<double> mean_energy_above_hull;
    std::optional<double> mean_rejections_per_accepted;
    std::optional<double> mean_top10_eimd;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;

    std::string to_csv() const;
    nlohmann::json to_json() const;
};

/// Aggregate per (query, case): stable+metastable fraction over labeled
/// records, mean hull energy, mean rejections per accepted composition,
/// and mean Top-10 EIMD to `training` (absent when the training set has
/// fewer than ten entries).
SummaryTable batch_report(const std::vector<LabeledRecord>& records,
                          const std::vector<chem::Composition>& training,
                          const chem::ElementRegistry& reg);

} // namespace pforge::analysis
