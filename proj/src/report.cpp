#include "pforge/analysis/report.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace pforge::analysis {

namespace {

std::string opt_cell(const std::optional<double>& v) {
    if (!v)
        return "";
    std::ostringstream out;
    out << *v;
    return out.str();
}

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace

SummaryTable batch_report(const std::vector<LabeledRecord>& records,
                          const std::vector<chem::Composition>& training,
                          const chem::ElementRegistry& reg) {
    std::map<std::pair<std::string, std::string>,
             std::vector<const LabeledRecord*>>
        groups;
    for (const auto& r : records)
        groups[{r.query, r.case_label}].push_back(&r);

    SummaryTable table;
    for (const auto& [key, group] : groups) {
        SummaryRow row;
        row.query = key.first;
        row.case_label = key.second;
        row.records = group.size();

        size_t stable_or_meta = 0;
        double hull_sum = 0.0;
        size_t rejections = 0;
        std::vector<double> top10;
        for (const auto* r : group) {
            if (r->success) {
                ++row.accepted;
                rejections += static_cast<size_t>(r->rejection_count);
                if (training.size() >= 10) {
                    top10.push_back(
                        top10_eimd(chem::parse_formula(r->formula), training, reg));
                }
            }
            if (r->label) {
                ++row.labeled;
                hull_sum += r->label->energy_above_hull;
                if (r->label->cls != StabilityClass::Unstable)
                    ++stable_or_meta;
            }
        }
        if (row.labeled > 0) {
            row.stable_or_metastable_fraction =
                static_cast<double>(stable_or_meta) / row.labeled;
            row.mean_energy_above_hull = hull_sum / row.labeled;
        }
        if (row.accepted > 0)
            row.mean_rejections_per_accepted =
                static_cast<double>(rejections) / row.accepted;
        if (!top10.empty()) {
            double s = 0.0;
            for (double d : top10)
                s += d;
            row.mean_top10_eimd = s / top10.size();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string SummaryTable::to_csv() const {
    std::ostringstream out;
    out << "query,case,records,accepted,labeled,"
           "stable_or_metastable_fraction,mean_energy_above_hull,"
           "mean_rejections_per_accepted,mean_top10_eimd\n";
    for (const auto& r : rows) {
        out << '"' << r.query << "\"," << r.case_label << ',' << r.records
            << ',' << r.accepted << ',' << r.labeled << ','
            << opt_cell(r.stable_or_metastable_fraction) << ','
            << opt_cell(r.mean_energy_above_hull) << ','
            << opt_cell(r.mean_rejections_per_accepted) << ','
            << opt_cell(r.mean_top10_eimd) << '\n';
    }
    return out.str();
}

nlohmann::json SummaryTable::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back(
            {{"query", r.query},
             {"case", r.case_label},
             {"records", r.records},
             {"accepted", r.accepted},
             {"labeled", r.labeled},
             {"stable_or_metastable_fraction",
              opt_json(r.stable_or_metastable_fraction)},
             {"mean_energy_above_hull", opt_json(r.mean_energy_above_hull)},
             {"mean_rejections_per_accepted",
              opt_json(r.mean_rejections_per_accepted)},
             {"mean_top10_eimd", opt_json(r.mean_top10_eimd)}});
    }
    return arr;
}

} // namespace pforge::analysis
