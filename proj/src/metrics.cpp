#include "pforge/analysis/metrics.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace pforge::analysis {

MetricsReport metrics(const std::vector<std::string>& predicted,
                      const std::vector<std::string>& truth) {
    if (predicted.size() != truth.size())
        throw LengthMismatch("predicted has " + std::to_string(predicted.size()) +
                             " labels, truth has " + std::to_string(truth.size()));
    if (predicted.empty())
        throw LengthMismatch("label sequences are empty");

    MetricsReport rep;
    std::set<std::string> classes(truth.begin(), truth.end());
    classes.insert(predicted.begin(), predicted.end());
    rep.classes.assign(classes.begin(), classes.end());
    const size_t n = rep.classes.size();
    auto idx = [&](const std::string& c) {
        return static_cast<size_t>(
            std::lower_bound(rep.classes.begin(), rep.classes.end(), c) -
            rep.classes.begin());
    };

    rep.confusion.assign(n, std::vector<size_t>(n, 0));
    size_t correct = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        rep.confusion[idx(truth[i])][idx(predicted[i])]++;
        if (truth[i] == predicted[i])
            ++correct;
    }
    rep.total = truth.size();
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.total);

    double sum_p = 0, sum_r = 0, sum_f = 0;
    double wsum_p = 0, wsum_r = 0, wsum_f = 0;
    for (size_t c = 0; c < n; ++c) {
        size_t tp = rep.confusion[c][c];
        size_t row = 0, col = 0;
        for (size_t j = 0; j < n; ++j) {
            row += rep.confusion[c][j]; // truth == c (support)
            col += rep.confusion[j][c]; // predicted == c
        }
        ClassMetrics m;
        m.support = row;
        m.precision = col ? static_cast<double>(tp) / col : 0.0;
        m.recall = row ? static_cast<double>(tp) / row : 0.0;
        m.f1 = (m.precision + m.recall) > 0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        rep.per_class[rep.classes[c]] = m;
        sum_p += m.precision;
        sum_r += m.recall;
        sum_f += m.f1;
        wsum_p += m.precision * m.support;
        wsum_r += m.recall * m.support;
        wsum_f += m.f1 * m.support;
    }
    const double dn = static_cast<double>(n);
    rep.macro_avg = {sum_p / dn, sum_r / dn, sum_f / dn, rep.total};
    const double dt = static_cast<double>(rep.total);
    rep.weighted_avg = {wsum_p / dt, wsum_r / dt, wsum_f / dt, rep.total};
    return rep;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << "class,precision,recall,f1,support\n";
    for (const auto& [name, m] : per_class)
        out << name << ',' << m.precision << ',' << m.recall << ',' << m.f1
            << ',' << m.support << '\n';
    out << "macro_avg," << macro_avg.precision << ',' << macro_avg.recall << ','
        << macro_avg.f1 << ',' << total << '\n';
    out << "weighted_avg," << weighted_avg.precision << ','
        << weighted_avg.recall << ',' << weighted_avg.f1 << ',' << total
        << '\n';
    return out.str();
}

} // namespace pforge::analysis
