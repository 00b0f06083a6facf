#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "pforge/analysis/eimd.hpp"
#include "pforge/analysis/metrics.hpp"
#include "pforge/analysis/report.hpp"
#include "pforge/analysis/stability.hpp"
#include "test_util.hpp"

using namespace pforge;
using analysis::FractionalComposition;
using analysis::StabilityClass;

namespace {

// Independent transport oracle: greedy matching on position-sorted
// supports, which is exact for 1-D optimal transport. Deliberately a
// different algorithm from the CDF integral in the library.
double transport_oracle(const FractionalComposition& p,
                        const FractionalComposition& q,
                        const chem::ElementRegistry& reg) {
    std::vector<std::pair<double, double>> supply, demand; // (position, mass)
    for (const auto& [sym, f] : p.fractions)
        supply.emplace_back(reg.pettifor_position(sym), f);
    for (const auto& [sym, f] : q.fractions)
        demand.emplace_back(reg.pettifor_position(sym), f);
    std::sort(supply.begin(), supply.end());
    std::sort(demand.begin(), demand.end());

    double cost = 0.0;
    size_t i = 0, j = 0;
    while (i < supply.size() && j < demand.size()) {
        const double m = std::min(supply[i].second, demand[j].second);
        cost += m * std::fabs(supply[i].first - demand[j].first);
        supply[i].second -= m;
        demand[j].second -= m;
        if (supply[i].second <= 1e-15)
            ++i;
        if (demand[j].second <= 1e-15)
            ++j;
    }
    return cost;
}

FractionalComposition random_fractional(std::mt19937& rng,
                                        const std::vector<std::string>& pool,
                                        size_t max_support) {
    std::uniform_int_distribution<size_t> nsup(1, max_support);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::uniform_real_distribution<double> mass(0.05, 1.0);
    FractionalComposition fc;
    const size_t n = nsup(rng);
    while (fc.fractions.size() < n)
        fc.fractions[pool[pick(rng)]] = mass(rng);
    fc.normalize();
    return fc;
}

} // namespace

TEST_CASE("fractional composition of an A2BB'X6 cell") {
    auto fc = FractionalComposition::from_formula("Cs2AgBiBr6");
    CHECK(fc.fractions.at("Cs") == doctest::Approx(0.2));
    CHECK(fc.fractions.at("Ag") == doctest::Approx(0.1));
    CHECK(fc.fractions.at("Bi") == doctest::Approx(0.1));
    CHECK(fc.fractions.at("Br") == doctest::Approx(0.6));
    double sum = 0;
    for (auto& [_, f] : fc.fractions)
        sum += f;
    CHECK(std::fabs(sum - 1.0) < 1e-12);
}

TEST_CASE("eimd identity and point-mass transport") {
    const auto& reg = shipped_registry();
    auto p = FractionalComposition::from_formula("Cs2AgBiBr6");
    CHECK(analysis::eimd(p, p, reg) == doctest::Approx(0.0));

    FractionalComposition e1{{{"Cs", 1.0}}};
    FractionalComposition e2{{{"F", 1.0}}};
    CHECK(analysis::eimd(e1, e2, reg) ==
          doctest::Approx(std::fabs(reg.pettifor_position("Cs") -
                                    reg.pettifor_position("F"))));
}

TEST_CASE("eimd of an X-site swap moves 0.6 of the mass") {
    const auto& reg = shipped_registry();
    auto p = FractionalComposition::from_formula("Cs2AgBiBr6");
    auto q = FractionalComposition::from_formula("Cs2AgBiCl6");
    const double expected = 0.6 * std::fabs(reg.pettifor_position("Br") -
                                            reg.pettifor_position("Cl"));
    CHECK(analysis::eimd(p, q, reg) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(analysis::eimd(p, q, reg) ==
          doctest::Approx(transport_oracle(p, q, reg)).epsilon(1e-12));
}

TEST_CASE("eimd requires ranked elements") {
    const auto& reg = shipped_registry();
    FractionalComposition with_unranked{{{"Xe", 1.0}}};
    FractionalComposition ok{{{"Cs", 1.0}}};
    CHECK_THROWS_AS(analysis::eimd(with_unranked, ok, reg),
                    analysis::UnrankedElement);
}

TEST_CASE("eimd metric axioms on 200 random triples") {
    const auto& reg = shipped_registry();
    const auto pool = reg.symbols();
    std::mt19937 rng(42);
    for (int i = 0; i < 200; ++i) {
        auto p = random_fractional(rng, pool, 5);
        auto q = random_fractional(rng, pool, 5);
        auto r = random_fractional(rng, pool, 5);
        const double dpq = analysis::eimd(p, q, reg);
        const double dqp = analysis::eimd(q, p, reg);
        const double dpr = analysis::eimd(p, r, reg);
        const double dqr = analysis::eimd(q, r, reg);
        CHECK(dpq >= 0.0);
        CHECK(std::fabs(dpq - dqp) < 1e-9);               // symmetry
        CHECK(dpr <= dpq + dqr + 1e-9);                   // triangle
        CHECK(analysis::eimd(p, p, reg) < 1e-9);          // identity
        if (p.fractions != q.fractions)
            CHECK(dpq >= 0.0); // indiscernibles checked exactly below
    }
}

TEST_CASE("eimd identity of indiscernibles on distinct supports") {
    const auto& reg = shipped_registry();
    auto p = FractionalComposition::from_formula("Cs2AgBiBr6");
    auto q = FractionalComposition::from_formula("Cs2AgBiCl6");
    CHECK(analysis::eimd(p, q, reg) > 1e-12);
}

TEST_CASE("eimd equals the brute-force transport oracle (supports <= 4)") {
    const auto& reg = shipped_registry();
    const auto pool = reg.symbols();
    std::mt19937 rng(20240810);
    for (int i = 0; i < 400; ++i) {
        auto p = random_fractional(rng, pool, 4);
        auto q = random_fractional(rng, pool, 4);
        CHECK(analysis::eimd(p, q, reg) ==
              doctest::Approx(transport_oracle(p, q, reg)).epsilon(1e-9));
    }
}

TEST_CASE("top10 EIMD basics") {
    const auto& reg = shipped_registry();
    auto c = chem::parse_formula("Cs2AgBiBr6");

    SUBCASE("needs ten entries") {
        std::vector<chem::Composition> small(9, c);
        CHECK_THROWS_AS(analysis::top10_eimd(c, small, reg),
                        analysis::InsufficientTrainingSet);
    }
    SUBCASE("zero when the composition dominates the training set") {
        std::vector<chem::Composition> train(10, c);
        CHECK(analysis::top10_eimd(c, train, reg) == doctest::Approx(0.0));
    }
    SUBCASE("hand-computed mean on an 11-entry toy set") {
        FractionalComposition query{{{"Cs", 1.0}}};
        std::vector<FractionalComposition> train;
        std::vector<std::string> symbols = {"Cs", "Rb", "K",  "Na", "Li", "Ba",
                                            "Sr", "Ca", "F",  "Cl", "Br"};
        std::vector<double> dists;
        for (const auto& s : symbols) {
            train.push_back(FractionalComposition{{{s, 1.0}}});
            dists.push_back(std::fabs(reg.pettifor_position("Cs") -
                                      reg.pettifor_position(s)));
        }
        std::sort(dists.begin(), dists.end());
        double expected = 0.0;
        for (size_t i = 0; i < 10; ++i)
            expected += dists[i];
        expected /= 10.0;
        CHECK(analysis::top10_eimd(query, train, reg) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("monotone under training growth") {
        std::mt19937 rng(5);
        const auto pool = reg.symbols();
        std::vector<chem::Composition> train;
        const std::vector<std::string> formulas = {
            "Cs2AgBiCl6", "Rb2AgBiCl6", "K2AgBiCl6",  "Cs2AgSbCl6",
            "Cs2AgBiI6",  "Cs2CuBiCl6", "Rb2AgSbBr6", "K2CuInI6",
            "Ba2YNbO6",   "Sr2YNbO6",   "Ba2LaNbO6",  "Cs2AgInCl6"};
        for (const auto& f : formulas)
            train.push_back(chem::parse_formula(f));
        double prev = analysis::top10_eimd(c, train, reg);
        for (const auto& extra : {"Cs2AgBiBr6", "Rb2AgBiBr6", "Cs2AgSbBr6"}) {
            train.push_back(chem::parse_formula(extra));
            double cur = analysis::top10_eimd(c, train, reg);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("id/ood threshold splits the cluster means") {
    std::vector<double> id = {0.1, 0.2, 0.3};
    std::vector<double> ood = {1.4, 1.6, 1.8};
    const double thr = analysis::id_ood_threshold(id, ood);
    CHECK(thr == doctest::Approx(0.9));
    for (double v : id)
        CHECK(analysis::is_in_distribution(v, thr));
    for (double v : ood)
        CHECK(!analysis::is_in_distribution(v, thr));
    CHECK_THROWS_AS(analysis::id_ood_threshold({}, ood), pforge::Error);
}

TEST_CASE("classify_stability thresholds") {
    using analysis::classify_stability;
    CHECK(classify_stability(-2.55, 0.0) == StabilityClass::Stable);
    CHECK(classify_stability(-1.0, 0.049) == StabilityClass::Metastable);
    CHECK(classify_stability(-1.0, 0.05) == StabilityClass::Unstable);
    CHECK(classify_stability(0.147, 0.2) == StabilityClass::Unstable);
    CHECK(classify_stability(0.0, 0.0) == StabilityClass::Unstable);
    CHECK(classify_stability(-1.0, 5e-10) == StabilityClass::Stable);
}

TEST_CASE("classify_stability partitions its domain") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ef(-3.0, 1.0), eh(-0.01, 0.4);
    for (int i = 0; i < 500; ++i) {
        auto cls = analysis::classify_stability(ef(rng), eh(rng));
        int members = (cls == StabilityClass::Stable) +
                      (cls == StabilityClass::Metastable) +
                      (cls == StabilityClass::Unstable);
        CHECK(members == 1);
    }
}

TEST_CASE("metrics on perfect predictions") {
    std::vector<std::string> y = {"a", "b", "a", "c"};
    auto rep = analysis::metrics(y, y);
    CHECK(rep.accuracy == doctest::Approx(1.0));
    CHECK(rep.macro_avg.f1 == doctest::Approx(1.0));
    CHECK(rep.weighted_avg.f1 == doctest::Approx(1.0));
}

TEST_CASE("metrics on an all-one-class prediction") {
    std::vector<std::string> truth = {"a", "a", "a", "b"};
    std::vector<std::string> pred = {"a", "a", "a", "a"};
    auto rep = analysis::metrics(pred, truth);
    CHECK(rep.weighted_avg.recall == doctest::Approx(0.75));
    CHECK(rep.per_class.at("a").precision == doctest::Approx(0.75));
    CHECK(rep.per_class.at("a").recall == doctest::Approx(1.0));
    CHECK(rep.per_class.at("b").precision == doctest::Approx(0.0)); // 0/0 -> 0
    CHECK(rep.per_class.at("b").f1 == doctest::Approx(0.0));
    CHECK(rep.macro_avg.recall == doctest::Approx(0.5));
}

TEST_CASE("metrics invariant under consistent relabeling") {
    std::vector<std::string> truth = {"a", "b", "a", "b", "a"};
    std::vector<std::string> pred = {"a", "a", "b", "b", "a"};
    auto r1 = analysis::metrics(pred, truth);
    auto relabel = [](std::vector<std::string> v) {
        for (auto& s : v)
            s = (s == "a") ? "x" : "y";
        return v;
    };
    auto r2 = analysis::metrics(relabel(pred), relabel(truth));
    CHECK(r1.macro_avg.f1 == doctest::Approx(r2.macro_avg.f1).epsilon(1e-15));
    CHECK(r1.weighted_avg.f1 ==
          doctest::Approx(r2.weighted_avg.f1).epsilon(1e-15));
    CHECK(r1.accuracy == doctest::Approx(r2.accuracy).epsilon(1e-15));
}

TEST_CASE("weighted F1 equals the support-weighted mean of class F1") {
    std::mt19937 rng(17);
    std::uniform_int_distribution<int> cls(0, 2);
    std::vector<std::string> names = {"stable", "metastable", "unstable"};
    std::vector<std::string> truth, pred;
    for (int i = 0; i < 200; ++i) {
        truth.push_back(names[cls(rng)]);
        pred.push_back(names[cls(rng)]);
    }
    auto rep = analysis::metrics(pred, truth);
    double acc = 0.0;
    for (const auto& [name, m] : rep.per_class)
        acc += m.f1 * static_cast<double>(m.support);
    acc /= static_cast<double>(rep.total);
    CHECK(std::fabs(rep.weighted_avg.f1 - acc) < 1e-12);
}

TEST_CASE("metrics length mismatch") {
    CHECK_THROWS_AS(analysis::metrics({"a"}, {"a", "b"}),
                    analysis::LengthMismatch);
    CHECK_THROWS_AS(analysis::metrics({}, {}), analysis::LengthMismatch);
}

TEST_CASE("batch_report aggregates per query and case") {
    const auto& reg = shipped_registry();
    std::vector<analysis::LabeledRecord> records;
    // 3 accepted records for one query/case; 2 labeled.
    records.push_back({"q1", "case2", "Cs2AgBiBr6", 2, true,
                       analysis::make_label(-1.2, 0.0)});
    records.push_back({"q1", "case2", "Cs2AgBiCl6", 0, true,
                       analysis::make_label(-1.0, 0.2)});
    records.push_back({"q1", "case2", "Rb2AgSbF6", 4, true, std::nullopt});
    // one failed record in another case
    records.push_back({"q1", "case1", "", 0, false, std::nullopt});

    std::vector<chem::Composition> training;
    for (const auto& f : {"Cs2AgBiCl6", "Rb2AgBiCl6", "K2AgBiCl6",
                          "Cs2AgSbCl6", "Cs2AgBiI6", "Cs2CuBiCl6",
                          "Rb2AgSbBr6", "K2CuInI6", "Ba2YNbO6", "Sr2YNbO6"})
        training.push_back(chem::parse_formula(f));

    auto table = analysis::batch_report(records, training, reg);
    REQUIRE(table.rows.size() == 2);

    const auto& failed = table.rows[0]; // case1 sorts first
    CHECK(failed.case_label == "case1");
    CHECK(failed.accepted == 0);
    CHECK(!failed.stable_or_metastable_fraction.has_value());
    CHECK(!failed.mean_rejections_per_accepted.has_value());

    const auto& row = table.rows[1];
    CHECK(row.case_label == "case2");
    CHECK(row.records == 3);
    CHECK(row.accepted == 3);
    CHECK(row.labeled == 2);
    // stable + unstable labeled -> 1/2
    CHECK(*row.stable_or_metastable_fraction == doctest::Approx(0.5));
    CHECK(*row.mean_energy_above_hull == doctest::Approx(0.1));
    CHECK(*row.mean_rejections_per_accepted == doctest::Approx(2.0));
    CHECK(row.mean_top10_eimd.has_value());

    // CSV and JSON render without blowing up and carry the gap semantics
    auto csv = table.to_csv();
    CHECK(csv.find("case1") != std::string::npos);
    auto j = table.to_json();
    CHECK(j[0]["stable_or_metastable_fraction"].is_null());
}
