#include "doctest.h"

#include <cmath>
#include <random>

#include "revgen/stats.hpp"

using namespace revgen;
using namespace revgen::stats;

// The three audit-count vectors reconstructed from the published per-stage
// metric set (five simultaneous metric equations per row have a unique
// non-negative integer solution).
static const ConfusionCounts kExtraction{50, 788, 0, 37};
static const ConfusionCounts kMiningDirect{1029, 355, 194, 172};
static const ConfusionCounts kMiningAggregated{250, 78, 18, 4};

TEST_CASE("confusion metrics reproduce the published audit table") {
    auto pct = [](MetricValue v) { return v.value * 100.0; };

    MetricReport r1 = confusion_metrics(kExtraction);
    CHECK(pct(r1.accuracy) == doctest::Approx(95.77).epsilon(0.0001));
    CHECK(pct(r1.precision) == doctest::Approx(100.0));
    CHECK(pct(r1.recall) == doctest::Approx(57.47).epsilon(0.0001));
    CHECK(pct(r1.f1) == doctest::Approx(72.99).epsilon(0.0001));
    CHECK(pct(r1.fpr) == doctest::Approx(0.0));
    CHECK(r1.n_points == 875);

    MetricReport r2 = confusion_metrics(kMiningDirect);
    CHECK(pct(r2.accuracy) == doctest::Approx(79.09).epsilon(0.0001));
    CHECK(pct(r2.fpr) == doctest::Approx(35.34).epsilon(0.0002));
    CHECK(pct(r2.precision) == doctest::Approx(84.14).epsilon(0.0001));
    CHECK(pct(r2.recall) == doctest::Approx(85.68).epsilon(0.0001));
    CHECK(pct(r2.f1) == doctest::Approx(84.90).epsilon(0.0001));
    CHECK(r2.n_points == 1750);

    MetricReport r3 = confusion_metrics(kMiningAggregated);
    CHECK(pct(r3.accuracy) == doctest::Approx(93.71).epsilon(0.0001));
    CHECK(pct(r3.fpr) == doctest::Approx(18.75));
    CHECK(pct(r3.precision) == doctest::Approx(93.28).epsilon(0.0001));
    CHECK(pct(r3.recall) == doctest::Approx(98.43).epsilon(0.0001));
    CHECK(pct(r3.f1) == doctest::Approx(95.79).epsilon(0.0001));
    CHECK(r3.n_points == 350);
}

TEST_CASE("metric identities hold exactly on integer counts") {
    std::mt19937 rng(7u);
    std::uniform_int_distribution<long> d(0, 500);
    for (int i = 0; i < 200; ++i) {
        ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
        if (c.total() == 0) continue;
        MetricReport r = confusion_metrics(c);
        if (r.recall.defined) {
            CHECK(r.recall.value * static_cast<double>(c.tp + c.fn) ==
                  doctest::Approx(static_cast<double>(c.tp)));
        }
        if (r.precision.defined) {
            CHECK(r.precision.value * static_cast<double>(c.tp + c.fp) ==
                  doctest::Approx(static_cast<double>(c.tp)));
        }
        if (r.fpr.defined) {
            CHECK(r.fpr.value * static_cast<double>(c.fp + c.tn) ==
                  doctest::Approx(static_cast<double>(c.fp)));
        }
        CHECK(r.accuracy.value * static_cast<double>(c.total()) ==
              doctest::Approx(static_cast<double>(c.tp + c.tn)));
    }
}

TEST_CASE("undefined metrics are flagged instead of faked") {
    MetricReport r = confusion_metrics({0, 10, 0, 0});
    CHECK_FALSE(r.precision.defined);
    CHECK_FALSE(r.recall.defined);
    CHECK_FALSE(r.f1.defined);
    CHECK(r.accuracy.defined);
}

TEST_CASE("normal quantile matches reference values") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
    CHECK(normal_quantile(0.995) == doctest::Approx(2.5758293035489004).epsilon(1e-10));
    CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-10));
    CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-10));
}

TEST_CASE("wilson interval reproduces the published confidence bounds") {
    auto r1 = wilson_interval(0, 788, 0.95);
    REQUIRE(r1.ok());
    CHECK(r1.value().first * 100 == doctest::Approx(0.0));
    CHECK(r1.value().second * 100 == doctest::Approx(0.48512979181657).epsilon(1e-8));

    auto r2 = wilson_interval(194, 549, 0.95);
    REQUIRE(r2.ok());
    CHECK(r2.value().first * 100 == doctest::Approx(31.45290818846532).epsilon(1e-8));
    CHECK(r2.value().second * 100 == doctest::Approx(39.4248186116483).epsilon(1e-8));

    auto r3 = wilson_interval(18, 96, 0.95);
    REQUIRE(r3.ok());
    CHECK(r3.value().first * 100 == doctest::Approx(12.202469989311636).epsilon(1e-8));
    CHECK(r3.value().second * 100 == doctest::Approx(27.702254251793097).epsilon(1e-8));
}

TEST_CASE("wilson interval properties") {
    std::mt19937 rng(11u);
    std::uniform_int_distribution<long> nd(1, 2000);
    for (int i = 0; i < 200; ++i) {
        long n = nd(rng);
        long x = std::uniform_int_distribution<long>(0, n)(rng);
        auto ci = wilson_interval(x, n, 0.95);
        REQUIRE(ci.ok());
        double p = static_cast<double>(x) / static_cast<double>(n);
        CHECK(ci.value().first <= p + 1e-12);
        CHECK(ci.value().second >= p - 1e-12);
        CHECK(ci.value().first >= 0.0);
        CHECK(ci.value().second <= 1.0);

        // Same ratio at 4x the sample size gives a strictly narrower interval.
        auto wide = wilson_interval(4 * x, 4 * n, 0.95);
        REQUIRE(wide.ok());
        CHECK(wide.value().second - wide.value().first <
              ci.value().second - ci.value().first + 1e-15);
    }
    CHECK_FALSE(wilson_interval(5, 0, 0.95).ok());
    CHECK_FALSE(wilson_interval(-1, 10, 0.95).ok());
    CHECK_FALSE(wilson_interval(11, 10, 0.95).ok());
}

TEST_CASE("clopper-pearson interval matches a beta-quantile oracle") {
    // Frozen from an independent beta-quantile computation.
    auto c1 = clopper_pearson_interval(0, 788, 0.95);
    REQUIRE(c1.ok());
    CHECK(c1.value().first == doctest::Approx(0.0));
    CHECK(c1.value().second == doctest::Approx(0.004670378808257694).epsilon(1e-8));

    auto c2 = clopper_pearson_interval(194, 549, 0.95);
    REQUIRE(c2.ok());
    CHECK(c2.value().first == doctest::Approx(0.31335570691480397).epsilon(1e-8));
    CHECK(c2.value().second == doctest::Approx(0.394971804311331).epsilon(1e-8));

    auto c3 = clopper_pearson_interval(3, 10, 0.95);
    REQUIRE(c3.ok());
    CHECK(c3.value().first == doctest::Approx(0.0667395111777345).epsilon(1e-8));
    CHECK(c3.value().second == doctest::Approx(0.6524528500599973).epsilon(1e-8));

    auto c4 = clopper_pearson_interval(10, 10, 0.95);
    REQUIRE(c4.ok());
    CHECK(c4.value().first == doctest::Approx(0.6915028921812392).epsilon(1e-8));
    CHECK(c4.value().second == doctest::Approx(1.0));
}

TEST_CASE("interval method switch selects wilson or clopper-pearson") {
    auto w = binomial_interval(18, 96, 0.95, IntervalMethod::wilson);
    auto cp = binomial_interval(18, 96, 0.95, IntervalMethod::clopper_pearson);
    REQUIRE(w.ok());
    REQUIRE(cp.ok());
    CHECK(w.value().second == doctest::Approx(0.27702254251793097).epsilon(1e-8));
    CHECK(cp.value().second == doctest::Approx(0.2800462474267437).epsilon(1e-8));
}

TEST_CASE("majority accuracy matches direct binomial summation") {
    CHECK(majority_accuracy(0.7909, 5).value() == doctest::Approx(0.9348524671).epsilon(1e-8));
    CHECK(majority_accuracy(0.7909, 7).value() == doctest::Approx(0.9611672955).epsilon(1e-8));
    CHECK(majority_accuracy(0.7909, 9).value() == doctest::Approx(0.9763988488).epsilon(1e-8));
    CHECK(majority_accuracy(0.5, 7).value() == doctest::Approx(0.5));
    CHECK(majority_accuracy(0.42, 1).value() == doctest::Approx(0.42));
    CHECK(majority_accuracy(0.0, 5).value() == doctest::Approx(0.0));
    CHECK(majority_accuracy(1.0, 5).value() == doctest::Approx(1.0));
}

TEST_CASE("majority accuracy rejects even repetition counts") {
    auto r = majority_accuracy(0.8, 4);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == "even_repetitions");
    CHECK_FALSE(majority_accuracy(1.2, 5).ok());
    CHECK_FALSE(majority_accuracy(0.8, 0).ok());
}

TEST_CASE("majority accuracy is monotone in n around p=0.5") {
    for (double p : {0.6, 0.7909, 0.9}) {
        double prev = majority_accuracy(p, 1).value();
        for (int n = 3; n <= 15; n += 2) {
            double cur = majority_accuracy(p, n).value();
            CHECK(cur > prev);
            prev = cur;
        }
    }
    for (double p : {0.1, 0.4}) {
        double prev = majority_accuracy(p, 1).value();
        for (int n = 3; n <= 15; n += 2) {
            double cur = majority_accuracy(p, n).value();
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("label ingestion validates structure and reports row numbers") {
    std::string good =
        "stage,doi,item,label\n"
        "extraction,10.1021/a,Q1,TP\n"
        "mining_direct,10.1021/b,type:r1,FP\n"
        "mining_aggregated,10.1021/b,type,TN\n";
    auto records = ingest_labels(good);
    REQUIRE(records.ok());
    REQUIRE(records.value().size() == 3);
    CHECK(records.value()[0].label == Label::TP);
    CHECK(records.value()[1].stage == "mining_direct");

    ConfusionCounts all = tally(records.value());
    CHECK(all.tp == 1);
    CHECK(all.fp == 1);
    CHECK(all.tn == 1);
    ConfusionCounts only = tally(records.value(), "extraction");
    CHECK(only.total() == 1);

    CHECK(ingest_labels("").value().empty());
    CHECK(ingest_labels("bad,header\n").error().code == "bad_header");

    std::string bad_label = "stage,doi,item,label\nextraction,10.1/a,Q1,XX\n";
    auto rej = ingest_labels(bad_label);
    REQUIRE_FALSE(rej.ok());
    CHECK(rej.error().message.find("row 2") != std::string::npos);

    std::string bad_stage = "stage,doi,item,label\nscreening,10.1/a,Q1,TP\n";
    CHECK_FALSE(ingest_labels(bad_stage).ok());
}

TEST_CASE("consistency rate counts only full-agreement verdicts") {
    CHECK(consistency_rate({100, 100, 90, 100}).value() == doctest::Approx(0.75));
    CHECK(consistency_rate({100, 100}).value() == doctest::Approx(1.0));
    CHECK(consistency_rate({100, std::nullopt, 80, std::nullopt}).value() == doctest::Approx(0.5));
    auto none = consistency_rate({std::nullopt, std::nullopt});
    REQUIRE_FALSE(none.ok());
    CHECK(none.error().code == "undefined");
}

TEST_CASE("fpr interval attaches to the report") {
    MetricReport r = with_fpr_interval(confusion_metrics(kMiningDirect), kMiningDirect, 0.95,
                                       IntervalMethod::wilson);
    REQUIRE(r.has_ci);
    CHECK(r.fpr_ci.first * 100 == doctest::Approx(31.4529).epsilon(0.0001));
    CHECK(r.fpr_ci.second * 100 == doctest::Approx(39.4248).epsilon(0.0001));
    CHECK(r.fpr_ci.first <= r.fpr.value);
    CHECK(r.fpr.value <= r.fpr_ci.second);
}
