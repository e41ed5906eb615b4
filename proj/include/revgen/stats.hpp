#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "revgen/util.hpp"

namespace revgen::stats {

enum class Label { TP, TN, FP, FN };

// One human-audited data point. `stage` scopes which funnel the point audits;
// `item` is a question id or field×repetition key.
struct LabelRecord {
    std::string stage;
    std::string doi;
    std::string item;
    Label label = Label::TN;
};

struct ConfusionCounts {
    long tp = 0;
    long tn = 0;
    long fp = 0;
    long fn = 0;

    long total() const { return tp + tn + fp + fn; }
};

// A metric whose denominator may be zero; undefined values are flagged, never
// substituted.
struct MetricValue {
    double value = 0.0;
    bool defined = false;
};

struct MetricReport {
    MetricValue accuracy;
    MetricValue precision;
    MetricValue recall;
    MetricValue f1;
    MetricValue fpr;
    std::pair<double, double> fpr_ci{0.0, 0.0};
    bool has_ci = false;
    long n_points = 0;
};

enum class IntervalMethod { wilson, clopper_pearson };

// Parses CSV with header `stage,doi,item,label`; labels are TP/TN/FP/FN and
// stages one of extraction, mining_direct, mining_aggregated. A bad row fails
// the whole ingest with its 1-based line number.
Result<std::vector<LabelRecord>> ingest_labels(const std::string& csv_content);
Result<std::vector<LabelRecord>> ingest_labels_file(const std::filesystem::path& path);

// Counts labels, optionally restricted to one stage (empty = all).
ConfusionCounts tally(const std::vector<LabelRecord>& records, std::string_view stage = {});

// accuracy=(tp+tn)/total, precision=tp/(tp+fp), recall=tp/(tp+fn),
// fpr=fp/(fp+tn), f1=2pr/(p+r); each undefined-flagged when its denominator
// is zero. No interval attached here.
MetricReport confusion_metrics(const ConfusionCounts& c);

// Attaches a false-positive-rate interval at `confidence` (e.g. 0.95).
MetricReport with_fpr_interval(MetricReport report, const ConfusionCounts& c,
                               double confidence, IntervalMethod method);

// Inverse standard normal CDF; |error| < 1e-12 over (0,1).
double normal_quantile(double p);

// Wilson score interval for x successes in n trials, clamped to [0,1].
Result<std::pair<double, double>> wilson_interval(long x, long n, double confidence);

// Exact (Clopper-Pearson) interval via the beta quantile.
Result<std::pair<double, double>> clopper_pearson_interval(long x, long n, double confidence);

Result<std::pair<double, double>> binomial_interval(long x, long n, double confidence,
                                                    IntervalMethod method);

// P(majority of n independent trials correct | per-trial accuracy p).
// n must be odd: a tie has no majority and no tie rule is defined.
Result<double> majority_accuracy(double p, int n);

// Fraction of non-missing verdicts equal to 100.
Result<double> consistency_rate(const std::vector<std::optional<int>>& verdicts);

// Regularized incomplete beta I_x(a,b); exposed for the interval tests.
double incomplete_beta(double a, double b, double x);

}  // namespace revgen::stats
