#include "revgen/stats.hpp"

#include <algorithm>
#include <cmath>

namespace revgen::stats {

namespace {

Result<Label> parse_label(std::string_view s) {
    using R = Result<Label>;
    if (s == "TP") return R(Label::TP);
    if (s == "TN") return R(Label::TN);
    if (s == "FP") return R(Label::FP);
    if (s == "FN") return R(Label::FN);
    return R::failure("bad_label", "unknown label '" + std::string(s) + "'");
}

bool known_stage(std::string_view s) {
    return s == "extraction" || s == "mining_direct" || s == "mining_aggregated";
}

MetricValue ratio(long num, long den) {
    if (den <= 0) return {0.0, false};
    return {static_cast<double>(num) / static_cast<double>(den), true};
}

// Continued fraction for the regularized incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

// Quantile of Beta(a,b) by bisection on incomplete_beta; monotone, so plain
// bisection converges unconditionally.
double beta_quantile(double p, double a, double b) {
    double lo = 0.0;
    double hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (incomplete_beta(a, b, mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo < 1e-15) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log(1.0 - x);
    double front = std::exp(ln_front);
    // Continued fraction converges fastest on the side below the mean.
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

Result<std::vector<LabelRecord>> ingest_labels(const std::string& csv_content) {
    using R = Result<std::vector<LabelRecord>>;
    std::vector<LabelRecord> out;
    if (trim(csv_content).empty()) return R(std::move(out));
    std::vector<std::string> lines = split(csv_content, '\n');
    if (lines.empty() || trim(lines[0]) != "stage,doi,item,label") {
        return R::failure("bad_header", "expected header 'stage,doi,item,label'");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.empty()) continue;
        std::vector<std::string> fields = csv_parse_line(line);
        if (fields.size() != 4) {
            return R::failure("bad_row", "row " + std::to_string(i + 1) + ": expected 4 fields, got " +
                                             std::to_string(fields.size()));
        }
        LabelRecord rec;
        rec.stage = trim(fields[0]);
        rec.doi = trim(fields[1]);
        rec.item = trim(fields[2]);
        if (!known_stage(rec.stage)) {
            return R::failure("bad_row", "row " + std::to_string(i + 1) + ": unknown stage '" +
                                             rec.stage + "'");
        }
        auto label = parse_label(trim(fields[3]));
        if (!label) {
            return R::failure("bad_row",
                              "row " + std::to_string(i + 1) + ": " + label.error().message);
        }
        rec.label = label.value();
        out.push_back(std::move(rec));
    }
    return R(std::move(out));
}

Result<std::vector<LabelRecord>> ingest_labels_file(const std::filesystem::path& path) {
    auto content = read_file(path);
    if (!content) return content.forward<std::vector<LabelRecord>>();
    return ingest_labels(content.value());
}

ConfusionCounts tally(const std::vector<LabelRecord>& records, std::string_view stage) {
    ConfusionCounts c;
    for (const LabelRecord& r : records) {
        if (!stage.empty() && r.stage != stage) continue;
        switch (r.label) {
            case Label::TP: ++c.tp; break;
            case Label::TN: ++c.tn; break;
            case Label::FP: ++c.fp; break;
            case Label::FN: ++c.fn; break;
        }
    }
    return c;
}

MetricReport confusion_metrics(const ConfusionCounts& c) {
    MetricReport r;
    r.n_points = c.total();
    r.accuracy = ratio(c.tp + c.tn, c.total());
    r.precision = ratio(c.tp, c.tp + c.fp);
    r.recall = ratio(c.tp, c.tp + c.fn);
    r.fpr = ratio(c.fp, c.fp + c.tn);
    if (r.precision.defined && r.recall.defined && r.precision.value + r.recall.value > 0.0) {
        r.f1 = {2.0 * r.precision.value * r.recall.value / (r.precision.value + r.recall.value),
                true};
    } else {
        r.f1 = {0.0, false};
    }
    return r;
}

MetricReport with_fpr_interval(MetricReport report, const ConfusionCounts& c, double confidence,
                               IntervalMethod method) {
    if (c.fp + c.tn <= 0) return report;
    auto ci = binomial_interval(c.fp, c.fp + c.tn, confidence, method);
    if (ci) {
        report.fpr_ci = ci.value();
        report.has_ci = true;
    }
    return report;
}

double normal_quantile(double p) {
    // Acklam's rational approximation, then two Halley refinements against
    // erfc; the result is accurate to well below 1e-12.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p <= 0.0) return -HUGE_VAL;
    if (p >= 1.0) return HUGE_VAL;

    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    constexpr double sqrt_2pi = 2.5066282746310002;
    for (int i = 0; i < 2; ++i) {
        double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
        double u = e * sqrt_2pi * std::exp(x * x / 2.0);
        x = x - u / (1.0 + x * u / 2.0);
    }
    return x;
}

Result<std::pair<double, double>> wilson_interval(long x, long n, double confidence) {
    using R = Result<std::pair<double, double>>;
    if (n < 1 || x < 0 || x > n) {
        return R::failure("bad_input", "need 0 <= x <= n, n >= 1");
    }
    if (confidence <= 0.0 || confidence >= 1.0) {
        return R::failure("bad_input", "confidence must lie in (0,1)");
    }
    double z = normal_quantile(0.5 + confidence / 2.0);
    double z2 = z * z;
    double nn = static_cast<double>(n);
    double phat = static_cast<double>(x) / nn;
    double denom = 1.0 + z2 / nn;
    double center = (phat + z2 / (2.0 * nn)) / denom;
    double half = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
    double lo = std::max(0.0, center - half);
    double hi = std::min(1.0, center + half);
    return R(std::make_pair(lo, hi));
}

Result<std::pair<double, double>> clopper_pearson_interval(long x, long n, double confidence) {
    using R = Result<std::pair<double, double>>;
    if (n < 1 || x < 0 || x > n) {
        return R::failure("bad_input", "need 0 <= x <= n, n >= 1");
    }
    if (confidence <= 0.0 || confidence >= 1.0) {
        return R::failure("bad_input", "confidence must lie in (0,1)");
    }
    double alpha = 1.0 - confidence;
    double lo = 0.0;
    double hi = 1.0;
    if (x > 0) {
        lo = beta_quantile(alpha / 2.0, static_cast<double>(x), static_cast<double>(n - x + 1));
    }
    if (x < n) {
        hi = beta_quantile(1.0 - alpha / 2.0, static_cast<double>(x + 1),
                           static_cast<double>(n - x));
    }
    return R(std::make_pair(lo, hi));
}

Result<std::pair<double, double>> binomial_interval(long x, long n, double confidence,
                                                    IntervalMethod method) {
    if (method == IntervalMethod::wilson) return wilson_interval(x, n, confidence);
    return clopper_pearson_interval(x, n, confidence);
}

Result<double> majority_accuracy(double p, int n) {
    using R = Result<double>;
    if (p < 0.0 || p > 1.0) {
        return R::failure("bad_input", "per-trial accuracy must lie in [0,1]");
    }
    if (n < 1) {
        return R::failure("bad_input", "repetition count must be >= 1");
    }
    if (n % 2 == 0) {
        return R::failure("even_repetitions",
                          "majority is undefined for even n (no tie rule); use odd n");
    }
    double q = 1.0 - p;
    double total = 0.0;
    // Running binomial coefficient keeps everything in exact small integers
    // until the final products; n stays desk-scale (<= dozens).
    double coeff = 1.0;
    for (int k = 0; k <= n; ++k) {
        if (k >= (n + 1) / 2) {
            total += coeff * std::pow(p, k) * std::pow(q, n - k);
        }
        coeff = coeff * static_cast<double>(n - k) / static_cast<double>(k + 1);
    }
    return R(std::min(1.0, total));
}

Result<double> consistency_rate(const std::vector<std::optional<int>>& verdicts) {
    using R = Result<double>;
    long present = 0;
    long hundreds = 0;
    for (const auto& v : verdicts) {
        if (!v.has_value()) continue;
        ++present;
        if (*v == 100) ++hundreds;
    }
    if (present == 0) {
        return R::failure("undefined", "no non-missing verdicts");
    }
    return R(static_cast<double>(hundreds) / static_cast<double>(present));
}

}  // namespace revgen::stats
