#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "revgen/composition.hpp"
#include "revgen/corpus.hpp"
#include "revgen/gateway.hpp"
#include "revgen/util.hpp"

namespace revgen::evalframe {

struct Fragment {
    std::string id;
    std::string review_id;
    std::string topic;
    std::vector<std::string> dois;  // sources cited inside the span; never empty
    std::string text;               // the human-written span
};

std::string fragment_to_json(const Fragment& f);
Result<Fragment> fragment_from_json(const std::string& text);
VoidResult save_fragments(const std::vector<Fragment>& frags, const std::string& path);
Result<std::vector<Fragment>> load_fragments(const std::string& path);

enum class Origin { human, method, direct };

std::string origin_name(Origin o);
Result<Origin> origin_from(const std::string& name);

struct Candidate {
    std::string id;
    std::string fragment_id;
    Origin origin = Origin::human;
    std::string text;
};

struct RubricItem {
    std::string id;        // "<category>-<n>"
    std::string category;
    std::string prompt;    // comparison criterion handed to the judge
};

struct Rubric {
    std::vector<RubricItem> items;
};

// Nine categories of three items each; every category carries weight 1/9.
VoidResult validate_rubric(const Rubric& rubric);
Rubric default_rubric();
Result<Rubric> rubric_from_json(const std::string& text);
std::string rubric_to_json(const Rubric& rubric);
Result<Rubric> load_rubric(const std::string& path);

enum class Verdict { A, B, tie };

std::string verdict_name(Verdict v);

struct ComparisonRecord {
    std::string fragment_id;
    std::string item_id;
    std::string a, b;  // candidate ids; a != b
    int repetition = 0;
    Verdict verdict_ab = Verdict::tie;  // winner when a was presented first
    Verdict verdict_ba = Verdict::tie;  // winner when b was presented first
    Verdict verdict = Verdict::tie;     // order-neutralized outcome
};

std::string record_to_json(const ComparisonRecord& r);
Result<ComparisonRecord> record_from_json(const std::string& text);
VoidResult save_records(const std::vector<ComparisonRecord>& records, const std::string& path);
Result<std::vector<ComparisonRecord>> load_records(const std::string& path);

// Splits a human review into topic-labeled fragments at the anchors the
// model proposes. Fragments citing nothing are dropped with a warning: they
// cannot be regenerated from source literature.
Result<std::vector<Fragment>> segment_review(gateway::Gateway& gw,
                                             const corpus::Document& review,
                                             std::vector<std::string>* warnings = nullptr);

struct CandidateParams {
    int fragment_index = 1;  // dense per-fragment index, keeps request keys distinct
    int method_candidates = 1;
    int direct_candidates = 1;
    composition::BestOfNParams best;
};

// Builds the human candidate from the fragment text, method candidates via
// the gated best-of-n pipeline over the cited documents, and direct-baseline
// candidates via single ungated completions over the same sources.
Result<std::vector<Candidate>> generate_candidates(
    gateway::Gateway& gw, const Fragment& fragment,
    const std::map<std::string, corpus::Document>& corpus_docs, const CandidateParams& params,
    std::vector<std::string>* warnings = nullptr);

// One record per landed repetition. Each repetition asks the judge twice
// with the presentation order swapped; disagreement between the two orders
// neutralizes to a tie. Judge trouble skips the repetition.
Result<std::vector<ComparisonRecord>> pairwise_compare(gateway::Gateway& gw, const Candidate& a,
                                                       const Candidate& b,
                                                       const RubricItem& item, int repetitions);

struct ScoreOutcome {
    std::map<std::string, double> scores;  // candidate id -> [0, 10]
    bool degenerate = false;               // nothing but ties: everyone at 5.0
};

// Random-walk ranking over the comparison graph (loser points at winner,
// ties split half each way, damping 0.85, dangling mass spread uniformly),
// iterated to an L1 delta below 1e-10, then mapped affinely so the minimum
// lands on 0 and the maximum on 10.
Result<ScoreOutcome> pagerank_scores(const std::vector<ComparisonRecord>& records);

struct IccResult {
    double icc21 = 0.0;  // single-rater, absolute agreement
    double icc2k = 0.0;  // average of k raters
    double msr = 0.0, msc = 0.0, mse = 0.0;
    bool degenerate_perfect = false;  // zero total variance
};

// Two-way random-effects, absolute-agreement intraclass correlation over a
// complete raters-by-subjects matrix (rows = raters, columns = subjects).
Result<IccResult> icc(const std::vector<std::vector<double>>& raters_by_subjects);

struct TcrOutcome {
    double ratio = 0.0;
    int eligible = 0;  // triples whose three pairwise majorities are all non-tie
    int acyclic = 0;
    bool applicable = false;
};

// Fraction of candidate triples whose majority preferences form no cycle.
TcrOutcome tcr(const std::vector<ComparisonRecord>& records);

struct ScoreRow {
    std::string fragment_id;
    std::string item_id;
    std::string candidate_id;
    Origin origin = Origin::human;
    double score = 0.0;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
};

std::string scores_to_csv(const ScoreTable& table);

struct OriginStats {
    double mean_score = 0.0;     // mean candidate aggregate
    double best_score = 0.0;     // best candidate aggregate
    double mean_percent = 0.0;   // mean aggregate as percent of human
    double best_percent = 0.0;
    int candidates = 0;
};

struct RelativeReport {
    std::map<Origin, OriginStats> origins;
    // item id -> origin -> mean absolute score on that item
    std::map<std::string, std::map<Origin, double>> per_item;
    std::vector<std::string> flags;  // fragments with an unusable human baseline
};

// Candidate aggregate = mean over rubric items, which equals the weighted
// category mean because every category holds the same number of items.
// Percentages compare against the human candidate of the same fragment and
// average across fragments.
Result<RelativeReport> relative_report(const ScoreTable& table);

struct ReliabilityRow {
    std::string fragment_id;
    std::string item_id;
    IccResult icc;
    TcrOutcome tcr;
};

// Repetition-as-rater reliability for one (fragment, item): each repetition's
// records are ranked separately and the per-repetition score vectors form the
// rater matrix. Needs every repetition to cover the same candidate set.
Result<ReliabilityRow> repetition_reliability(const std::vector<ComparisonRecord>& records);

std::string reliability_to_csv(const std::vector<ReliabilityRow>& rows);

}  // namespace revgen::evalframe
