#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "revgen/composition.hpp"
#include "revgen/config.hpp"
#include "revgen/corpus.hpp"
#include "revgen/evalframe.hpp"
#include "revgen/extraction.hpp"
#include "revgen/gateway.hpp"
#include "revgen/ledger.hpp"
#include "revgen/stats.hpp"
#include "revgen/util.hpp"

namespace revgen::pipeline {

// Canonical execution order; every subset runs in this order.
const std::vector<std::string>& stage_order();

// Validates names, drops duplicates, and sorts the request into canonical
// order. An empty request means every stage.
Result<std::vector<std::string>> resolve_stages(const std::vector<std::string>& requested);

// Owns the gateway and the run journal for one run directory. Stages are
// idempotent: a stage already marked done is skipped, and unfinished stages
// resume at cell granularity from the journal's payload scratch, so a killed
// run converges to the same artifacts as an uninterrupted one.
class Pipeline {
public:
    static Result<Pipeline> open(const config::RunConfig& cfg);

    Pipeline(Pipeline&&) = default;
    Pipeline& operator=(Pipeline&&) = default;

    const std::filesystem::path& run_dir() const { return run_dir_; }
    gateway::Gateway& gw() { return *gw_; }
    ledger::RunLedger& journal() { return *ledger_; }

    // Runs the requested stages in canonical order, checking that each
    // stage's inputs exist first (error "missing_dependency" names the stage
    // that should have produced them).
    VoidResult run(const std::vector<std::string>& stages);
    VoidResult run_stage(const std::string& stage);

private:
    Pipeline() = default;

    VoidResult check_dependencies(const std::string& stage);
    VoidResult stage_search();
    VoidResult stage_screen();
    VoidResult stage_outline();
    VoidResult stage_extract();
    VoidResult stage_compose();
    VoidResult stage_mine();
    VoidResult stage_evaluate();

    Result<std::vector<corpus::Document>> load_corpus() const;

    config::RunConfig cfg_;
    std::filesystem::path run_dir_;
    std::unique_ptr<gateway::Gateway> gw_;
    std::unique_ptr<ledger::RunLedger> ledger_;
};

// Everything the report command summarizes about a run directory. Counters
// are recounted from the stage files, never taken from the journal.
struct RunReport {
    corpus::FunnelStats funnel;
    bool funnel_present = false;
    long raw_answers = 0;
    long combinations = 0;
    long mined_records = 0;
    composition::PassRates drafts;
    std::map<int, double> best_scores;  // topic id -> chosen draft score
    std::vector<int> failed_topics;
    double consistency = 0.0;  // fraction of consistency verdicts at 100
    bool consistency_defined = false;
    long consistency_points = 0;
    // keyed by label stage: extraction, mining_direct, mining_aggregated
    std::map<std::string, stats::ConfusionCounts> label_counts;
    std::map<std::string, stats::MetricReport> label_metrics;
};

// Missing artifacts read as zeros (an empty run reports all zeros); a
// malformed artifact line or journal line is an integrity error naming it.
Result<RunReport> build_report(const std::filesystem::path& run_dir,
                               const config::RunConfig& cfg);
std::string report_to_json(const RunReport& r);
// One row per labeled stage: the confusion metrics with the FPR interval.
std::string report_table_csv(const RunReport& r);
// stats/report.json and stats/table.csv under the run directory.
VoidResult write_report(const RunReport& r, const std::filesystem::path& run_dir);

// Provenance chain for one DOI (or one review sentence): the sentences that
// cite it, the aggregated combinations those citations come from, and the
// raw per-repetition answers behind the combinations.
struct TraceChain {
    std::string query;
    std::string status;  // cited | uncited | unknown | sentence
    std::vector<composition::SentenceTrace> sentences;
    std::vector<extraction::InfoCombination> combinations;
    std::vector<extraction::RawAnswer> raw_answers;
    std::vector<std::string> nearest;  // closest corpus DOIs when unknown
};

Result<TraceChain> trace_doi(const std::filesystem::path& run_dir, const std::string& query);
Result<TraceChain> trace_sentence(const std::filesystem::path& run_dir, int index);
std::string trace_chain_to_json(const TraceChain& chain);

// JSON body of evaluation/report.json: origin statistics, per-item means,
// and baseline flags from the relative report.
std::string evaluation_report_json(const evalframe::RelativeReport& report);

}  // namespace revgen::pipeline
