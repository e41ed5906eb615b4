#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "revgen/pipeline.hpp"

using namespace revgen;

namespace {

// 0 success, 2 configuration problem, 3 stage failure (rerun resumes it),
// 4 artifact or journal corruption.
int fail(const Error& e) {
    std::fprintf(stderr, "revgen: %s: %s\n", e.code.c_str(), e.message.c_str());
    if (e.code == "integrity") return 4;
    if (e.code == "bad_config" || e.code == "unknown_stage" || e.code == "bad_index") return 2;
    return 3;
}

struct CliOptions {
    std::string config_path;
    std::string run_dir;
    std::string mock_dir;
    std::string quartile;
    int workers = 0;
    bool resume = false;  // resuming is the default; the flag documents intent
};

Result<config::RunConfig> effective_config(const CliOptions& opt) {
    using R = Result<config::RunConfig>;
    config::RunConfig cfg;
    if (!opt.config_path.empty()) {
        auto loaded = config::load_run_config(opt.config_path);
        if (!loaded.ok()) return loaded;
        cfg = std::move(loaded).take();
    }
    if (!opt.run_dir.empty()) cfg.run_dir = opt.run_dir;
    if (!opt.mock_dir.empty()) {
        cfg.mock_dir = opt.mock_dir;
        cfg.provider = "mock";
    }
    if (opt.workers > 0) cfg.workers = opt.workers;
    if (!opt.quartile.empty()) cfg.quartile = opt.quartile;
    return R(std::move(cfg));
}

int run_stages(const CliOptions& opt, const std::vector<std::string>& stages) {
    auto cfg = effective_config(opt);
    if (!cfg.ok()) return fail(cfg.error());
    auto resolved = pipeline::resolve_stages(stages);
    if (!resolved.ok()) return fail(resolved.error());
    auto p = pipeline::Pipeline::open(cfg.value());
    if (!p.ok()) return fail(p.error());
    for (const std::string& stage : resolved.value()) {
        if (p.value().journal().stage_done(stage)) {
            std::printf("%-8s already done\n", stage.c_str());
            continue;
        }
        auto ran = p.value().run({stage});
        if (!ran.ok()) return fail(ran.error());
        std::printf("%-8s done\n", stage.c_str());
    }
    return 0;
}

void print_metric(const char* name, const stats::MetricValue& v) {
    if (v.defined) {
        std::printf(" %s %.2f%%", name, v.value * 100.0);
    } else {
        std::printf(" %s n/a", name);
    }
}

int report_command(const CliOptions& opt, bool table_only) {
    auto cfg = effective_config(opt);
    if (!cfg.ok()) return fail(cfg.error());
    auto report = pipeline::build_report(cfg.value().run_dir, cfg.value());
    if (!report.ok()) return fail(report.error());
    auto wrote = pipeline::write_report(report.value(), cfg.value().run_dir);
    if (!wrote.ok()) return fail(wrote.error());

    const pipeline::RunReport& r = report.value();
    if (table_only) {
        std::fputs(pipeline::report_table_csv(r).c_str(), stdout);
        return 0;
    }
    std::printf("funnel: retrieved %ld -> deduplicated %ld -> keyword %ld -> accepted %ld%s\n",
                r.funnel.retrieved, r.funnel.deduplicated, r.funnel.keyword_passed,
                r.funnel.llm_passed, r.funnel_present ? "" : " (no search ran)");
    std::printf("extraction: %ld raw answers, %ld combinations", r.raw_answers,
                r.combinations);
    if (r.consistency_defined) {
        std::printf(", consistency %.2f%% over %ld checks", r.consistency * 100.0,
                    r.consistency_points);
    }
    std::printf("\n");
    std::printf("composition: %d drafts, %d passing (%.2f%%), format fails %.2f%%, citation "
                "fails %.2f%%\n",
                r.drafts.total, r.drafts.passing, r.drafts.pass_percent(),
                r.drafts.format_fail_percent(), r.drafts.doi_fail_percent());
    for (const auto& [topic, score] : r.best_scores) {
        std::printf("  topic %d best score %.6g\n", topic, score);
    }
    for (int topic : r.failed_topics) {
        std::printf("  topic %d failed: no draft cleared the gates\n", topic);
    }
    std::printf("mining: %ld records\n", r.mined_records);
    for (const auto& [stage, m] : r.label_metrics) {
        std::printf("labels %s: n=%ld", stage.c_str(), m.n_points);
        print_metric("accuracy", m.accuracy);
        print_metric("precision", m.precision);
        print_metric("recall", m.recall);
        print_metric("f1", m.f1);
        print_metric("fpr", m.fpr);
        if (m.has_ci) {
            std::printf(" ci [%.2f%%, %.2f%%]", m.fpr_ci.first * 100.0,
                        m.fpr_ci.second * 100.0);
        }
        std::printf("\n");
    }
    std::printf("written: stats/report.json, stats/table.csv\n");
    return 0;
}

int trace_command(const CliOptions& opt, const std::string& query) {
    auto cfg = effective_config(opt);
    if (!cfg.ok()) return fail(cfg.error());

    // "sentence:N" (or a bare number) walks from one review sentence instead
    // of from a DOI.
    std::string ref = trim(query);
    long sentence_index = -1;
    std::string digits = ref;
    if (ref.rfind("sentence:", 0) == 0) digits = ref.substr(9);
    if (!digits.empty() &&
        std::all_of(digits.begin(), digits.end(),
                    [](unsigned char c) { return std::isdigit(c) != 0; })) {
        sentence_index = std::stol(digits);
    }

    auto chain = sentence_index >= 0
                     ? pipeline::trace_sentence(cfg.value().run_dir,
                                                static_cast<int>(sentence_index))
                     : pipeline::trace_doi(cfg.value().run_dir, ref);
    if (!chain.ok()) return fail(chain.error());
    std::fputs(pipeline::trace_chain_to_json(chain.value()).c_str(), stdout);
    std::printf("\n");
    if (chain.value().status == "unknown") {
        std::fprintf(stderr, "revgen: %s is not in the corpus; nearest DOIs listed above\n",
                     chain.value().query.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-driven literature review pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    CliOptions opt;
    app.add_option("--config", opt.config_path, "configuration file")
        ->check(CLI::ExistingFile);
    app.add_option("--run-dir", opt.run_dir, "run directory (artifacts and journal)");
    app.add_option("--mock-dir", opt.mock_dir,
                   "scripted-response directory; implies the mock provider");
    app.add_option("--workers", opt.workers, "worker threads per stage")
        ->check(CLI::PositiveNumber);
    app.add_option("--quartile", opt.quartile, "journal tier filter")
        ->check(CLI::IsMember({"q1", "q1-q3"}));
    app.add_flag("--resume", opt.resume,
                 "explicitly acknowledge resuming an interrupted run (resuming is the "
                 "default whenever the journal allows it)");

    std::vector<std::string> stage_list;
    CLI::App* run = app.add_subcommand("run", "run every stage, or --stages, in order");
    run->add_option("--stages", stage_list, "comma-separated stage subset")
        ->delimiter(',');

    for (const std::string& stage : pipeline::stage_order()) {
        app.add_subcommand(stage, "run the " + stage + " stage");
    }

    CLI::App* report = app.add_subcommand(
        "report", "summarize a run: funnel, gates, scores, label metrics");
    CLI::App* stats_cmd = app.add_subcommand(
        "stats", "print the per-stage metrics table as CSV");
    CLI::App* trace = app.add_subcommand(
        "trace", "follow a DOI or review sentence back to the raw answers");
    std::string trace_query;
    trace->add_option("query", trace_query, "DOI, or sentence:N for the Nth review sentence")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (run->parsed()) return run_stages(opt, stage_list);
    for (const std::string& stage : pipeline::stage_order()) {
        if (app.get_subcommand(stage)->parsed()) return run_stages(opt, {stage});
    }
    if (report->parsed()) return report_command(opt, false);
    if (stats_cmd->parsed()) return report_command(opt, true);
    if (trace->parsed()) return trace_command(opt, trace_query);
    return 2;
}
