#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "revgen/corpus.hpp"
#include "revgen/extraction.hpp"
#include "revgen/gateway.hpp"
#include "revgen/outline.hpp"
#include "revgen/util.hpp"

namespace revgen::composition {

struct ParagraphDraft {
    int topic_id = 0;
    int generation = 0;  // 1-based index within the topic's generation budget
    std::string text;    // paragraph body with inline [doi] citations
    std::vector<std::string> references;  // normalized reference-list DOIs
    bool format_pass = false;
    bool doi_pass = false;
    std::vector<std::string> offending;  // DOIs that tripped the citation gate
    std::vector<std::string> uncited;    // conclusive sentences lacking citations
    int score = -1;                      // judge score 0..10; -1 until judged
    std::string raw;                     // verbatim model response, kept for audit
};

std::string draft_to_json(const ParagraphDraft& d);
Result<ParagraphDraft> draft_from_json(const std::string& text);

// Evidence block shown to the model: one line per combination, each carrying
// its bracketed DOI attributions.
std::string format_evidence(const std::vector<extraction::InfoCombination>& evidence);

// Pass iff the response parses under the paragraph reply format.
bool gate_format(const std::string& completion);

struct DoiGateResult {
    bool pass = false;
    std::vector<std::string> offending;
    std::vector<std::string> uncited;
};

// Citation gate over a format-passing draft: references must be nonempty and
// inside the corpus, every inline citation must appear in the reference list,
// and every conclusive sentence must cite at least one source. DOIs compare
// after normalization.
DoiGateResult gate_doi(const ParagraphDraft& draft,
                       const std::set<std::string>& corpus_dois);

// One generation attempt. Format failures come back as drafts with a fail
// verdict rather than errors; only provider-level trouble is an error.
Result<ParagraphDraft> generate_paragraph(gateway::Gateway& gw, const outline::Topic& topic,
                                          const std::string& evidence_block, int attempt,
                                          const std::set<std::string>& corpus_dois);

// Shrinks the evidence block under the token budget: up to five rounds of
// LLM condensation of the longest item (rounds that lose a DOI are rejected),
// then hard truncation with a warning. Evidence already within budget is
// returned untouched without a model call.
Result<std::vector<extraction::InfoCombination>> compress(
    gateway::Gateway& gw, std::vector<extraction::InfoCombination> evidence, long budget_tokens,
    const TokenEstimator& estimator = default_token_estimate,
    std::vector<std::string>* warnings = nullptr);

struct TopicComposition {
    int topic_id = 0;
    std::vector<ParagraphDraft> drafts;  // every generation, verdicts and scores included
    int chosen = -1;                     // index into drafts; -1 when no draft passed
    bool failed() const { return chosen < 0; }
};

struct BestOfNParams {
    int target_passes = 9;
    int ceiling_factor = 5;      // generation ceiling = ceiling_factor * target_passes
    long evidence_budget = 24000;
};

// Regenerates until target_passes drafts clear both gates or the ceiling is
// hit, scores the passing drafts, and keeps the highest scorer (earliest
// generation wins ties). Zero passing drafts is a failed topic, not an error.
Result<TopicComposition> best_of_n(gateway::Gateway& gw, const outline::Topic& topic,
                                   std::vector<extraction::InfoCombination> evidence,
                                   const std::set<std::string>& corpus_dois,
                                   const BestOfNParams& params,
                                   std::vector<std::string>* warnings = nullptr);

struct PassRates {
    int total = 0;
    int passing = 0;
    int format_fails = 0;
    int doi_fails = 0;

    double pass_percent() const;
    double format_fail_percent() const;
    double doi_fail_percent() const;
};

// Every draft lands in exactly one class, so the three percentages sum to
// one hundred whenever total > 0.
PassRates tally_drafts(const std::vector<ParagraphDraft>& drafts);
PassRates tally_compositions(const std::vector<TopicComposition>& topics);

struct ReviewSection {
    int topic_id = 0;
    std::string title;
    std::string text;  // citations rewritten to numeric form
};

struct SentenceTrace {
    int topic_id = 0;
    std::string sentence;
    std::vector<std::string> dois;
};

struct ReviewDocument {
    std::vector<ReviewSection> sections;
    std::vector<std::string> references;  // numbered 1..n in first-citation order
    std::vector<SentenceTrace> traces;
    std::vector<int> failed_topics;
    std::string markdown;
};

// Orders chosen paragraphs by topic, renumbers inline DOI citations against
// the global reference list, and emits the rendered markdown plus the
// sentence-level trace. A citation outside the corpus here is a hard
// integrity failure: the gates must have caught it earlier.
Result<ReviewDocument> assemble(const std::vector<outline::Topic>& topics,
                                const std::map<int, ParagraphDraft>& chosen,
                                const std::map<std::string, corpus::Document>& corpus_docs,
                                const std::string& title = "Literature Review");

std::string trace_to_json(const ReviewDocument& doc);

// review.md and review_trace.json under dir.
VoidResult save_review(const ReviewDocument& doc, const std::string& dir);

// paragraphs/<topic>.jsonl: one line per draft.
VoidResult save_drafts(const TopicComposition& topic, const std::string& dir);
Result<TopicComposition> load_drafts(int topic_id, const std::string& dir);

}  // namespace revgen::composition
