#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "revgen/corpus.hpp"
#include "revgen/gateway.hpp"
#include "revgen/outline.hpp"
#include "revgen/text.hpp"
#include "revgen/util.hpp"

namespace revgen::extraction {

struct QuestionGroup {
    int id = 0;  // 1-based
    std::vector<outline::Question> questions;
};

// Stable partition of the question set: ceil(n / group_size) groups, the
// last one possibly smaller.
Result<std::vector<QuestionGroup>> group_questions(const outline::QuestionSet& qs, int group_size);

struct DocumentChunk {
    std::string doi;
    int index = 0;  // 0-based
    std::string text;
    long token_estimate = 0;
};

// k = ceil(estimate / budget) near-equal chunks, cut at a paragraph, line,
// or space boundary within 4% of the ideal cut, falling back to a hard cut.
// Chunks concatenate exactly to the body.
Result<std::vector<DocumentChunk>> chunk_document(const corpus::Document& doc, long context_budget,
                                                  const TokenEstimator& estimator = default_token_estimate);

struct RawAnswer {
    std::string doi;
    std::string qid;
    int repetition = 1;  // 1..R
    int chunk_index = 0;
    bool relevant_claimed = false;
    std::string answer;  // empty whenever relevant_claimed is false
    std::string evidence;
};

std::string raw_answer_to_json(const RawAnswer& a);
Result<RawAnswer> raw_answer_from_json(std::string_view line);

struct GroupExtraction {
    std::vector<RawAnswer> answers;
    std::vector<int> missing_repetitions;  // exhausted retries
    bool complete = false;  // >= ceil(R/2) repetitions landed
};

// R structured queries against one chunk. Request keys take the group field
// "g<group>:c<chunk>:r<rep>" so mock scripts can address single repetitions.
// A repetition whose retries exhaust is recorded missing rather than failing
// the call; provider-terminal and budget errors still propagate.
Result<GroupExtraction> ask_group(gateway::Gateway& gw, const DocumentChunk& chunk,
                                  const QuestionGroup& group, int repetitions);

// LLM yes/no judge over (question, answer, evidence). Any judge failure
// excludes the answer: the pipeline prefers false negatives to fabrications.
bool relevance_filter(gateway::Gateway& gw, const RawAnswer& answer, const std::string& question);

struct InfoCombination {
    std::string qid;
    std::string text;
    std::vector<std::string> dois;        // >= 1, all corpus members
    std::vector<int> repetitions;         // contributing repetition indices, ascending
};

std::string combination_to_json(const InfoCombination& c);
Result<InfoCombination> combination_from_json(std::string_view line);

// Canonical merge input: answers sorted by (repetition, chunk) so aggregate
// output cannot depend on completion order.
std::string format_answers_for_merge(std::vector<RawAnswer> answers);

// Merges the surviving answers for one (doc, question) into one combination.
// Empty survivor list means the document never addressed the question: the
// result holds nullopt rather than an error.
Result<std::optional<InfoCombination>> aggregate_answers(gateway::Gateway& gw,
                                                         const std::string& doc_doi,
                                                         const std::string& qid,
                                                         const std::string& question,
                                                         std::vector<RawAnswer> surviving);

// Integer 0..100 agreement between a raw answer and the aggregate it fed.
Result<int> consistency_check(gateway::Gateway& gw, const std::string& raw_text,
                              const std::string& aggregate_text);

// Every supporting DOI must already be a corpus member.
VoidResult check_traceability(const std::vector<InfoCombination>& combinations,
                              const std::set<std::string>& corpus_dois);

}  // namespace revgen::extraction
