#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "revgen/corpus.hpp"
#include "revgen/gateway.hpp"
#include "revgen/util.hpp"

namespace revgen::outline {

enum class TopicSource { from_reviews, drafted, manual };

const char* topic_source_name(TopicSource s);

struct Topic {
    int id = 0;  // ordinal, contiguous from 1
    std::string title;
    std::string rationale;
    TopicSource source = TopicSource::manual;
};

struct Question {
    std::string id;  // positional "Q1".."Qn" across the whole set
    int topic_id = 0;
    std::string text;
};

struct QuestionSet {
    std::vector<Question> questions;
    std::size_t size() const { return questions.size(); }
};

struct Outline {
    std::vector<Topic> topics;
    QuestionSet questions;
};

// Lenient line parser shared by LLM responses and user files: numbered
// "N. Title | rationale" lines open a topic, "Q: text" lines attach to the
// topic above them, anything else is chatter and skipped. Topic numbering is
// kept as written (callers renumber after deduplication).
Outline parse_outline_text(std::string_view text, TopicSource source);

// Collapses duplicate titles (case/whitespace-insensitive, first wins) and
// renumbers ordinals contiguously from 1. Question topic references follow
// the surviving topic.
Outline dedupe_topics(Outline outline);

// Strict form for the persisted outline file: ordinals must already be
// contiguous from 1, titles unique, and every question line must sit under a
// topic. Loaded topics carry source=manual, the file being the manual
// intervention surface.
Result<Outline> parse_outline_file(std::string_view content);

std::string format_outline(const Outline& outline);
Result<Outline> load_outline(const std::filesystem::path& path);
VoidResult save_outline(const std::filesystem::path& path, const Outline& outline);

// Every topic covered by >=1 question, every question aimed at a known topic.
VoidResult check_coverage(const Outline& outline);

// One LLM round-trip per source review, unioned by title.
Result<std::vector<Topic>> extract_outline(gateway::Gateway& gw,
                                           const std::vector<corpus::Document>& review_docs);

Result<std::vector<Topic>> draft_outline(gateway::Gateway& gw,
                                         const std::string& field_description);

// Appends additions (stamped manual, duplicate titles dropped) and applies
// the optional reordering permutation over the merged list.
Result<std::vector<Topic>> merge_manual(std::vector<Topic> base, std::vector<Topic> additions,
                                        const std::vector<int>& order);

Result<QuestionSet> derive_questions(gateway::Gateway& gw, const std::vector<Topic>& topics,
                                     int per_topic_hint);

}  // namespace revgen::outline
