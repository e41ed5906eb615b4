#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "revgen/util.hpp"
#include "revgen/xml.hpp"

namespace revgen::schemas {

// One <item> of an extraction response. `relevant` mirrors the model's own
// claim; downstream judging may still reject the answer.
struct AnswerItem {
    std::string qid;
    bool relevant = false;
    std::string answer;
    std::string evidence;
};

struct AnswersPayload {
    std::vector<AnswerItem> items;
};

// References are kept verbatim as emitted; DOI normalization happens at the
// verification gate so the gate can report the offending original string.
struct ParagraphPayload {
    std::string topic;
    std::string text;
    std::vector<std::string> references;
};

struct FieldValue {
    std::string name;
    std::string value;
};

struct RecordPayload {
    std::vector<FieldValue> fields;
};

enum class Choice { A, B, Tie, Yes, No };

// Exactly one of choice/score is set, depending on which form the judge was
// asked for.
struct VerdictPayload {
    std::optional<Choice> choice;
    std::optional<double> score;
};

struct ConsistencyPayload {
    int percent = 0;
};

using Payload = std::variant<AnswersPayload, ParagraphPayload, RecordPayload,
                             VerdictPayload, ConsistencyPayload>;

struct Structured {
    Payload payload;
    std::string raw_text;
};

// Registered schema names: extraction-answers, paragraph, mining-record,
// comparison-verdict, consistency-verdict.
bool is_registered(std::string_view schema_name);
const std::vector<std::string>& registered_schemas();

// Total parse: chatter-tolerant root extraction followed by shape checks.
// Error codes from revgen::xml plus: unknown_schema, missing_child,
// missing_attribute, bad_value, duplicate_qid, duplicate_field, empty_text.
Result<Structured> parse_structured(std::string_view completion, std::string_view schema_name);

// Typed variants for callers that know their schema.
Result<AnswersPayload> parse_answers(std::string_view completion);
Result<ParagraphPayload> parse_paragraph(std::string_view completion);
Result<RecordPayload> parse_record(std::string_view completion);
Result<VerdictPayload> parse_verdict(std::string_view completion);
Result<ConsistencyPayload> parse_consistency(std::string_view completion);

const char* choice_name(Choice c);

}  // namespace revgen::schemas
