#include "revgen/schemas.hpp"

#include <cstdlib>

namespace revgen::schemas {

namespace {

Result<AnswersPayload> check_answers(const xml::Element& root) {
    using R = Result<AnswersPayload>;
    AnswersPayload out;
    if (root.children.empty()) {
        return R::failure("missing_child", "<answers> contains no <item> children");
    }
    for (const xml::Element& item : root.children) {
        if (item.name != "item") {
            return R::failure("missing_child",
                              "<answers> child <" + item.name + "> is not an <item>");
        }
        AnswerItem a;
        a.qid = item.attribute("qid");
        if (a.qid.empty()) {
            return R::failure("missing_attribute", "<item> lacks a qid attribute");
        }
        for (const AnswerItem& prior : out.items) {
            if (prior.qid == a.qid) {
                return R::failure("duplicate_qid", "qid '" + a.qid + "' appears twice");
            }
        }
        const xml::Element* rel = item.child("relevant");
        if (rel == nullptr) {
            return R::failure("missing_child", "<item qid=\"" + a.qid + "\"> lacks <relevant>");
        }
        std::string flag = to_lower(trim(rel->text));
        if (flag == "true") {
            a.relevant = true;
        } else if (flag == "false") {
            a.relevant = false;
        } else {
            return R::failure("bad_value",
                              "<relevant> must be true or false, got '" + rel->text + "'");
        }
        const xml::Element* ans = item.child("answer");
        const xml::Element* ev = item.child("evidence");
        if (ans == nullptr || ev == nullptr) {
            return R::failure("missing_child",
                              "<item qid=\"" + a.qid + "\"> lacks <answer> or <evidence>");
        }
        a.answer = ans->text;
        a.evidence = ev->text;
        out.items.push_back(std::move(a));
    }
    return R(std::move(out));
}

Result<ParagraphPayload> check_paragraph(const xml::Element& root) {
    using R = Result<ParagraphPayload>;
    ParagraphPayload out;
    out.topic = root.attribute("topic");
    if (out.topic.empty()) {
        return R::failure("missing_attribute", "<paragraph> lacks a topic attribute");
    }
    const xml::Element* text = root.child("text");
    if (text == nullptr) {
        return R::failure("missing_child", "<paragraph> lacks <text>");
    }
    if (trim(text->text).empty()) {
        return R::failure("empty_text", "<text> is empty");
    }
    out.text = text->text;
    const xml::Element* refs = root.child("references");
    if (refs == nullptr) {
        return R::failure("missing_child", "<paragraph> lacks <references>");
    }
    for (const xml::Element& doi : refs->children) {
        if (doi.name != "doi") {
            return R::failure("missing_child",
                              "<references> child <" + doi.name + "> is not a <doi>");
        }
        if (trim(doi.text).empty()) {
            return R::failure("empty_text", "<doi> entry is empty");
        }
        out.references.push_back(trim(doi.text));
    }
    if (out.references.empty()) {
        return R::failure("missing_child", "<references> lists no <doi> entries");
    }
    return R(std::move(out));
}

Result<RecordPayload> check_record(const xml::Element& root) {
    using R = Result<RecordPayload>;
    RecordPayload out;
    for (const xml::Element& field : root.children) {
        if (field.name != "field") {
            return R::failure("missing_child",
                              "<record> child <" + field.name + "> is not a <field>");
        }
        FieldValue fv;
        fv.name = field.attribute("name");
        if (fv.name.empty()) {
            return R::failure("missing_attribute", "<field> lacks a name attribute");
        }
        for (const FieldValue& prior : out.fields) {
            if (prior.name == fv.name) {
                return R::failure("duplicate_field",
                                  "field '" + fv.name + "' appears twice in one record");
            }
        }
        fv.value = trim(field.text);
        out.fields.push_back(std::move(fv));
    }
    return R(std::move(out));
}

Result<VerdictPayload> check_verdict(const xml::Element& root) {
    using R = Result<VerdictPayload>;
    VerdictPayload out;
    const xml::Element* choice = root.child("choice");
    const xml::Element* score = root.child("score");
    if ((choice != nullptr) == (score != nullptr)) {
        return R::failure("missing_child",
                          "<verdict> needs exactly one of <choice> or <score>");
    }
    if (choice != nullptr) {
        std::string v = to_lower(trim(choice->text));
        if (v == "a") {
            out.choice = Choice::A;
        } else if (v == "b") {
            out.choice = Choice::B;
        } else if (v == "tie") {
            out.choice = Choice::Tie;
        } else if (v == "yes") {
            out.choice = Choice::Yes;
        } else if (v == "no") {
            out.choice = Choice::No;
        } else {
            return R::failure("bad_value", "<choice> must be A, B, tie, yes or no, got '" +
                                               choice->text + "'");
        }
        return R(std::move(out));
    }
    std::string v = trim(score->text);
    char* end = nullptr;
    double parsed = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
        return R::failure("bad_value", "<score> is not numeric: '" + score->text + "'");
    }
    if (parsed < 0.0 || parsed > 10.0) {
        return R::failure("bad_value", "<score> out of [0,10]: '" + v + "'");
    }
    out.score = parsed;
    return R(std::move(out));
}

Result<ConsistencyPayload> check_consistency(const xml::Element& root) {
    using R = Result<ConsistencyPayload>;
    const xml::Element* pct = root.child("percent");
    if (pct == nullptr) {
        return R::failure("missing_child", "<consistency> lacks <percent>");
    }
    std::string v = trim(pct->text);
    char* end = nullptr;
    long parsed = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size()) {
        return R::failure("bad_value", "<percent> is not an integer: '" + pct->text + "'");
    }
    if (parsed < 0 || parsed > 100) {
        return R::failure("bad_value", "<percent> out of [0,100]: '" + v + "'");
    }
    ConsistencyPayload out;
    out.percent = static_cast<int>(parsed);
    return R(std::move(out));
}

struct SchemaEntry {
    const char* name;
    const char* root;
};

constexpr SchemaEntry kSchemas[] = {
    {"extraction-answers", "answers"}, {"paragraph", "paragraph"},
    {"mining-record", "record"},       {"comparison-verdict", "verdict"},
    {"consistency-verdict", "consistency"},
};

const SchemaEntry* find_schema(std::string_view name) {
    for (const SchemaEntry& s : kSchemas) {
        if (name == s.name) return &s;
    }
    return nullptr;
}

template <typename P>
Result<P> parse_as(std::string_view completion, const char* root_name,
                   Result<P> (*check)(const xml::Element&)) {
    auto root = xml::extract_root(completion, root_name);
    if (!root) return root.template forward<P>();
    return check(root.value());
}

}  // namespace

bool is_registered(std::string_view schema_name) {
    return find_schema(schema_name) != nullptr;
}

const std::vector<std::string>& registered_schemas() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const SchemaEntry& s : kSchemas) v.emplace_back(s.name);
        return v;
    }();
    return names;
}

Result<AnswersPayload> parse_answers(std::string_view completion) {
    return parse_as<AnswersPayload>(completion, "answers", check_answers);
}

Result<ParagraphPayload> parse_paragraph(std::string_view completion) {
    return parse_as<ParagraphPayload>(completion, "paragraph", check_paragraph);
}

Result<RecordPayload> parse_record(std::string_view completion) {
    return parse_as<RecordPayload>(completion, "record", check_record);
}

Result<VerdictPayload> parse_verdict(std::string_view completion) {
    return parse_as<VerdictPayload>(completion, "verdict", check_verdict);
}

Result<ConsistencyPayload> parse_consistency(std::string_view completion) {
    return parse_as<ConsistencyPayload>(completion, "consistency", check_consistency);
}

Result<Structured> parse_structured(std::string_view completion, std::string_view schema_name) {
    using R = Result<Structured>;
    const SchemaEntry* schema = find_schema(schema_name);
    if (schema == nullptr) {
        return R::failure("unknown_schema", "schema '" + std::string(schema_name) +
                                                "' is not registered");
    }
    Structured out;
    out.raw_text = std::string(completion);
    if (schema_name == "extraction-answers") {
        auto p = parse_answers(completion);
        if (!p) return p.forward<Structured>();
        out.payload = std::move(p).take();
    } else if (schema_name == "paragraph") {
        auto p = parse_paragraph(completion);
        if (!p) return p.forward<Structured>();
        out.payload = std::move(p).take();
    } else if (schema_name == "mining-record") {
        auto p = parse_record(completion);
        if (!p) return p.forward<Structured>();
        out.payload = std::move(p).take();
    } else if (schema_name == "comparison-verdict") {
        auto p = parse_verdict(completion);
        if (!p) return p.forward<Structured>();
        out.payload = std::move(p).take();
    } else {
        auto p = parse_consistency(completion);
        if (!p) return p.forward<Structured>();
        out.payload = std::move(p).take();
    }
    return R(std::move(out));
}

const char* choice_name(Choice c) {
    switch (c) {
        case Choice::A: return "A";
        case Choice::B: return "B";
        case Choice::Tie: return "tie";
        case Choice::Yes: return "yes";
        case Choice::No: return "no";
    }
    return "?";
}

}  // namespace revgen::schemas
