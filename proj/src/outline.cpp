#include "revgen/outline.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace revgen::outline {

const char* topic_source_name(TopicSource s) {
    switch (s) {
        case TopicSource::from_reviews: return "from_reviews";
        case TopicSource::drafted: return "drafted";
        case TopicSource::manual: return "manual";
    }
    return "?";
}

namespace {

std::string title_key(std::string_view title) { return join(tokenize_words(title), " "); }

// "N. Title | rationale" or "N) Title". Returns false for non-topic lines.
bool parse_topic_line(std::string_view line, int* ordinal, std::string* title,
                      std::string* rationale) {
    std::string_view s = line;
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t digits = i;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits == i || digits >= s.size()) return false;
    if (s[digits] != '.' && s[digits] != ')') return false;
    long n = 0;
    for (std::size_t k = i; k < digits; ++k) n = n * 10 + (s[k] - '0');
    if (n < 1 || n > 100000) return false;
    std::string rest{trim(s.substr(digits + 1))};
    if (rest.empty()) return false;
    std::size_t pipe = rest.find('|');
    if (pipe == std::string::npos) {
        *title = trim(rest);
        rationale->clear();
    } else {
        *title = trim(rest.substr(0, pipe));
        *rationale = trim(rest.substr(pipe + 1));
    }
    if (title->empty()) return false;
    *ordinal = static_cast<int>(n);
    return true;
}

bool parse_question_line(std::string_view line, std::string* text) {
    std::string_view s = line;
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i + 2 > s.size() || s[i] != 'Q' || s[i + 1] != ':') return false;
    *text = trim(s.substr(i + 2));
    return !text->empty();
}

}  // namespace

Outline parse_outline_text(std::string_view text, TopicSource source) {
    Outline out;
    std::istringstream in{std::string(text)};
    std::string line;
    int current_topic = 0;
    while (std::getline(in, line)) {
        int ordinal = 0;
        std::string title, rationale, question;
        if (parse_topic_line(line, &ordinal, &title, &rationale)) {
            out.topics.push_back(Topic{ordinal, std::move(title), std::move(rationale), source});
            current_topic = ordinal;
        } else if (parse_question_line(line, &question) && current_topic != 0) {
            Question q;
            q.id = "Q" + std::to_string(out.questions.questions.size() + 1);
            q.topic_id = current_topic;
            q.text = std::move(question);
            out.questions.questions.push_back(std::move(q));
        }
    }
    return out;
}

Outline dedupe_topics(Outline outline) {
    Outline out;
    std::map<std::string, int> surviving;   // title key -> new ordinal
    std::map<int, int> renumber;            // old ordinal -> new ordinal
    for (Topic& t : outline.topics) {
        std::string key = title_key(t.title);
        auto it = surviving.find(key);
        if (it == surviving.end()) {
            int id = static_cast<int>(out.topics.size()) + 1;
            surviving[key] = id;
            renumber[t.id] = id;
            t.id = id;
            out.topics.push_back(std::move(t));
        } else {
            renumber[t.id] = it->second;
        }
    }
    for (Question& q : outline.questions.questions) {
        auto it = renumber.find(q.topic_id);
        if (it == renumber.end()) continue;  // dangling reference, dropped
        q.topic_id = it->second;
        q.id = "Q" + std::to_string(out.questions.questions.size() + 1);
        out.questions.questions.push_back(std::move(q));
    }
    return out;
}

Result<Outline> parse_outline_file(std::string_view content) {
    using R = Result<Outline>;
    Outline out;
    std::istringstream in{std::string(content)};
    std::string line;
    int line_no = 0;
    int current_topic = 0;
    std::set<std::string> titles;
    while (std::getline(in, line)) {
        ++line_no;
        std::string trimmed{trim(line)};
        if (trimmed.empty() || trimmed[0] == '#') continue;
        int ordinal = 0;
        std::string title, rationale, question;
        if (parse_topic_line(line, &ordinal, &title, &rationale)) {
            if (ordinal != static_cast<int>(out.topics.size()) + 1) {
                return R::failure("bad_ordinal",
                                  "line " + std::to_string(line_no) + ": expected topic " +
                                      std::to_string(out.topics.size() + 1) + ", found " +
                                      std::to_string(ordinal));
            }
            if (!titles.insert(title_key(title)).second) {
                return R::failure("duplicate_title",
                                  "line " + std::to_string(line_no) + ": '" + title + "'");
            }
            out.topics.push_back(
                Topic{ordinal, std::move(title), std::move(rationale), TopicSource::manual});
            current_topic = ordinal;
        } else if (parse_question_line(line, &question)) {
            if (current_topic == 0) {
                return R::failure("bad_line", "line " + std::to_string(line_no) +
                                                  ": question before any topic");
            }
            Question q;
            q.id = "Q" + std::to_string(out.questions.questions.size() + 1);
            q.topic_id = current_topic;
            q.text = std::move(question);
            out.questions.questions.push_back(std::move(q));
        } else {
            return R::failure("bad_line",
                              "line " + std::to_string(line_no) + ": not a topic or question");
        }
    }
    if (out.topics.empty()) return R::failure("no_topics", "outline file holds no topics");
    return R(std::move(out));
}

std::string format_outline(const Outline& outline) {
    std::string out;
    for (const Topic& t : outline.topics) {
        out += std::to_string(t.id) + ". " + t.title;
        if (!t.rationale.empty()) out += " | " + t.rationale;
        out += '\n';
        for (const Question& q : outline.questions.questions) {
            if (q.topic_id == t.id) out += "  Q: " + q.text + '\n';
        }
    }
    return out;
}

Result<Outline> load_outline(const std::filesystem::path& path) {
    auto content = read_file(path);
    if (!content) return content.forward<Outline>();
    return parse_outline_file(content.value());
}

VoidResult save_outline(const std::filesystem::path& path, const Outline& outline) {
    return write_file_atomic(path, format_outline(outline));
}

VoidResult check_coverage(const Outline& outline) {
    std::set<int> ids;
    for (const Topic& t : outline.topics) ids.insert(t.id);
    std::set<int> covered;
    for (const Question& q : outline.questions.questions) {
        if (ids.count(q.topic_id) == 0) {
            return VoidResult::failure("unknown_topic", "question '" + q.id +
                                                            "' references topic " +
                                                            std::to_string(q.topic_id));
        }
        covered.insert(q.topic_id);
    }
    for (const Topic& t : outline.topics) {
        if (covered.count(t.id) == 0) {
            return VoidResult::failure("topic_uncovered",
                                       "topic '" + t.title + "' received no questions");
        }
    }
    return ok_void();
}

namespace {

std::string snippet(std::string_view text) {
    std::string s{text.substr(0, 160)};
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

Result<std::vector<Topic>> extract_outline(gateway::Gateway& gw,
                                           const std::vector<corpus::Document>& review_docs) {
    using R = Result<std::vector<Topic>>;
    std::vector<const corpus::Document*> usable;
    for (const auto& d : review_docs) {
        if (d.is_review && d.eligible()) usable.push_back(&d);
    }
    if (usable.empty()) {
        return R::failure("no_reviews", "outline extraction needs at least one review with a body");
    }
    Outline merged;
    std::string last_raw;
    for (const corpus::Document* doc : usable) {
        gateway::CompletionRequest req;
        req.template_id = "outline-extract";
        req.vars = {{"reviews", doc->title + "\n\n" + doc->body}};
        req.key = {"outline-extract", doc->doi, ""};
        auto resp = gw.complete(req);
        if (!resp) return resp.forward<std::vector<Topic>>();
        last_raw = resp.value().text;
        Outline parsed = parse_outline_text(last_raw, TopicSource::from_reviews);
        // Shift ordinals so cross-review numbering cannot collide before the
        // dedupe pass renumbers.
        int offset = static_cast<int>(merged.topics.size());
        for (Topic& t : parsed.topics) {
            t.id += offset * 1000;
            merged.topics.push_back(std::move(t));
        }
    }
    merged = dedupe_topics(std::move(merged));
    if (merged.topics.empty()) {
        return R::failure("no_topics", "no topics parsed from outline response: " +
                                           snippet(last_raw));
    }
    return R(std::move(merged.topics));
}

Result<std::vector<Topic>> draft_outline(gateway::Gateway& gw,
                                         const std::string& field_description) {
    using R = Result<std::vector<Topic>>;
    if (trim(field_description).empty()) {
        return R::failure("empty_field", "outline drafting needs a field description");
    }
    gateway::CompletionRequest req;
    req.template_id = "outline-draft";
    req.vars = {{"field", field_description}};
    req.key = {"outline-draft", "", ""};
    auto resp = gw.complete(req);
    if (!resp) return resp.forward<std::vector<Topic>>();
    Outline parsed = dedupe_topics(parse_outline_text(resp.value().text, TopicSource::drafted));
    if (parsed.topics.empty()) {
        return R::failure("no_topics", "no topics parsed from outline response: " +
                                           snippet(resp.value().text));
    }
    return R(std::move(parsed.topics));
}

Result<std::vector<Topic>> merge_manual(std::vector<Topic> base, std::vector<Topic> additions,
                                        const std::vector<int>& order) {
    using R = Result<std::vector<Topic>>;
    std::set<std::string> titles;
    for (const Topic& t : base) titles.insert(title_key(t.title));
    for (Topic& t : additions) {
        if (!titles.insert(title_key(t.title)).second) continue;
        t.source = TopicSource::manual;
        t.id = static_cast<int>(base.size()) + 1;
        base.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < base.size(); ++i) base[i].id = static_cast<int>(i) + 1;
    if (order.empty()) return R(std::move(base));

    std::set<int> wanted(order.begin(), order.end());
    if (order.size() != base.size() || wanted.size() != order.size() ||
        *wanted.begin() != 1 || *wanted.rbegin() != static_cast<int>(base.size())) {
        std::string missing, extra;
        for (int id = 1; id <= static_cast<int>(base.size()); ++id) {
            if (wanted.count(id) == 0) missing += (missing.empty() ? "" : ",") + std::to_string(id);
        }
        for (int id : wanted) {
            if (id < 1 || id > static_cast<int>(base.size())) {
                extra += (extra.empty() ? "" : ",") + std::to_string(id);
            }
        }
        if (order.size() != wanted.size()) extra += (extra.empty() ? "" : ",") + std::string("duplicates");
        return R::failure("bad_permutation", "order must be a bijection over 1.." +
                                                 std::to_string(base.size()) + "; missing [" +
                                                 missing + "] extra [" + extra + "]");
    }
    std::vector<Topic> reordered;
    reordered.reserve(base.size());
    for (int id : order) {
        Topic t = base[static_cast<std::size_t>(id) - 1];
        t.id = static_cast<int>(reordered.size()) + 1;
        reordered.push_back(std::move(t));
    }
    return R(std::move(reordered));
}

Result<QuestionSet> derive_questions(gateway::Gateway& gw, const std::vector<Topic>& topics,
                                     int per_topic_hint) {
    using R = Result<QuestionSet>;
    if (topics.empty()) return R::failure("no_topics", "question derivation needs topics");
    Outline bare;
    bare.topics = topics;
    gateway::CompletionRequest req;
    req.template_id = "questions";
    req.vars = {{"outline", format_outline(bare)},
                {"per_topic", std::to_string(per_topic_hint)}};
    req.key = {"questions", "", ""};
    auto resp = gw.complete(req);
    if (!resp) return resp.forward<QuestionSet>();
    Outline parsed = parse_outline_text(resp.value().text, TopicSource::manual);
    Outline combined;
    combined.topics = topics;
    combined.questions = std::move(parsed.questions);
    if (auto check = check_coverage(combined); !check.ok()) {
        return check.forward<QuestionSet>();
    }
    return R(std::move(combined.questions));
}

}  // namespace revgen::outline
