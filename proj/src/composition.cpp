#include "revgen/composition.hpp"

#include <algorithm>
#include <filesystem>

#include "json.hpp"
#include "revgen/doi.hpp"
#include "revgen/schemas.hpp"
#include "revgen/text.hpp"

namespace revgen::composition {

using nlohmann::json;

std::string draft_to_json(const ParagraphDraft& d) {
    json j;
    j["topic_id"] = d.topic_id;
    j["generation"] = d.generation;
    j["text"] = d.text;
    j["references"] = d.references;
    j["format_pass"] = d.format_pass;
    j["doi_pass"] = d.doi_pass;
    j["offending"] = d.offending;
    j["uncited"] = d.uncited;
    j["score"] = d.score;
    j["raw"] = d.raw;
    return j.dump();
}

Result<ParagraphDraft> draft_from_json(const std::string& text) {
    using R = Result<ParagraphDraft>;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("generation")) {
        return R::failure("bad_draft", "not a paragraph draft: " + text.substr(0, 80));
    }
    ParagraphDraft d;
    d.topic_id = j.value("topic_id", 0);
    d.generation = j.value("generation", 0);
    d.text = j.value("text", "");
    if (j.contains("references")) {
        for (const auto& r : j["references"]) d.references.push_back(r.get<std::string>());
    }
    d.format_pass = j.value("format_pass", false);
    d.doi_pass = j.value("doi_pass", false);
    if (j.contains("offending")) {
        for (const auto& o : j["offending"]) d.offending.push_back(o.get<std::string>());
    }
    if (j.contains("uncited")) {
        for (const auto& u : j["uncited"]) d.uncited.push_back(u.get<std::string>());
    }
    d.score = j.value("score", -1);
    d.raw = j.value("raw", "");
    return R(std::move(d));
}

std::string format_evidence(const std::vector<extraction::InfoCombination>& evidence) {
    std::string block;
    for (const auto& combo : evidence) {
        block += "- " + combo.text;
        std::string lowered = to_lower(combo.text);
        for (const std::string& doi : combo.dois) {
            if (lowered.find(doi) == std::string::npos) block += " [" + doi + "]";
        }
        block += '\n';
    }
    return block;
}

bool gate_format(const std::string& completion) {
    return schemas::parse_paragraph(completion).ok();
}

DoiGateResult gate_doi(const ParagraphDraft& draft,
                       const std::set<std::string>& corpus_dois) {
    DoiGateResult gate;
    std::set<std::string> refs;
    for (const std::string& r : draft.references) refs.insert(normalize_doi(r));

    std::set<std::string> flagged;
    for (const std::string& ref : refs) {
        if (corpus_dois.count(ref) == 0) flagged.insert(ref);
    }
    for (const std::string& cite : extract_bracket_citations(draft.text)) {
        // A citation absent from the reference list dangles even if the
        // corpus knows the DOI.
        if (refs.count(cite) == 0) flagged.insert(cite);
    }
    gate.offending.assign(flagged.begin(), flagged.end());

    for (const auto& sentence : split_sentences(draft.text)) {
        if (!is_conclusive_sentence(sentence.text)) continue;
        if (extract_bracket_citations(sentence.text).empty()) {
            std::string prefix = trim(sentence.text);
            if (prefix.size() > 80) prefix = prefix.substr(0, 80);
            gate.uncited.push_back(prefix);
        }
    }

    gate.pass = !refs.empty() && gate.offending.empty() && gate.uncited.empty();
    return gate;
}

Result<ParagraphDraft> generate_paragraph(gateway::Gateway& gw, const outline::Topic& topic,
                                          const std::string& evidence_block, int attempt,
                                          const std::set<std::string>& corpus_dois) {
    using R = Result<ParagraphDraft>;
    gateway::CompletionRequest req;
    req.template_id = "compose";
    req.vars = {{"topic", topic.title}, {"evidence", evidence_block}};
    req.key = {"compose", "t" + std::to_string(topic.id), "n" + std::to_string(attempt)};
    auto resp = gw.complete(req);
    if (!resp.ok()) return R(resp.error());

    ParagraphDraft d;
    d.topic_id = topic.id;
    d.generation = attempt;
    d.raw = resp.value().text;
    auto parsed = schemas::parse_paragraph(d.raw);
    if (!parsed.ok()) {
        // The draft survives as a format failure so the pass-rate statistic
        // counts it; the caller schedules the regeneration.
        d.text = d.raw;
        return R(std::move(d));
    }
    d.format_pass = true;
    d.text = parsed.value().text;
    for (const std::string& ref : parsed.value().references) {
        d.references.push_back(normalize_doi(ref));
    }
    DoiGateResult gate = gate_doi(d, corpus_dois);
    d.doi_pass = gate.pass;
    d.offending = std::move(gate.offending);
    d.uncited = std::move(gate.uncited);
    return R(std::move(d));
}

namespace {

std::size_t longest_item(const std::vector<extraction::InfoCombination>& evidence) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < evidence.size(); ++i) {
        if (evidence[i].text.size() > evidence[best].text.size()) best = i;
    }
    return best;
}

void warn(std::vector<std::string>* warnings, std::string message) {
    if (warnings != nullptr) warnings->push_back(std::move(message));
}

}  // namespace

Result<std::vector<extraction::InfoCombination>> compress(
    gateway::Gateway& gw, std::vector<extraction::InfoCombination> evidence, long budget_tokens,
    const TokenEstimator& estimator, std::vector<std::string>* warnings) {
    using R = Result<std::vector<extraction::InfoCombination>>;
    if (budget_tokens < 1) {
        return R::failure("bad_budget", "evidence budget must be positive");
    }
    auto fits = [&]() { return estimator(format_evidence(evidence)) <= budget_tokens; };
    if (evidence.empty() || fits()) return R(std::move(evidence));

    for (int iteration = 1; iteration <= 5; ++iteration) {
        std::size_t idx = longest_item(evidence);
        extraction::InfoCombination& item = evidence[idx];

        // The condensation input always carries the bracketed DOIs, so a
        // response that keeps its attributions keeps them verbatim.
        std::string input = item.text;
        std::string lowered_input = to_lower(input);
        for (const std::string& doi : item.dois) {
            if (lowered_input.find(doi) == std::string::npos) input += " [" + doi + "]";
        }

        gateway::CompletionRequest req;
        req.template_id = "compress";
        req.vars = {{"text", input}};
        req.key = {"compress", item.qid, "i" + std::to_string(iteration)};
        auto resp = gw.complete(req);
        if (!resp.ok()) return R(resp.error());

        std::string condensed = trim(resp.value().text);
        std::string lowered = to_lower(condensed);
        bool kept_all = true;
        for (const std::string& doi : item.dois) {
            if (lowered.find(doi) == std::string::npos) {
                kept_all = false;
                break;
            }
        }
        if (!kept_all) {
            warn(warnings, "compression dropped a DOI on " + item.qid + "; round rejected");
            continue;
        }
        if (condensed.size() >= item.text.size()) {
            warn(warnings, "compression did not shrink " + item.qid + "; round discarded");
            continue;
        }
        item.text = condensed;
        if (fits()) return R(std::move(evidence));
    }

    // Last resort: halve the longest items until the block fits. The DOI
    // attribution lives in the dois field, so citations survive truncation.
    while (!fits()) {
        std::size_t idx = longest_item(evidence);
        extraction::InfoCombination& item = evidence[idx];
        std::string shorter =
            item.text.substr(0, std::max<std::size_t>(40, item.text.size() / 2)) + "...";
        // Even the longest item cannot shrink further: the budget is unmeetable.
        if (shorter.size() >= item.text.size()) {
            return R::failure("budget_too_small",
                              "evidence cannot fit the budget even fully truncated");
        }
        item.text = std::move(shorter);
        warn(warnings, "hard truncation applied to " + item.qid);
    }
    return R(std::move(evidence));
}

Result<TopicComposition> best_of_n(gateway::Gateway& gw, const outline::Topic& topic,
                                   std::vector<extraction::InfoCombination> evidence,
                                   const std::set<std::string>& corpus_dois,
                                   const BestOfNParams& params,
                                   std::vector<std::string>* warnings) {
    using R = Result<TopicComposition>;
    if (params.target_passes < 1 || params.ceiling_factor < 1) {
        return R::failure("bad_params", "target passes and ceiling factor must be >= 1");
    }
    if (evidence.empty()) {
        return R::failure("no_evidence", "topic has no extracted evidence: " + topic.title);
    }
    auto compressed = compress(gw, std::move(evidence), params.evidence_budget,
                               default_token_estimate, warnings);
    if (!compressed.ok()) return R(compressed.error());
    std::string block = format_evidence(compressed.value());

    TopicComposition out;
    out.topic_id = topic.id;
    int ceiling = params.ceiling_factor * params.target_passes;
    int passing = 0;
    for (int attempt = 1; attempt <= ceiling && passing < params.target_passes; ++attempt) {
        auto draft = generate_paragraph(gw, topic, block, attempt, corpus_dois);
        if (!draft.ok()) return R(draft.error());
        if (draft.value().format_pass && draft.value().doi_pass) ++passing;
        out.drafts.push_back(std::move(draft).take());
    }

    for (ParagraphDraft& d : out.drafts) {
        if (!d.format_pass || !d.doi_pass) continue;
        gateway::CompletionRequest req;
        req.template_id = "score";
        req.vars = {{"topic", topic.title}, {"text", d.text}};
        req.key = {"score", "t" + std::to_string(topic.id), "n" + std::to_string(d.generation)};
        auto resp = gw.complete_structured(req, "comparison-verdict");
        if (!resp.ok()) {
            if (resp.error().code == "retry_exhausted" ||
                resp.error().code == "format_exhausted") {
                // An unjudgeable draft scores the floor instead of sinking
                // the topic.
                d.score = 0;
                warn(warnings, "judge unavailable for topic " + std::to_string(topic.id) +
                                   " generation " + std::to_string(d.generation));
                continue;
            }
            return R(resp.error());
        }
        const auto& verdict = std::get<schemas::VerdictPayload>(resp.value().structured.payload);
        d.score = verdict.score.has_value() ? *verdict.score : 0;
    }

    for (std::size_t i = 0; i < out.drafts.size(); ++i) {
        const ParagraphDraft& d = out.drafts[i];
        if (!d.format_pass || !d.doi_pass) continue;
        if (out.chosen < 0 || d.score > out.drafts[out.chosen].score) {
            out.chosen = static_cast<int>(i);
        }
    }
    return R(std::move(out));
}

double PassRates::pass_percent() const {
    return total == 0 ? 0.0 : 100.0 * passing / total;
}

double PassRates::format_fail_percent() const {
    return total == 0 ? 0.0 : 100.0 * format_fails / total;
}

double PassRates::doi_fail_percent() const {
    return total == 0 ? 0.0 : 100.0 * doi_fails / total;
}

PassRates tally_drafts(const std::vector<ParagraphDraft>& drafts) {
    PassRates rates;
    for (const ParagraphDraft& d : drafts) {
        ++rates.total;
        if (!d.format_pass) {
            ++rates.format_fails;
        } else if (!d.doi_pass) {
            ++rates.doi_fails;
        } else {
            ++rates.passing;
        }
    }
    return rates;
}

PassRates tally_compositions(const std::vector<TopicComposition>& topics) {
    PassRates rates;
    for (const TopicComposition& t : topics) {
        PassRates sub = tally_drafts(t.drafts);
        rates.total += sub.total;
        rates.passing += sub.passing;
        rates.format_fails += sub.format_fails;
        rates.doi_fails += sub.doi_fails;
    }
    return rates;
}

namespace {

// Rewrites "[10.1/a, 10.1/b]" to "[1,2]" using the global numbering; brackets
// holding anything that is not a DOI stay untouched.
std::string renumber_citations(const std::string& text,
                               const std::map<std::string, int>& numbers) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t open = text.find('[', pos);
        if (open == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        std::size_t close = text.find(']', open + 1);
        if (close == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        out += text.substr(pos, open - pos);
        std::string inside = text.substr(open + 1, close - open - 1);

        std::vector<int> nums;
        bool all_mapped = !trim(inside).empty();
        std::string piece;
        auto flush = [&]() {
            if (piece.empty()) return;
            auto it = numbers.find(normalize_doi(piece));
            if (it == numbers.end()) {
                all_mapped = false;
            } else {
                nums.push_back(it->second);
            }
            piece.clear();
        };
        for (char c : inside) {
            if (c == ',' || c == ';' || c == ' ' || c == '\t' || c == '\n') {
                flush();
            } else {
                piece.push_back(c);
            }
        }
        flush();

        if (all_mapped && !nums.empty()) {
            out += '[';
            for (std::size_t i = 0; i < nums.size(); ++i) {
                if (i > 0) out += ',';
                out += std::to_string(nums[i]);
            }
            out += ']';
        } else {
            out += text.substr(open, close - open + 1);
        }
        pos = close + 1;
    }
    return out;
}

std::string reference_line(int number, const std::string& doi,
                           const corpus::Document& doc) {
    std::string line = std::to_string(number) + ". " + doi;
    if (!doc.title.empty()) line += " - " + doc.title + ".";
    if (!doc.journal.empty()) line += " " + doc.journal;
    if (doc.year > 0) line += " (" + std::to_string(doc.year) + ")";
    return line;
}

}  // namespace

Result<ReviewDocument> assemble(const std::vector<outline::Topic>& topics,
                                const std::map<int, ParagraphDraft>& chosen,
                                const std::map<std::string, corpus::Document>& corpus_docs,
                                const std::string& title) {
    using R = Result<ReviewDocument>;
    if (chosen.empty()) {
        return R::failure("no_paragraphs", "nothing to assemble");
    }

    ReviewDocument doc;
    std::map<std::string, int> numbers;
    for (const outline::Topic& topic : topics) {
        auto it = chosen.find(topic.id);
        if (it == chosen.end()) {
            doc.failed_topics.push_back(topic.id);
            continue;
        }
        for (const std::string& cite : extract_bracket_citations(it->second.text)) {
            if (corpus_docs.count(cite) == 0) {
                return R::failure("integrity",
                                  "citation outside the corpus reached assembly: " + cite);
            }
            if (numbers.emplace(cite, static_cast<int>(doc.references.size()) + 1).second) {
                doc.references.push_back(cite);
            }
        }
    }

    doc.markdown = "# " + title + "\n";
    for (const outline::Topic& topic : topics) {
        auto it = chosen.find(topic.id);
        doc.markdown += "\n## " + std::to_string(topic.id) + ". " + topic.title + "\n\n";
        if (it == chosen.end()) {
            doc.markdown +=
                "> No paragraph passed the hallucination gates for this topic.\n";
            continue;
        }
        ReviewSection section;
        section.topic_id = topic.id;
        section.title = topic.title;
        section.text = renumber_citations(it->second.text, numbers);
        doc.markdown += section.text + "\n";
        doc.sections.push_back(std::move(section));

        for (const auto& sentence : split_sentences(it->second.text)) {
            std::string trimmed = trim(sentence.text);
            if (trimmed.empty()) continue;
            SentenceTrace tr;
            tr.topic_id = topic.id;
            tr.sentence = trimmed;
            tr.dois = extract_bracket_citations(sentence.text);
            doc.traces.push_back(std::move(tr));
        }
    }

    doc.markdown += "\n## References\n\n";
    for (std::size_t i = 0; i < doc.references.size(); ++i) {
        const std::string& doi = doc.references[i];
        doc.markdown +=
            reference_line(static_cast<int>(i) + 1, doi, corpus_docs.at(doi)) + "\n";
    }
    return R(std::move(doc));
}

std::string trace_to_json(const ReviewDocument& doc) {
    json j;
    j["sections"] = json::array();
    for (const ReviewSection& s : doc.sections) {
        j["sections"].push_back({{"topic_id", s.topic_id}, {"title", s.title}});
    }
    j["references"] = doc.references;
    j["sentences"] = json::array();
    for (const SentenceTrace& t : doc.traces) {
        j["sentences"].push_back(
            {{"topic_id", t.topic_id}, {"sentence", t.sentence}, {"dois", t.dois}});
    }
    j["failed_topics"] = doc.failed_topics;
    return j.dump(2);
}

VoidResult save_review(const ReviewDocument& doc, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        return VoidResult::failure("io_error", "cannot create " + dir + ": " + ec.message());
    }
    auto md = write_file_atomic(dir + "/review.md", doc.markdown);
    if (!md.ok()) return md;
    return write_file_atomic(dir + "/review_trace.json", trace_to_json(doc));
}

VoidResult save_drafts(const TopicComposition& topic, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir + "/paragraphs", ec);
    if (ec) {
        return VoidResult::failure("io_error", "cannot create " + dir + ": " + ec.message());
    }
    json meta;
    meta["topic_id"] = topic.topic_id;
    meta["chosen"] = topic.chosen;
    std::string body = meta.dump() + "\n";
    for (const ParagraphDraft& d : topic.drafts) body += draft_to_json(d) + "\n";
    return write_file_atomic(
        dir + "/paragraphs/topic-" + std::to_string(topic.topic_id) + ".jsonl", body);
}

Result<TopicComposition> load_drafts(int topic_id, const std::string& dir) {
    using R = Result<TopicComposition>;
    auto lines = read_lines(dir + "/paragraphs/topic-" + std::to_string(topic_id) + ".jsonl");
    if (!lines.ok()) return R(lines.error());
    if (lines.value().empty()) {
        return R::failure("bad_draft", "empty draft file for topic " + std::to_string(topic_id));
    }
    json meta = json::parse(lines.value()[0], nullptr, false);
    if (meta.is_discarded() || !meta.is_object() || !meta.contains("chosen")) {
        return R::failure("bad_draft", "draft file missing its header line");
    }
    TopicComposition topic;
    topic.topic_id = meta.value("topic_id", topic_id);
    topic.chosen = meta.value("chosen", -1);
    for (std::size_t i = 1; i < lines.value().size(); ++i) {
        if (trim(lines.value()[i]).empty()) continue;
        auto d = draft_from_json(lines.value()[i]);
        if (!d.ok()) return R(d.error());
        topic.drafts.push_back(std::move(d).take());
    }
    if (topic.chosen >= static_cast<int>(topic.drafts.size())) {
        return R::failure("bad_draft", "chosen index out of range in draft file");
    }
    return R(std::move(topic));
}

}  // namespace revgen::composition
