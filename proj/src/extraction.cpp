#include "revgen/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "revgen/schemas.hpp"

namespace revgen::extraction {

using nlohmann::json;

Result<std::vector<QuestionGroup>> group_questions(const outline::QuestionSet& qs,
                                                   int group_size) {
    using R = Result<std::vector<QuestionGroup>>;
    if (group_size < 1) return R::failure("bad_group_size", "group size must be at least 1");
    std::vector<QuestionGroup> groups;
    for (std::size_t i = 0; i < qs.questions.size(); ++i) {
        if (i % static_cast<std::size_t>(group_size) == 0) {
            groups.push_back(QuestionGroup{static_cast<int>(groups.size()) + 1, {}});
        }
        groups.back().questions.push_back(qs.questions[i]);
    }
    return R(std::move(groups));
}

// ---------------------------------------------------------------------------
// Chunking

namespace {

// Best boundary inside [lo, hi], preferring paragraph over line over space
// breaks, nearest to `ideal` within each class. Returns npos when the window
// holds none.
std::size_t boundary_near(const std::string& body, std::size_t lo, std::size_t hi,
                          std::size_t ideal) {
    std::size_t best_para = std::string::npos;
    std::size_t best_line = std::string::npos;
    std::size_t best_space = std::string::npos;
    auto better = [&](std::size_t current, std::size_t candidate) {
        if (current == std::string::npos) return candidate;
        auto dist = [&](std::size_t p) { return p > ideal ? p - ideal : ideal - p; };
        return dist(candidate) < dist(current) ? candidate : current;
    };
    for (std::size_t i = lo; i < hi && i < body.size(); ++i) {
        if (body[i] == '\n') {
            if (i + 1 < body.size() && body[i + 1] == '\n') {
                best_para = better(best_para, i + 2);  // cut after the blank line
            } else {
                best_line = better(best_line, i + 1);
            }
        } else if (body[i] == ' ') {
            best_space = better(best_space, i + 1);
        }
    }
    if (best_para != std::string::npos) return best_para;
    if (best_line != std::string::npos) return best_line;
    return best_space;
}

}  // namespace

Result<std::vector<DocumentChunk>> chunk_document(const corpus::Document& doc, long context_budget,
                                                  const TokenEstimator& estimator) {
    using R = Result<std::vector<DocumentChunk>>;
    if (doc.body.empty()) {
        return R::failure("empty_body", doc.doi + ": cannot chunk a document without a body");
    }
    if (context_budget < 1) return R::failure("bad_budget", "context budget must be positive");
    long estimate = estimator(doc.body);
    long k = (estimate + context_budget - 1) / context_budget;
    if (k < 1) k = 1;
    const std::string& body = doc.body;
    std::size_t length = body.size();
    // The +-4% window around each ideal cut bounds chunk sizes to within 8%
    // of each other, well inside the 20% requirement.
    std::size_t window = std::max<std::size_t>(1, (length / static_cast<std::size_t>(k)) / 25);
    std::vector<std::size_t> cuts;
    std::size_t prev = 0;
    for (long i = 1; i < k; ++i) {
        std::size_t ideal = length * static_cast<std::size_t>(i) / static_cast<std::size_t>(k);
        std::size_t lo = std::max(ideal > window ? ideal - window : 1, prev + 1);
        std::size_t hi = std::min(ideal + window, length - 1);
        std::size_t cut = std::string::npos;
        if (lo < hi) cut = boundary_near(body, lo, hi, ideal);
        if (cut == std::string::npos || cut <= prev || cut >= length) {
            cut = std::clamp(ideal, prev + 1, length - 1);
        }
        cuts.push_back(cut);
        prev = cut;
    }
    cuts.push_back(length);
    std::vector<DocumentChunk> chunks;
    std::size_t begin = 0;
    for (std::size_t cut : cuts) {
        DocumentChunk chunk;
        chunk.doi = doc.doi;
        chunk.index = static_cast<int>(chunks.size());
        chunk.text = body.substr(begin, cut - begin);
        chunk.token_estimate = estimator(chunk.text);
        chunks.push_back(std::move(chunk));
        begin = cut;
    }
    return R(std::move(chunks));
}

// ---------------------------------------------------------------------------
// RawAnswer serialization

std::string raw_answer_to_json(const RawAnswer& a) {
    json j;
    j["doi"] = a.doi;
    j["qid"] = a.qid;
    j["rep"] = a.repetition;
    j["chunk"] = a.chunk_index;
    j["relevant"] = a.relevant_claimed;
    j["answer"] = a.answer;
    j["evidence"] = a.evidence;
    return j.dump();
}

Result<RawAnswer> raw_answer_from_json(std::string_view line) {
    using R = Result<RawAnswer>;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return R::failure("bad_record", "raw answer line is not a JSON object");
    }
    RawAnswer a;
    a.doi = j.value("doi", "");
    a.qid = j.value("qid", "");
    a.repetition = j.value("rep", 1);
    a.chunk_index = j.value("chunk", 0);
    a.relevant_claimed = j.value("relevant", false);
    a.answer = j.value("answer", "");
    a.evidence = j.value("evidence", "");
    return R(std::move(a));
}

// ---------------------------------------------------------------------------
// Extraction calls

Result<GroupExtraction> ask_group(gateway::Gateway& gw, const DocumentChunk& chunk,
                                  const QuestionGroup& group, int repetitions) {
    using R = Result<GroupExtraction>;
    if (repetitions < 1) return R::failure("bad_repetitions", "repetitions must be at least 1");
    std::string question_block;
    for (const outline::Question& q : group.questions) {
        question_block += q.id + ": " + q.text + "\n";
    }
    GroupExtraction out;
    for (int rep = 1; rep <= repetitions; ++rep) {
        gateway::CompletionRequest req;
        req.template_id = "extract";
        req.vars = {{"questions", question_block}, {"document", chunk.text}};
        req.key = {"extract", chunk.doi,
                   "g" + std::to_string(group.id) + ":c" + std::to_string(chunk.index) + ":r" +
                       std::to_string(rep)};
        auto resp = gw.complete_structured(req, "extraction-answers");
        if (!resp) {
            const std::string& code = resp.error().code;
            if (code == "retry_exhausted" || code == "format_exhausted") {
                out.missing_repetitions.push_back(rep);
                continue;
            }
            return resp.forward<GroupExtraction>();
        }
        const auto& payload = std::get<schemas::AnswersPayload>(resp.value().structured.payload);
        std::map<std::string, const schemas::AnswerItem*> by_qid;
        for (const auto& item : payload.items) by_qid[item.qid] = &item;
        for (const outline::Question& q : group.questions) {
            RawAnswer a;
            a.doi = chunk.doi;
            a.qid = q.id;
            a.repetition = rep;
            a.chunk_index = chunk.index;
            auto it = by_qid.find(q.id);
            if (it != by_qid.end() && it->second->relevant) {
                a.relevant_claimed = true;
                a.answer = it->second->answer;
                a.evidence = it->second->evidence;
            }
            // Absent items and explicit irrelevance both mean "this chunk
            // does not address the question": empty answer, not an error.
            out.answers.push_back(std::move(a));
        }
    }
    int landed = repetitions - static_cast<int>(out.missing_repetitions.size());
    out.complete = landed >= (repetitions + 1) / 2;
    return R(std::move(out));
}

bool relevance_filter(gateway::Gateway& gw, const RawAnswer& answer,
                      const std::string& question) {
    if (!answer.relevant_claimed || answer.answer.empty()) return false;
    gateway::CompletionRequest req;
    req.template_id = "relevance";
    req.vars = {{"question", question}, {"answer", answer.answer}, {"evidence", answer.evidence}};
    req.key = {"relevance", answer.doi,
               answer.qid + ":c" + std::to_string(answer.chunk_index) + ":r" +
                   std::to_string(answer.repetition)};
    auto resp = gw.complete_structured(req, "comparison-verdict");
    if (!resp) return false;  // judge trouble excludes the answer
    const auto& verdict = std::get<schemas::VerdictPayload>(resp.value().structured.payload);
    return verdict.choice.has_value() && *verdict.choice == schemas::Choice::Yes;
}

// ---------------------------------------------------------------------------
// Aggregation

std::string format_answers_for_merge(std::vector<RawAnswer> answers) {
    std::sort(answers.begin(), answers.end(), [](const RawAnswer& a, const RawAnswer& b) {
        if (a.repetition != b.repetition) return a.repetition < b.repetition;
        return a.chunk_index < b.chunk_index;
    });
    std::string out;
    for (const RawAnswer& a : answers) {
        out += "repetition " + std::to_string(a.repetition) + " (chunk " +
               std::to_string(a.chunk_index) + "): " + a.answer;
        if (!a.evidence.empty()) out += " [evidence: " + a.evidence + "]";
        out += '\n';
    }
    return out;
}

std::string combination_to_json(const InfoCombination& c) {
    json j;
    j["qid"] = c.qid;
    j["text"] = c.text;
    j["dois"] = c.dois;
    j["reps"] = c.repetitions;
    return j.dump();
}

Result<InfoCombination> combination_from_json(std::string_view line) {
    using R = Result<InfoCombination>;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return R::failure("bad_record", "combination line is not a JSON object");
    }
    InfoCombination c;
    c.qid = j.value("qid", "");
    c.text = j.value("text", "");
    if (j.contains("dois") && j["dois"].is_array()) {
        for (const auto& d : j["dois"]) c.dois.push_back(d.get<std::string>());
    }
    if (j.contains("reps") && j["reps"].is_array()) {
        for (const auto& r : j["reps"]) c.repetitions.push_back(r.get<int>());
    }
    return R(std::move(c));
}

Result<std::optional<InfoCombination>> aggregate_answers(gateway::Gateway& gw,
                                                         const std::string& doc_doi,
                                                         const std::string& qid,
                                                         const std::string& question,
                                                         std::vector<RawAnswer> surviving) {
    using R = Result<std::optional<InfoCombination>>;
    surviving.erase(std::remove_if(surviving.begin(), surviving.end(),
                                   [](const RawAnswer& a) {
                                       return !a.relevant_claimed || a.answer.empty();
                                   }),
                    surviving.end());
    if (surviving.empty()) return R(std::nullopt);

    gateway::CompletionRequest req;
    req.template_id = "aggregate";
    req.vars = {{"question", question},
                {"qid", qid},
                {"answers", format_answers_for_merge(surviving)}};
    req.key = {"aggregate", doc_doi, qid};
    auto resp = gw.complete_structured(req, "extraction-answers");
    if (!resp) return resp.forward<std::optional<InfoCombination>>();
    const auto& payload = std::get<schemas::AnswersPayload>(resp.value().structured.payload);
    const schemas::AnswerItem* merged = nullptr;
    for (const auto& item : payload.items) {
        if (item.qid == qid) {
            merged = &item;
            break;
        }
    }
    if (merged == nullptr && payload.items.size() == 1) merged = &payload.items[0];
    if (merged == nullptr || merged->answer.empty()) {
        return R::failure("merge_failed",
                          doc_doi + " " + qid + ": merge response held no usable answer");
    }
    InfoCombination combo;
    combo.qid = qid;
    combo.text = merged->answer;
    combo.dois = {doc_doi};
    std::set<int> reps;
    for (const RawAnswer& a : surviving) reps.insert(a.repetition);
    combo.repetitions.assign(reps.begin(), reps.end());
    return R(std::optional<InfoCombination>(std::move(combo)));
}

Result<int> consistency_check(gateway::Gateway& gw, const std::string& raw_text,
                              const std::string& aggregate_text) {
    using R = Result<int>;
    if (trim(raw_text).empty() || trim(aggregate_text).empty()) {
        return R::failure("empty_text", "consistency check needs both texts");
    }
    gateway::CompletionRequest req;
    req.template_id = "consistency";
    req.vars = {{"raw", raw_text}, {"aggregate", aggregate_text}};
    req.key = {"consistency", fnv1a64_hex(raw_text + "\x1f" + aggregate_text), ""};
    auto resp = gw.complete_structured(req, "consistency-verdict");
    if (!resp) return resp.forward<int>();
    return R(std::get<schemas::ConsistencyPayload>(resp.value().structured.payload).percent);
}

VoidResult check_traceability(const std::vector<InfoCombination>& combinations,
                              const std::set<std::string>& corpus_dois) {
    for (const InfoCombination& c : combinations) {
        if (c.dois.empty()) {
            return VoidResult::failure("integrity",
                                       c.qid + ": combination carries no supporting DOI");
        }
        for (const std::string& d : c.dois) {
            if (corpus_dois.count(d) == 0) {
                return VoidResult::failure("integrity",
                                           c.qid + ": DOI " + d + " is not a corpus member");
            }
        }
    }
    return ok_void();
}

}  // namespace revgen::extraction
