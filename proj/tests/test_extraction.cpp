#include "doctest.h"

#include <algorithm>
#include <random>
#include <string>

#include "json.hpp"
#include "revgen/extraction.hpp"

using namespace revgen;
using namespace revgen::extraction;
using nlohmann::json;

namespace {

config::RunConfig fast_cfg() {
    config::RunConfig cfg;
    cfg.max_attempts = 3;
    cfg.backoff_base_ms = 0;
    cfg.backoff_jitter_ms = 0;
    return cfg;
}

struct Entry {
    std::string stage, doc, group;
    json responses;  // array: strings or {"fail": ...} objects
};

std::unique_ptr<gateway::MockClient> make_mock(const std::vector<Entry>& entries) {
    json arr = json::array();
    for (const Entry& e : entries) {
        json obj;
        if (!e.stage.empty()) obj["stage"] = e.stage;
        if (!e.doc.empty()) obj["doc"] = e.doc;
        if (!e.group.empty()) obj["group"] = e.group;
        obj["responses"] = e.responses;
        arr.push_back(obj);
    }
    auto mock = gateway::MockClient::from_json(arr.dump());
    REQUIRE(mock != nullptr);
    return mock;
}

outline::QuestionSet make_questions(int n) {
    outline::QuestionSet qs;
    for (int i = 1; i <= n; ++i) {
        qs.questions.push_back(
            outline::Question{"Q" + std::to_string(i), (i - 1) / 4 + 1,
                              "question " + std::to_string(i) + "?"});
    }
    return qs;
}

// Extraction response covering the given qids; `relevant` lists the subset
// answered substantively.
std::string answers_xml(const std::vector<std::string>& qids,
                        const std::vector<std::string>& relevant) {
    std::string xml = "<answers>";
    for (const auto& qid : qids) {
        bool rel = std::find(relevant.begin(), relevant.end(), qid) != relevant.end();
        xml += "<item qid=\"" + qid + "\"><relevant>" + (rel ? "true" : "false") +
               "</relevant><answer>" + (rel ? "finding for " + qid : "") +
               "</answer><evidence>" + (rel ? "quote for " + qid : "") + "</evidence></item>";
    }
    xml += "</answers>";
    return xml;
}

DocumentChunk make_chunk(const char* doi, int index, const char* text) {
    DocumentChunk c;
    c.doi = doi;
    c.index = index;
    c.text = text;
    c.token_estimate = default_token_estimate(text);
    return c;
}

}  // namespace

TEST_CASE("question grouping partitions in stable order") {
    auto groups35 = group_questions(make_questions(35), 7);
    REQUIRE(groups35.ok());
    REQUIRE(groups35.value().size() == 5);
    for (const auto& g : groups35.value()) CHECK(g.questions.size() == 7);
    CHECK(groups35.value()[0].questions[0].id == "Q1");
    CHECK(groups35.value()[4].questions[6].id == "Q35");

    auto one = group_questions(make_questions(1), 7);
    REQUIRE(one.ok());
    REQUIRE(one.value().size() == 1);
    CHECK(one.value()[0].questions.size() == 1);

    auto ten = group_questions(make_questions(10), 7);
    REQUIRE(ten.ok());
    REQUIRE(ten.value().size() == 2);
    CHECK(ten.value()[0].questions.size() == 7);
    CHECK(ten.value()[1].questions.size() == 3);

    CHECK_FALSE(group_questions(make_questions(3), 0).ok());

    // Partition property: every question exactly once, original order kept.
    std::vector<std::string> seen;
    for (const auto& g : ten.value()) {
        CHECK(g.id == static_cast<int>(seen.size()) / 7 + 1);
        for (const auto& q : g.questions) seen.push_back(q.id);
    }
    for (int i = 0; i < 10; ++i) CHECK(seen[i] == "Q" + std::to_string(i + 1));
}

TEST_CASE("small documents stay in one chunk") {
    corpus::Document doc;
    doc.doi = "10.1/a";
    doc.body = std::string(8000, 'x');  // ~2000 tokens
    auto chunks = chunk_document(doc, 8000);
    REQUIRE(chunks.ok());
    REQUIRE(chunks.value().size() == 1);
    CHECK(chunks.value()[0].text == doc.body);
    CHECK(chunks.value()[0].index == 0);
}

TEST_CASE("oversized documents split into near-equal chunks at soft boundaries") {
    corpus::Document doc;
    doc.doi = "10.1/b";
    std::mt19937 rng(7);
    while (doc.body.size() < 80000) {  // ~20000 tokens
        int words = 40 + static_cast<int>(rng() % 40);
        for (int w = 0; w < words; ++w) doc.body += "catalyst ";
        doc.body += "\n\n";
    }
    auto chunks = chunk_document(doc, 8000);
    REQUIRE(chunks.ok());
    REQUIRE(chunks.value().size() == 3);

    std::string rebuilt;
    std::size_t smallest = doc.body.size(), largest = 0;
    for (const auto& c : chunks.value()) {
        rebuilt += c.text;
        smallest = std::min(smallest, c.text.size());
        largest = std::max(largest, c.text.size());
    }
    CHECK(rebuilt == doc.body);
    CHECK(static_cast<double>(largest) <= 1.2 * static_cast<double>(smallest));
    // Paragraph boundaries were in range, so cuts land after blank lines.
    CHECK(chunks.value()[0].text.substr(chunks.value()[0].text.size() - 2) == "\n\n");
    CHECK(chunks.value()[1].text.substr(chunks.value()[1].text.size() - 2) == "\n\n");
}

TEST_CASE("chunking falls back to hard cuts on boundary-free text") {
    corpus::Document doc;
    doc.doi = "10.1/c";
    doc.body = std::string(40000, 'y');
    auto chunks = chunk_document(doc, 5000);
    REQUIRE(chunks.ok());
    REQUIRE(chunks.value().size() == 2);
    std::string rebuilt = chunks.value()[0].text + chunks.value()[1].text;
    CHECK(rebuilt == doc.body);
    CHECK(static_cast<double>(std::max(chunks.value()[0].text.size(),
                                       chunks.value()[1].text.size())) <=
          1.2 * static_cast<double>(std::min(chunks.value()[0].text.size(),
                                             chunks.value()[1].text.size())));
}

TEST_CASE("chunking rejects empty bodies") {
    corpus::Document doc;
    doc.doi = "10.1/d";
    auto chunks = chunk_document(doc, 8000);
    REQUIRE_FALSE(chunks.ok());
    CHECK(chunks.error().code == "empty_body");
}

TEST_CASE("chunk concatenation is exact across random bodies") {
    std::mt19937 rng(20240816u);
    for (int trial = 0; trial < 20; ++trial) {
        corpus::Document doc;
        doc.doi = "10.1/f";
        std::size_t len = 5000 + rng() % 60000;
        for (std::size_t i = 0; i < len; ++i) {
            int roll = static_cast<int>(rng() % 100);
            if (roll < 2) {
                doc.body += "\n\n";
            } else if (roll < 6) {
                doc.body += '\n';
            } else if (roll < 20) {
                doc.body += ' ';
            } else {
                doc.body += static_cast<char>('a' + rng() % 26);
            }
        }
        auto chunks = chunk_document(doc, 3000);
        REQUIRE(chunks.ok());
        std::string rebuilt;
        std::size_t smallest = doc.body.size(), largest = 0;
        for (const auto& c : chunks.value()) {
            rebuilt += c.text;
            smallest = std::min(smallest, c.text.size());
            largest = std::max(largest, c.text.size());
        }
        CHECK(rebuilt == doc.body);
        if (chunks.value().size() > 1) {
            CHECK(static_cast<double>(largest) <= 1.2 * static_cast<double>(smallest));
        }
    }
}

TEST_CASE("a clean five-repetition run answers every question five times") {
    auto groups = group_questions(make_questions(7), 7);
    REQUIRE(groups.ok());
    const QuestionGroup& group = groups.value()[0];
    std::vector<std::string> qids;
    for (const auto& q : group.questions) qids.push_back(q.id);

    auto mock = make_mock({{"extract", "", "",
                            json::array({answers_xml(qids, {"Q1", "Q2", "Q3", "Q4"})})}});
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto out = ask_group(gw, make_chunk("10.1/doc", 0, "body"), group, 5);
    REQUIRE(out.ok());
    CHECK(out.value().complete);
    CHECK(out.value().missing_repetitions.empty());
    REQUIRE(out.value().answers.size() == 35);
    int relevant = 0, irrelevant_with_text = 0;
    for (const RawAnswer& a : out.value().answers) {
        CHECK(a.doi == "10.1/doc");
        if (a.relevant_claimed) {
            ++relevant;
            CHECK_FALSE(a.answer.empty());
        } else if (!a.answer.empty()) {
            ++irrelevant_with_text;
        }
    }
    CHECK(relevant == 20);  // 4 relevant questions x 5 repetitions
    CHECK(irrelevant_with_text == 0);
}

TEST_CASE("a malformed first attempt is retried within the repetition") {
    auto groups = group_questions(make_questions(2), 7);
    const QuestionGroup& group = groups.value()[0];
    auto mock = make_mock({{"extract", "10.1/doc", "g1:c0:r1",
                            json::array({"<answers><broken", answers_xml({"Q1", "Q2"}, {"Q1"})})}});
    auto* raw = mock.get();
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto out = ask_group(gw, make_chunk("10.1/doc", 0, "body"), group, 1);
    REQUIRE(out.ok());
    CHECK(out.value().complete);
    CHECK(out.value().missing_repetitions.empty());
    CHECK(out.value().answers.size() == 2);
    CHECK(raw->calls() == 2);  // format failure consumed one attempt
}

TEST_CASE("exhausted repetitions are recorded missing, not fatal") {
    auto groups = group_questions(make_questions(1), 7);
    const QuestionGroup& group = groups.value()[0];
    json fail = {{"fail", "transient"}};

    auto mock3 = make_mock({
        {"extract", "10.1/doc", "g1:c0:r2", json::array({fail})},
        {"extract", "", "", json::array({answers_xml({"Q1"}, {"Q1"})})},
    });
    gateway::Gateway gw3(std::move(mock3), fast_cfg());
    auto out3 = ask_group(gw3, make_chunk("10.1/doc", 0, "body"), group, 3);
    REQUIRE(out3.ok());
    CHECK(out3.value().complete);  // 2 of 3 landed
    REQUIRE(out3.value().missing_repetitions.size() == 1);
    CHECK(out3.value().missing_repetitions[0] == 2);
    CHECK(out3.value().answers.size() == 2);

    auto mock_bad = make_mock({
        {"extract", "10.1/doc", "g1:c0:r2", json::array({fail})},
        {"extract", "10.1/doc", "g1:c0:r3", json::array({fail})},
        {"extract", "", "", json::array({answers_xml({"Q1"}, {"Q1"})})},
    });
    gateway::Gateway gw_bad(std::move(mock_bad), fast_cfg());
    auto incomplete = ask_group(gw_bad, make_chunk("10.1/doc", 0, "body"), group, 3);
    REQUIRE(incomplete.ok());
    CHECK_FALSE(incomplete.value().complete);  // 1 of 3 landed
}

TEST_CASE("terminal provider failures propagate out of ask_group") {
    auto groups = group_questions(make_questions(1), 7);
    auto mock = make_mock({{"extract", "", "", json::array({json{{"fail", "terminal"}}})}});
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto out = ask_group(gw, make_chunk("10.1/doc", 0, "body"), groups.value()[0], 2);
    REQUIRE_FALSE(out.ok());
    CHECK(out.error().code == "terminal");
}

TEST_CASE("raising repetitions never loses answered cells on a fixed script") {
    auto groups = group_questions(make_questions(2), 7);
    const QuestionGroup& group = groups.value()[0];
    std::vector<Entry> script = {
        {"extract", "10.1/doc", "g1:c0:r2", json::array({json{{"fail", "transient"}}})},
        {"extract", "", "", json::array({answers_xml({"Q1", "Q2"}, {"Q1", "Q2"})})},
    };
    auto count_answered = [&](int reps) {
        gateway::Gateway gw(make_mock(script), fast_cfg());
        auto out = ask_group(gw, make_chunk("10.1/doc", 0, "body"), group, reps);
        REQUIRE(out.ok());
        int n = 0;
        for (const auto& a : out.value().answers) {
            if (a.relevant_claimed) ++n;
        }
        return n;
    };
    int with3 = count_answered(3);
    int with5 = count_answered(5);
    CHECK(with3 == 4);  // reps 1 and 3
    CHECK(with5 == 8);  // reps 1, 3, 4, 5
    CHECK(with5 >= with3);
}

TEST_CASE("relevance filter trusts only an explicit yes") {
    RawAnswer a;
    a.doi = "10.1/doc";
    a.qid = "Q1";
    a.repetition = 1;
    a.relevant_claimed = true;
    a.answer = "Pt loading of 0.5 wt% maximizes selectivity";
    a.evidence = "0.5 wt% Pt gave 99% selectivity";

    auto yes = make_mock({{"relevance", "", "",
                           json::array({"<verdict><choice>yes</choice></verdict>"})}});
    gateway::Gateway gw_yes(std::move(yes), fast_cfg());
    CHECK(relevance_filter(gw_yes, a, "what loading is optimal?"));

    auto no = make_mock({{"relevance", "", "",
                          json::array({"<verdict><choice>no</choice></verdict>"})}});
    gateway::Gateway gw_no(std::move(no), fast_cfg());
    CHECK_FALSE(relevance_filter(gw_no, a, "what preparation method is used?"));

    auto broken = make_mock({{"relevance", "", "", json::array({"mumbling, no xml"})}});
    gateway::Gateway gw_broken(std::move(broken), fast_cfg());
    CHECK_FALSE(relevance_filter(gw_broken, a, "judge offline case"));

    RawAnswer unclaimed = a;
    unclaimed.relevant_claimed = false;
    unclaimed.answer.clear();
    auto untouched = make_mock({{"relevance", "", "", json::array({"never used"})}});
    auto* raw = untouched.get();
    gateway::Gateway gw_untouched(std::move(untouched), fast_cfg());
    CHECK_FALSE(relevance_filter(gw_untouched, unclaimed, "q"));
    CHECK(raw->calls() == 0);
}

TEST_CASE("merge input is canonical regardless of completion order") {
    std::vector<RawAnswer> answers;
    for (int rep : {4, 1, 3}) {
        RawAnswer a;
        a.doi = "10.1/doc";
        a.qid = "Q2";
        a.repetition = rep;
        a.relevant_claimed = true;
        a.answer = "answer " + std::to_string(rep);
        answers.push_back(a);
    }
    std::string ordered = format_answers_for_merge(answers);
    std::reverse(answers.begin(), answers.end());
    CHECK(format_answers_for_merge(answers) == ordered);
    CHECK(ordered.find("repetition 1") < ordered.find("repetition 3"));
    CHECK(ordered.find("repetition 3") < ordered.find("repetition 4"));
}

TEST_CASE("aggregation merges survivors into one cited combination") {
    std::vector<RawAnswer> surviving;
    for (int rep : {1, 2, 4, 5}) {
        RawAnswer a;
        a.doi = "10.1/doc";
        a.qid = "Q3";
        a.repetition = rep;
        a.relevant_claimed = true;
        a.answer = "Pt-Sn alloys resist coking (rep " + std::to_string(rep) + ")";
        a.evidence = "coke formation dropped";
        surviving.push_back(a);
    }
    auto mock = make_mock({{"aggregate", "", "",
                            json::array({answers_xml({"Q3"}, {"Q3"})})}});
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto combo = aggregate_answers(gw, "10.1/doc", "Q3", "how is coking handled?", surviving);
    REQUIRE(combo.ok());
    REQUIRE(combo.value().has_value());
    CHECK(combo.value()->qid == "Q3");
    CHECK(combo.value()->text == "finding for Q3");
    REQUIRE(combo.value()->dois.size() == 1);
    CHECK(combo.value()->dois[0] == "10.1/doc");
    CHECK(combo.value()->repetitions == std::vector<int>{1, 2, 4, 5});
}

TEST_CASE("aggregation returns none when nothing survived") {
    auto mock = make_mock({{"aggregate", "", "", json::array({"never called"})}});
    auto* raw = mock.get();
    gateway::Gateway gw(std::move(mock), fast_cfg());

    RawAnswer irrelevant;
    irrelevant.doi = "10.1/doc";
    irrelevant.qid = "Q1";
    irrelevant.relevant_claimed = false;
    auto combo = aggregate_answers(gw, "10.1/doc", "Q1", "q?", {irrelevant});
    REQUIRE(combo.ok());
    CHECK_FALSE(combo.value().has_value());
    CHECK(raw->calls() == 0);
}

TEST_CASE("aggregation flags unusable merge responses") {
    std::vector<RawAnswer> surviving(1);
    surviving[0].doi = "10.1/doc";
    surviving[0].qid = "Q1";
    surviving[0].repetition = 1;
    surviving[0].relevant_claimed = true;
    surviving[0].answer = "content";

    auto empty_merge = make_mock(
        {{"aggregate", "", "",
          json::array({"<answers><item qid=\"Q1\"><relevant>true</relevant><answer></answer>"
                       "<evidence></evidence></item></answers>"})}});
    gateway::Gateway gw(std::move(empty_merge), fast_cfg());
    auto combo = aggregate_answers(gw, "10.1/doc", "Q1", "q?", surviving);
    REQUIRE_FALSE(combo.ok());
    CHECK(combo.error().code == "merge_failed");

    auto persistent_garbage = make_mock({{"aggregate", "", "", json::array({"no xml here"})}});
    gateway::Gateway gw2(std::move(persistent_garbage), fast_cfg());
    auto failed = aggregate_answers(gw2, "10.1/doc", "Q1", "q?", surviving);
    REQUIRE_FALSE(failed.ok());
    CHECK(failed.error().code == "format_exhausted");
}

TEST_CASE("the single-item fallback tolerates a renamed qid") {
    std::vector<RawAnswer> surviving(1);
    surviving[0].doi = "10.1/doc";
    surviving[0].qid = "Q7";
    surviving[0].repetition = 1;
    surviving[0].relevant_claimed = true;
    surviving[0].answer = "content";
    auto mock = make_mock({{"aggregate", "", "",
                            json::array({answers_xml({"Q1"}, {"Q1"})})}});
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto combo = aggregate_answers(gw, "10.1/doc", "Q7", "q?", surviving);
    REQUIRE(combo.ok());
    REQUIRE(combo.value().has_value());
    CHECK(combo.value()->qid == "Q7");
    CHECK(combo.value()->text == "finding for Q1");
}

TEST_CASE("consistency checks return the judged percentage") {
    std::string drift_key =
        fnv1a64_hex(std::string("raw says 450 C") + '\x1f' + "aggregate says 500 C");
    auto mock = make_mock(
        {{"consistency", drift_key, "",
          json::array({"<consistency><percent>76</percent></consistency>"})},
         {"consistency", "", "",
          json::array({"<consistency><percent>100</percent></consistency>"})}});
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto identical = consistency_check(gw, "same text", "same text");
    REQUIRE(identical.ok());
    CHECK(identical.value() == 100);

    auto drifted = consistency_check(gw, "raw says 450 C", "aggregate says 500 C");
    REQUIRE(drifted.ok());
    CHECK(drifted.value() == 76);

    CHECK(consistency_check(gw, "", "agg").error().code == "empty_text");
    CHECK(consistency_check(gw, "raw", " ").error().code == "empty_text");
}

TEST_CASE("traceability demands corpus membership for every DOI") {
    std::set<std::string> corpus_dois = {"10.1/a", "10.1/b"};
    InfoCombination good{"Q1", "text", {"10.1/a"}, {1}};
    CHECK(check_traceability({good}, corpus_dois).ok());

    InfoCombination foreign{"Q2", "text", {"10.1/zz"}, {1}};
    auto bad = check_traceability({good, foreign}, corpus_dois);
    REQUIRE_FALSE(bad.ok());
    CHECK(bad.error().code == "integrity");
    CHECK(bad.error().message.find("10.1/zz") != std::string::npos);

    InfoCombination unsupported{"Q3", "text", {}, {1}};
    CHECK_FALSE(check_traceability({unsupported}, corpus_dois).ok());
}

TEST_CASE("raw answers and combinations round-trip through JSON") {
    RawAnswer a;
    a.doi = "10.1/doc";
    a.qid = "Q5";
    a.repetition = 3;
    a.chunk_index = 1;
    a.relevant_claimed = true;
    a.answer = "the answer";
    a.evidence = "the \"quote\"";
    auto a2 = raw_answer_from_json(raw_answer_to_json(a));
    REQUIRE(a2.ok());
    CHECK(a2.value().qid == "Q5");
    CHECK(a2.value().repetition == 3);
    CHECK(a2.value().chunk_index == 1);
    CHECK(a2.value().evidence == a.evidence);

    InfoCombination c{"Q5", "merged", {"10.1/doc"}, {1, 3, 5}};
    auto c2 = combination_from_json(combination_to_json(c));
    REQUIRE(c2.ok());
    CHECK(c2.value().text == "merged");
    CHECK(c2.value().repetitions == std::vector<int>{1, 3, 5});

    CHECK_FALSE(raw_answer_from_json("nope").ok());
    CHECK_FALSE(combination_from_json("[1,2]").ok());
}
