#include "doctest.h"

#include <algorithm>
#include <unistd.h>

#include "json.hpp"
#include "revgen/composition.hpp"

using namespace revgen;
using namespace revgen::composition;
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
    json responses;
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

const char* kCleanParagraph =
    "<paragraph topic=\"alloying\"><text>Alloying platinum with tin raises propylene "
    "selectivity above ninety percent [10.1/a]. Coke formation drops sharply on the alloyed "
    "surface under realistic feeds [10.1/b].</text><references><doi>10.1/a</doi>"
    "<doi>10.1/b</doi></references></paragraph>";

const char* kGhostParagraph =
    "<paragraph topic=\"alloying\"><text>Ghost citations sneak into generated claims all "
    "too easily [10.9999/ghost].</text><references><doi>10.9999/ghost</doi></references>"
    "</paragraph>";

std::set<std::string> corpus_ab() { return {"10.1/a", "10.1/b"}; }

outline::Topic topic1() { return outline::Topic{1, "alloying effects", "", outline::TopicSource::drafted}; }

extraction::InfoCombination combo(const std::string& qid, const std::string& text,
                                  const std::string& doi) {
    return extraction::InfoCombination{qid, text, {doi}, {1, 2, 3}};
}

ParagraphDraft handmade_draft(int topic_id, std::string text,
                              std::vector<std::string> refs) {
    ParagraphDraft d;
    d.topic_id = topic_id;
    d.generation = 1;
    d.text = std::move(text);
    d.references = std::move(refs);
    d.format_pass = true;
    d.doi_pass = true;
    return d;
}

std::string score_xml(int n) {
    return "<verdict><score>" + std::to_string(n) + "</score></verdict>";
}

}  // namespace

TEST_CASE("evidence blocks attach bracketed DOIs once") {
    std::vector<extraction::InfoCombination> ev = {
        combo("Q1", "tin suppresses coking", "10.1/a"),
        combo("Q2", "already cited inline [10.1/b]", "10.1/b"),
    };
    std::string block = format_evidence(ev);
    CHECK(block == "- tin suppresses coking [10.1/a]\n- already cited inline [10.1/b]\n");
}

TEST_CASE("the format gate accepts valid roots, chatter included") {
    CHECK(gate_format(kCleanParagraph));
    CHECK(gate_format("Sure! Here it is:\n" + std::string(kCleanParagraph) + "\nHope it helps."));
    CHECK_FALSE(gate_format("<paragraph topic=\"t\"><text>unclosed"));
    CHECK_FALSE(gate_format("no xml at all"));
}

TEST_CASE("the citation gate verifies corpus membership and structure") {
    ParagraphDraft clean = handmade_draft(
        1, "Selectivity rises with tin content across every tested loading [10.1/a].",
        {"10.1/a"});
    auto gate = gate_doi(clean, corpus_ab());
    CHECK(gate.pass);
    CHECK(gate.offending.empty());

    ParagraphDraft ghost = clean;
    ghost.references = {"10.9999/ghost"};
    ghost.text = "Fabricated sources still read convincingly in isolation [10.9999/ghost].";
    auto ghost_gate = gate_doi(ghost, corpus_ab());
    CHECK_FALSE(ghost_gate.pass);
    REQUIRE(ghost_gate.offending.size() == 1);
    CHECK(ghost_gate.offending[0] == "10.9999/ghost");

    // Inline citation absent from the reference list dangles even though the
    // corpus knows the DOI.
    ParagraphDraft dangling = clean;
    dangling.text =
        "Both effects appear in the same catalyst series tested here [10.1/a] [10.1/b].";
    auto dangle_gate = gate_doi(dangling, corpus_ab());
    CHECK_FALSE(dangle_gate.pass);
    REQUIRE(dangle_gate.offending.size() == 1);
    CHECK(dangle_gate.offending[0] == "10.1/b");
}

TEST_CASE("the citation gate normalizes DOI spellings before comparing") {
    ParagraphDraft spelled = handmade_draft(
        1, "Casing and URL prefixes never defeat the verification step [10.1/a].",
        {"https://doi.org/10.1/A"});
    CHECK(gate_doi(spelled, corpus_ab()).pass);
}

TEST_CASE("the citation gate rejects empty reference lists and uncited conclusions") {
    ParagraphDraft bare = handmade_draft(1, "Some text without any references at all here.", {});
    CHECK_FALSE(gate_doi(bare, corpus_ab()).pass);

    ParagraphDraft uncited = handmade_draft(
        1,
        "Tin clearly suppresses coke formation on platinum surfaces. Supported claims cite "
        "their sources properly every time [10.1/a].",
        {"10.1/a"});
    auto gate = gate_doi(uncited, corpus_ab());
    CHECK_FALSE(gate.pass);
    REQUIRE(gate.uncited.size() == 1);
    CHECK(gate.uncited[0].find("Tin clearly suppresses") == 0);
}

TEST_CASE("paragraph generation computes gate verdicts immediately") {
    auto mock = make_mock({{"compose", "", "", json::array({kCleanParagraph})}});
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto draft = generate_paragraph(gw, topic1(), "- evidence [10.1/a]\n", 1, corpus_ab());
    REQUIRE(draft.ok());
    CHECK(draft.value().format_pass);
    CHECK(draft.value().doi_pass);
    CHECK(draft.value().references == std::vector<std::string>{"10.1/a", "10.1/b"});
    CHECK(draft.value().generation == 1);

    auto ghost = make_mock({{"compose", "", "", json::array({kGhostParagraph})}});
    gateway::Gateway gw2(std::move(ghost), fast_cfg());
    auto bad = generate_paragraph(gw2, topic1(), "- ev\n", 1, corpus_ab());
    REQUIRE(bad.ok());
    CHECK(bad.value().format_pass);
    CHECK_FALSE(bad.value().doi_pass);
    CHECK(bad.value().offending == std::vector<std::string>{"10.9999/ghost"});
}

TEST_CASE("format failures are drafts with verdicts, not errors") {
    auto mock = make_mock({{"compose", "", "", json::array({"<paragraph><broken"})}});
    gateway::Gateway gw(std::move(mock), fast_cfg());
    auto draft = generate_paragraph(gw, topic1(), "- ev\n", 2, corpus_ab());
    REQUIRE(draft.ok());
    CHECK_FALSE(draft.value().format_pass);
    CHECK_FALSE(draft.value().doi_pass);
    CHECK(draft.value().raw == "<paragraph><broken");
    CHECK(draft.value().generation == 2);

    auto dead = make_mock({{"compose", "", "", json::array({json{{"fail", "terminal"}}})}});
    gateway::Gateway gw2(std::move(dead), fast_cfg());
    CHECK(generate_paragraph(gw2, topic1(), "- ev\n", 1, corpus_ab()).error().code ==
          "terminal");
}

TEST_CASE("best-of-n picks the highest score, earliest generation on ties") {
    std::vector<Entry> entries = {{"compose", "", "", json::array({kCleanParagraph})}};
    int scores[] = {6, 7, 9, 5, 9, 4, 8, 7, 6};
    for (int g = 1; g <= 9; ++g) {
        entries.push_back(
            {"score", "t1", "n" + std::to_string(g), json::array({score_xml(scores[g - 1])})});
    }
    gateway::Gateway gw(make_mock(entries), fast_cfg());
    BestOfNParams params;
    params.target_passes = 9;
    auto topic = best_of_n(gw, topic1(), {combo("Q1", "ev", "10.1/a")}, corpus_ab(), params);
    REQUIRE(topic.ok());
    REQUIRE(topic.value().drafts.size() == 9);
    CHECK_FALSE(topic.value().failed());
    CHECK(topic.value().chosen == 2);  // generation 3 holds the first 9
    CHECK(topic.value().drafts[2].score == 9);
    for (const ParagraphDraft& d : topic.value().drafts) {
        CHECK(topic.value().drafts[topic.value().chosen].score >= d.score);
    }
}

TEST_CASE("best-of-n with a single target pass stops after one success") {
    gateway::Gateway gw(make_mock({{"compose", "", "", json::array({kCleanParagraph})},
                                   {"score", "", "", json::array({score_xml(7)})}}),
                        fast_cfg());
    BestOfNParams params;
    params.target_passes = 1;
    auto topic = best_of_n(gw, topic1(), {combo("Q1", "ev", "10.1/a")}, corpus_ab(), params);
    REQUIRE(topic.ok());
    CHECK(topic.value().drafts.size() == 1);
    CHECK(topic.value().chosen == 0);
    CHECK(topic.value().drafts[0].score == 7);
}

TEST_CASE("a topic where nothing passes fails loudly but completes") {
    auto mock = make_mock({{"compose", "", "", json::array({kGhostParagraph})}});
    auto* raw = mock.get();
    gateway::Gateway gw(std::move(mock), fast_cfg());
    BestOfNParams params;
    params.target_passes = 2;
    auto topic = best_of_n(gw, topic1(), {combo("Q1", "ev", "10.1/a")}, corpus_ab(), params);
    REQUIRE(topic.ok());
    CHECK(topic.value().failed());
    CHECK(topic.value().drafts.size() == 10);  // full ceiling consumed
    for (const ParagraphDraft& d : topic.value().drafts) {
        CHECK(d.format_pass);
        CHECK_FALSE(d.doi_pass);
        CHECK(d.score == -1);  // failing drafts are never judged
    }
    CHECK(raw->calls() == 10);  // compose only; no score calls happened
}

TEST_CASE("pass-rate accounting always sums to one hundred percent") {
    std::vector<ParagraphDraft> drafts;
    auto push = [&](bool format, bool doi) {
        ParagraphDraft d;
        d.format_pass = format;
        d.doi_pass = format && doi;
        drafts.push_back(d);
    };
    for (int i = 0; i < 5; ++i) push(true, true);
    for (int i = 0; i < 3; ++i) push(true, false);
    for (int i = 0; i < 2; ++i) push(false, false);
    PassRates rates = tally_drafts(drafts);
    CHECK(rates.total == 10);
    CHECK(rates.passing == 5);
    CHECK(rates.doi_fails == 3);
    CHECK(rates.format_fails == 2);
    CHECK(rates.pass_percent() + rates.format_fail_percent() + rates.doi_fail_percent() ==
          doctest::Approx(100.0));

    PassRates scale;
    scale.total = 875;
    scale.passing = 315;
    scale.format_fails = 333;
    scale.doi_fails = 227;
    CHECK(scale.pass_percent() == doctest::Approx(36.0));
}

TEST_CASE("evidence under budget is returned without any model call") {
    auto mock = make_mock({{"compress", "", "", json::array({"never used"})}});
    auto* raw = mock.get();
    gateway::Gateway gw(std::move(mock), fast_cfg());
    std::vector<extraction::InfoCombination> ev = {combo("Q1", "short", "10.1/a")};
    auto out = compress(gw, ev, 1000);
    REQUIRE(out.ok());
    CHECK(out.value()[0].text == "short");
    CHECK(raw->calls() == 0);
}

TEST_CASE("one condensation round brings oversized evidence under budget") {
    std::string longtext(600, 'x');
    gateway::Gateway gw(
        make_mock({{"compress", "", "", json::array({"tin story condensed [10.1/a]"})}}),
        fast_cfg());
    std::vector<extraction::InfoCombination> ev = {combo("Q1", longtext, "10.1/a")};
    std::vector<std::string> warnings;
    auto out = compress(gw, ev, 120, default_token_estimate, &warnings);
    REQUIRE(out.ok());
    CHECK(out.value()[0].text == "tin story condensed [10.1/a]");
    CHECK(warnings.empty());
}

TEST_CASE("condensation rounds that lose a DOI are rejected") {
    std::string longtext(600, 'x');
    gateway::Gateway gw(
        make_mock({{"compress", "Q1", "i1", json::array({"summary with no citation"})},
                   {"compress", "Q1", "i2", json::array({"kept citation [10.1/a]"})}}),
        fast_cfg());
    std::vector<extraction::InfoCombination> ev = {combo("Q1", longtext, "10.1/a")};
    std::vector<std::string> warnings;
    auto out = compress(gw, ev, 120, default_token_estimate, &warnings);
    REQUIRE(out.ok());
    CHECK(out.value()[0].text == "kept citation [10.1/a]");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("dropped a DOI") != std::string::npos);
}

TEST_CASE("persistent bad compressions fall back to flagged hard truncation") {
    std::string longtext(2000, 'x');
    gateway::Gateway gw(
        make_mock({{"compress", "", "", json::array({"always loses the citation"})}}),
        fast_cfg());
    std::vector<extraction::InfoCombination> ev = {combo("Q1", longtext, "10.1/a")};
    std::vector<std::string> warnings;
    auto out = compress(gw, ev, 100, default_token_estimate, &warnings);
    REQUIRE(out.ok());
    CHECK(out.value()[0].text.size() < 2000);
    CHECK(out.value()[0].text.find("...") != std::string::npos);
    CHECK(out.value()[0].dois == std::vector<std::string>{"10.1/a"});
    bool truncation_flagged = false;
    for (const std::string& w : warnings) {
        if (w.find("hard truncation") != std::string::npos) truncation_flagged = true;
    }
    CHECK(truncation_flagged);

    // A budget nothing can satisfy is an error, not a silent drop.
    std::vector<extraction::InfoCombination> stubborn = {combo("Q1", longtext, "10.1/a"),
                                                         combo("Q2", longtext, "10.1/b")};
    auto hopeless = compress(gw, stubborn, 2, default_token_estimate, &warnings);
    REQUIRE_FALSE(hopeless.ok());
    CHECK(hopeless.error().code == "budget_too_small");
}

TEST_CASE("assembly renumbers citations against a shared reference list") {
    std::vector<outline::Topic> topics = {
        {1, "alloy effects", "", outline::TopicSource::drafted},
        {2, "supports", "", outline::TopicSource::drafted},
    };
    std::map<int, ParagraphDraft> chosen;
    chosen[1] = handmade_draft(
        1, "Tin helps selectivity a great deal in practice [10.1/a]. Shared evidence appears "
           "in both of the sections here [10.1/shared].",
        {"10.1/a", "10.1/shared"});
    chosen[2] = handmade_draft(
        2, "Alumina remains the dominant support in this space [10.1/b]. The shared source "
           "returns with the same number again [10.1/shared].",
        {"10.1/b", "10.1/shared"});

    std::map<std::string, corpus::Document> docs;
    for (const char* doi : {"10.1/a", "10.1/b", "10.1/shared"}) {
        corpus::Document d;
        d.doi = doi;
        d.title = std::string("Title for ") + doi;
        d.journal = "J. Cat.";
        d.year = 2019;
        docs[doi] = d;
    }

    auto review = assemble(topics, chosen, docs);
    REQUIRE(review.ok());
    const ReviewDocument& doc = review.value();
    REQUIRE(doc.references.size() == 3);
    CHECK(doc.references == std::vector<std::string>{"10.1/a", "10.1/shared", "10.1/b"});
    REQUIRE(doc.sections.size() == 2);
    CHECK(doc.sections[0].text.find("[1]") != std::string::npos);
    CHECK(doc.sections[0].text.find("[2]") != std::string::npos);
    CHECK(doc.sections[1].text.find("[3]") != std::string::npos);
    CHECK(doc.sections[1].text.find("[2]") != std::string::npos);
    CHECK(doc.sections[0].text.find("10.1/") == std::string::npos);
    CHECK(doc.markdown.find("## 1. alloy effects") != std::string::npos);
    CHECK(doc.markdown.find("## References") != std::string::npos);
    CHECK(doc.markdown.find("1. 10.1/a - Title for 10.1/a. J. Cat. (2019)") !=
          std::string::npos);
    CHECK(doc.failed_topics.empty());

    // Sentence traces carry the original DOIs.
    bool shared_traced = false;
    for (const SentenceTrace& t : doc.traces) {
        for (const std::string& d : t.dois) {
            if (d == "10.1/shared") shared_traced = true;
        }
    }
    CHECK(shared_traced);
}

TEST_CASE("assembly handles multi-citation brackets and leaves prose brackets alone") {
    std::vector<outline::Topic> topics = {{1, "combined", "", outline::TopicSource::drafted}};
    std::map<int, ParagraphDraft> chosen;
    chosen[1] = handmade_draft(
        1, "Two sources agree on the effect measured across conditions [10.1/a, 10.1/b]. "
           "Details appear elsewhere [see supplementary material] in the original "
           "reports [10.1/a].",
        {"10.1/a", "10.1/b"});
    std::map<std::string, corpus::Document> docs;
    for (const char* doi : {"10.1/a", "10.1/b"}) {
        corpus::Document d;
        d.doi = doi;
        docs[doi] = d;
    }
    auto review = assemble(topics, chosen, docs);
    REQUIRE(review.ok());
    CHECK(review.value().sections[0].text.find("[1,2]") != std::string::npos);
    CHECK(review.value().sections[0].text.find("[see supplementary material]") !=
          std::string::npos);
}

TEST_CASE("assembly reports failed topics loudly and keeps going") {
    std::vector<outline::Topic> topics = {
        {1, "works", "", outline::TopicSource::drafted},
        {2, "broken", "", outline::TopicSource::drafted},
    };
    std::map<int, ParagraphDraft> chosen;
    chosen[1] = handmade_draft(1, "A single good section with its citation [10.1/a].",
                               {"10.1/a"});
    std::map<std::string, corpus::Document> docs;
    corpus::Document d;
    d.doi = "10.1/a";
    docs["10.1/a"] = d;

    auto review = assemble(topics, chosen, docs);
    REQUIRE(review.ok());
    CHECK(review.value().references.size() == 1);
    CHECK(review.value().failed_topics == std::vector<int>{2});
    CHECK(review.value().markdown.find("No paragraph passed") != std::string::npos);

    // Out-of-corpus citation at assembly time is an integrity bug.
    chosen[2] = handmade_draft(2, "This cites something alien entirely [10.5555/alien].",
                               {"10.5555/alien"});
    auto bad = assemble(topics, chosen, docs);
    REQUIRE_FALSE(bad.ok());
    CHECK(bad.error().code == "integrity");
    CHECK(bad.error().message.find("10.5555/alien") != std::string::npos);

    CHECK(assemble(topics, {}, docs).error().code == "no_paragraphs");
}

TEST_CASE("drafts and reviews persist to the run directory") {
    static int counter = 0;
    std::string dir = "/tmp/revgen_comp_" + std::to_string(counter++) + "_" +
                      std::to_string(::getpid());

    TopicComposition topic;
    topic.topic_id = 3;
    topic.chosen = 1;
    for (int g = 1; g <= 2; ++g) {
        ParagraphDraft d = handmade_draft(3, "text [10.1/a].", {"10.1/a"});
        d.generation = g;
        d.score = 4 + g;
        d.raw = "<paragraph>raw</paragraph>";
        topic.drafts.push_back(d);
    }
    REQUIRE(save_drafts(topic, dir).ok());
    auto loaded = load_drafts(3, dir);
    REQUIRE(loaded.ok());
    CHECK(loaded.value().chosen == 1);
    REQUIRE(loaded.value().drafts.size() == 2);
    CHECK(loaded.value().drafts[1].score == 6);
    CHECK(loaded.value().drafts[1].raw == "<paragraph>raw</paragraph>");

    std::vector<outline::Topic> topics = {{3, "topic three", "", outline::TopicSource::drafted}};
    std::map<int, ParagraphDraft> chosen;
    chosen[3] = topic.drafts[1];
    std::map<std::string, corpus::Document> docs;
    corpus::Document doc;
    doc.doi = "10.1/a";
    docs["10.1/a"] = doc;
    auto review = assemble(topics, chosen, docs);
    REQUIRE(review.ok());
    REQUIRE(save_review(review.value(), dir).ok());
    auto md = read_file(dir + "/review.md");
    REQUIRE(md.ok());
    CHECK(md.value().find("topic three") != std::string::npos);
    auto trace = read_file(dir + "/review_trace.json");
    REQUIRE(trace.ok());
    json parsed = json::parse(trace.value(), nullptr, false);
    REQUIRE_FALSE(parsed.is_discarded());
    CHECK(parsed["references"].size() == 1);
    CHECK(parsed["sentences"].size() == 1);
}

TEST_CASE("paragraph drafts round-trip through JSON") {
    ParagraphDraft d = handmade_draft(7, "body [10.1/a].", {"10.1/a"});
    d.generation = 4;
    d.score = 9;
    d.offending = {"10.9/x"};
    d.uncited = {"Some sentence"};
    d.raw = "<paragraph>...</paragraph>";
    auto back = draft_from_json(draft_to_json(d));
    REQUIRE(back.ok());
    CHECK(back.value().topic_id == 7);
    CHECK(back.value().generation == 4);
    CHECK(back.value().score == 9);
    CHECK(back.value().references == d.references);
    CHECK(back.value().offending == d.offending);
    CHECK(back.value().uncited == d.uncited);
    CHECK(back.value().raw == d.raw);
    CHECK_FALSE(draft_from_json("{}").ok());
}
