#include "revgen/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <functional>
#include <set>

#include "json.hpp"
#include "revgen/doi.hpp"
#include "revgen/mining.hpp"
#include "revgen/outline.hpp"
#include "revgen/schemas.hpp"
#include "revgen/workpool.hpp"

namespace revgen::pipeline {

using nlohmann::json;

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {"search",  "screen", "outline", "extract",
                                                   "compose", "mine",   "evaluate"};
    return order;
}

Result<std::vector<std::string>> resolve_stages(const std::vector<std::string>& requested) {
    using R = Result<std::vector<std::string>>;
    if (requested.empty()) return R(stage_order());
    std::set<std::string> wanted;
    for (const std::string& name : requested) {
        std::string s = trim(to_lower(name));
        if (s.empty()) continue;
        if (std::find(stage_order().begin(), stage_order().end(), s) == stage_order().end()) {
            return R::failure("unknown_stage", "unknown stage: " + s);
        }
        wanted.insert(s);
    }
    std::vector<std::string> out;
    for (const std::string& s : stage_order()) {
        if (wanted.count(s)) out.push_back(s);
    }
    if (out.empty()) return R::failure("unknown_stage", "no stages requested");
    return R(std::move(out));
}

namespace {

std::string pad6(long v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06ld", v);
    return buf;
}

// "Q12" -> 12; non-numeric tails sort after everything numbered.
long qid_ordinal(const std::string& qid) {
    if (qid.size() < 2 || (qid[0] != 'Q' && qid[0] != 'q')) return 999999;
    long n = 0;
    for (std::size_t i = 1; i < qid.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(qid[i]))) return 999999;
        n = n * 10 + (qid[i] - '0');
    }
    return n;
}

bool extraction_target(const corpus::Document& d) {
    return d.screen_status == corpus::ScreenStatus::llm_pass && d.citable() && !d.is_review &&
           !d.body.empty();
}

bool evaluation_review(const corpus::Document& d) {
    return d.screen_status == corpus::ScreenStatus::llm_pass && d.is_review && !d.body.empty();
}

VoidResult first_failure(const std::vector<VoidResult>& results) {
    for (const VoidResult& r : results) {
        if (!r.ok()) return r;
    }
    return ok_void();
}

}  // namespace

Result<Pipeline> Pipeline::open(const config::RunConfig& cfg) {
    using R = Result<Pipeline>;
    Pipeline p;
    p.cfg_ = cfg;
    p.run_dir_ = cfg.run_dir;
    std::error_code ec;
    std::filesystem::create_directories(p.run_dir_, ec);
    if (ec) {
        return R::failure("io_error",
                          "cannot create run dir " + p.run_dir_.string() + ": " + ec.message());
    }

    std::unique_ptr<gateway::LlmClient> client;
    if (cfg.provider == "mock") {
        if (cfg.mock_dir.empty()) {
            client = gateway::MockClient::from_json("[]");
        } else {
            auto mock = gateway::MockClient::load(cfg.mock_dir);
            if (!mock.ok()) return mock.forward<Pipeline>();
            client = std::move(mock).take();
        }
    } else if (cfg.provider == "http") {
        if (cfg.base_url.empty()) {
            return R::failure("bad_config", "http provider needs base_url");
        }
        client = std::make_unique<gateway::HttpClient>(cfg.base_url, cfg.api_key, cfg.model);
    } else {
        return R::failure("bad_config", "unknown provider: " + cfg.provider);
    }
    p.gw_ = std::make_unique<gateway::Gateway>(std::move(client), cfg);
    p.gw_->set_log_path(p.run_dir_ / "llm_log.jsonl");

    auto led = ledger::RunLedger::open(p.run_dir_);
    if (!led.ok()) return led.forward<Pipeline>();
    p.ledger_ = std::make_unique<ledger::RunLedger>(std::move(led).take());
    return R(std::move(p));
}

Result<std::vector<corpus::Document>> Pipeline::load_corpus() const {
    return corpus::CorpusStore(run_dir_ / "corpus").load();
}

VoidResult Pipeline::check_dependencies(const std::string& stage) {
    auto corpus_ready = [&]() -> VoidResult {
        auto docs = load_corpus();
        if (!docs.ok()) {
            return VoidResult::failure("missing_dependency",
                                       stage + " needs the search stage first");
        }
        for (const corpus::Document& d : docs.value()) {
            if (d.screen_status != corpus::ScreenStatus::unscreened) return ok_void();
        }
        return VoidResult::failure("missing_dependency",
                                   stage + " needs the screen stage first");
    };

    if (stage == "search") return ok_void();
    if (stage == "screen") {
        if (!load_corpus().ok()) {
            return VoidResult::failure("missing_dependency",
                                       "screen needs the search stage first");
        }
        return ok_void();
    }
    if (stage == "outline" || stage == "mine" || stage == "evaluate") return corpus_ready();
    if (stage == "extract") {
        auto ready = corpus_ready();
        if (!ready.ok()) return ready;
        if (!std::filesystem::exists(run_dir_ / "outline.txt")) {
            return VoidResult::failure("missing_dependency",
                                       "extract needs the outline stage first");
        }
        return ok_void();
    }
    if (stage == "compose") {
        if (!std::filesystem::exists(run_dir_ / "extraction" / "combinations.jsonl")) {
            return VoidResult::failure("missing_dependency",
                                       "compose needs the extract stage first");
        }
        return ok_void();
    }
    return VoidResult::failure("unknown_stage", "unknown stage: " + stage);
}

VoidResult Pipeline::run(const std::vector<std::string>& stages) {
    auto resolved = resolve_stages(stages);
    if (!resolved.ok()) return resolved.forward<std::monostate>();
    for (const std::string& stage : resolved.value()) {
        if (ledger_->stage_done(stage)) continue;
        auto deps = check_dependencies(stage);
        if (!deps.ok()) return deps;
        auto ran = run_stage(stage);
        if (!ran.ok()) return ran;
    }
    return ok_void();
}

VoidResult Pipeline::run_stage(const std::string& stage) {
    if (ledger_->stage_done(stage)) return ok_void();
    if (stage == "search") return stage_search();
    if (stage == "screen") return stage_screen();
    if (stage == "outline") return stage_outline();
    if (stage == "extract") return stage_extract();
    if (stage == "compose") return stage_compose();
    if (stage == "mine") return stage_mine();
    if (stage == "evaluate") return stage_evaluate();
    return VoidResult::failure("unknown_stage", "unknown stage: " + stage);
}

VoidResult Pipeline::stage_search() {
    auto begin = ledger_->record("search", "__stage__", ledger::CellState::running);
    if (!begin.ok()) return begin;

    std::unique_ptr<corpus::SearchProvider> provider;
    if (cfg_.provider == "mock") {
        if (cfg_.fixture_dir.empty()) {
            return VoidResult::failure("bad_config", "mock search needs fixture_dir");
        }
        auto fx = corpus::FixtureSearchProvider::load(cfg_.fixture_dir);
        if (!fx.ok()) return fx.forward<std::monostate>();
        provider = std::move(fx).take();
    } else {
        provider = std::make_unique<corpus::HttpSearchProvider>(cfg_.base_url, cfg_.api_key);
    }

    corpus::SearchQuery query;
    query.text = cfg_.field_description.empty() ? join(cfg_.include_keywords, " ")
                                                : cfg_.field_description;
    query.min_year = cfg_.min_year;
    query.max_year = cfg_.max_year;
    if (!cfg_.journal_catalog.empty()) {
        auto catalog = corpus::JournalCatalog::load(cfg_.journal_catalog);
        if (!catalog.ok()) return catalog.forward<std::monostate>();
        for (const corpus::JournalEntry& e : catalog.value().tier(cfg_.quartile)) {
            query.journals.push_back(e.journal);
        }
    }

    auto found = corpus::search_all(*provider, query);
    if (!found.ok()) return found.forward<std::monostate>();

    corpus::FunnelStats funnel;
    funnel.retrieved = static_cast<long>(found.value().size());
    std::vector<corpus::Document> docs = corpus::dedupe(std::move(found).take());
    funnel.deduplicated = static_cast<long>(docs.size());

    for (corpus::Document& doc : docs) {
        corpus::mark_review_type(doc, cfg_.review_markers);
        if (doc.body.empty() && !cfg_.fixture_dir.empty()) {
            auto text_path = cfg_.fixture_dir / "fulltext" / (doi_slug(doc.doi) + ".txt");
            if (std::filesystem::exists(text_path)) {
                auto ingested = corpus::ingest_fulltext_file(doc, text_path);
                if (!ingested.ok()) return ingested;
            }
        }
    }

    corpus::CorpusStore store(run_dir_ / "corpus");
    auto saved = store.save(docs);
    if (!saved.ok()) return saved;
    saved = store.save_funnel(funnel);
    if (!saved.ok()) return saved;
    return ledger_->mark_stage_done("search");
}

VoidResult Pipeline::stage_screen() {
    auto begin = ledger_->record("screen", "__stage__", ledger::CellState::running);
    if (!begin.ok()) return begin;

    auto loaded = load_corpus();
    if (!loaded.ok()) return loaded.forward<std::monostate>();
    std::vector<corpus::Document> docs = std::move(loaded).take();

    corpus::FilterRule rule{cfg_.include_keywords, cfg_.exclude_keywords, cfg_.min_year,
                            cfg_.max_year};
    auto rule_ok = corpus::validate_rule(rule);
    if (!rule_ok.ok()) return rule_ok;

    auto payloads = ledger_->load_cell_payloads("screen");
    if (!payloads.ok()) return payloads.forward<std::monostate>();
    const auto& done = payloads.value();

    std::vector<std::size_t> order(docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<VoidResult> results(docs.size(), ok_void());

    parallel_for_each(cfg_.workers, order, [&](std::size_t i) {
        corpus::Document& doc = docs[i];
        std::string cell = doc.doi;
        if (ledger_->is_done("screen", cell)) {
            auto it = done.find(cell);
            if (it != done.end()) {
                auto restored = corpus::document_from_json(it->second);
                if (restored.ok()) {
                    doc = std::move(restored).take();
                    return;
                }
            }
            // fall through and rescreen when the payload is unusable
        }
        if (doc.screen_status == corpus::ScreenStatus::unscreened) {
            corpus::ScreenDecision decision = corpus::keyword_screen(doc, rule);
            if (decision.pass) {
                gateway::CompletionRequest req;
                req.template_id = "screen";
                req.vars = {{"field", cfg_.field_description},
                            {"title", doc.title},
                            {"abstract", doc.abstract}};
                req.key = {"screen", doc.doi, ""};
                auto resp = gw_->complete_structured(req, "comparison-verdict");
                if (!resp.ok()) {
                    const std::string& code = resp.error().code;
                    if (code != "retry_exhausted" && code != "format_exhausted") {
                        results[i] = resp.forward<std::monostate>();
                        auto rec = ledger_->record("screen", cell,
                                                   ledger::CellState::failed_retryable,
                                                   resp.error().message);
                        if (!rec.ok()) results[i] = rec;
                        return;
                    }
                    // An unusable judge excludes the document.
                    results[i] = corpus::advance_screen(doc, corpus::ScreenStatus::llm_reject);
                } else {
                    const auto& verdict =
                        std::get<schemas::VerdictPayload>(resp.value().structured.payload);
                    bool yes = verdict.choice.has_value() &&
                               *verdict.choice == schemas::Choice::Yes;
                    results[i] = corpus::advance_screen(
                        doc, yes ? corpus::ScreenStatus::llm_pass
                                 : corpus::ScreenStatus::llm_reject);
                }
                if (!results[i].ok()) return;
            }
        }
        auto stored = ledger_->append_cell_payload("screen", cell, corpus::document_to_json(doc));
        if (!stored.ok()) {
            results[i] = stored;
            return;
        }
        results[i] = ledger_->record("screen", cell, ledger::CellState::done);
    });
    auto failed = first_failure(results);
    if (!failed.ok()) return failed;

    corpus::CorpusStore store(run_dir_ / "corpus");
    corpus::FunnelStats funnel;
    auto prior = store.load_funnel();
    if (prior.ok()) {
        funnel = prior.value();
    } else {
        funnel.retrieved = static_cast<long>(docs.size());
        funnel.deduplicated = funnel.retrieved;
    }
    funnel.keyword_passed = 0;
    funnel.llm_passed = 0;
    for (const corpus::Document& d : docs) {
        switch (d.screen_status) {
            case corpus::ScreenStatus::keyword_pass:
            case corpus::ScreenStatus::llm_pass:
            case corpus::ScreenStatus::llm_reject:
                ++funnel.keyword_passed;
                break;
            default: break;
        }
        if (d.screen_status == corpus::ScreenStatus::llm_pass) ++funnel.llm_passed;
    }

    auto saved = store.save(docs);
    if (!saved.ok()) return saved;
    saved = store.save_funnel(funnel);
    if (!saved.ok()) return saved;
    return ledger_->mark_stage_done("screen");
}

VoidResult Pipeline::stage_outline() {
    auto begin = ledger_->record("outline", "__stage__", ledger::CellState::running);
    if (!begin.ok()) return begin;

    auto loaded = load_corpus();
    if (!loaded.ok()) return loaded.forward<std::monostate>();

    std::vector<corpus::Document> reviews;
    for (const corpus::Document& d : loaded.value()) {
        if (evaluation_review(d)) reviews.push_back(d);
    }

    Result<std::vector<outline::Topic>> topics =
        reviews.empty() ? outline::draft_outline(*gw_, cfg_.field_description)
                        : outline::extract_outline(*gw_, reviews);
    if (!topics.ok()) return topics.forward<std::monostate>();

    auto questions = outline::derive_questions(*gw_, topics.value(), cfg_.questions_per_topic);
    if (!questions.ok()) return questions.forward<std::monostate>();

    outline::Outline result{std::move(topics).take(), std::move(questions).take()};
    auto covered = outline::check_coverage(result);
    if (!covered.ok()) return covered;

    auto saved = outline::save_outline(run_dir_ / "outline.txt", result);
    if (!saved.ok()) return saved;
    return ledger_->mark_stage_done("outline");
}

VoidResult Pipeline::stage_extract() {
    auto begin = ledger_->record("extract", "__stage__", ledger::CellState::running);
    if (!begin.ok()) return begin;

    auto outline_loaded = outline::load_outline(run_dir_ / "outline.txt");
    if (!outline_loaded.ok()) return outline_loaded.forward<std::monostate>();
    const outline::Outline& plan = outline_loaded.value();

    auto groups = extraction::group_questions(plan.questions, cfg_.group_size);
    if (!groups.ok()) return groups.forward<std::monostate>();

    auto loaded = load_corpus();
    if (!loaded.ok()) return loaded.forward<std::monostate>();
    std::vector<corpus::Document> targets;
    for (const corpus::Document& d : loaded.value()) {
        if (extraction_target(d)) targets.push_back(d);
    }

    auto payloads = ledger_->load_cell_payloads("extract");
    if (!payloads.ok()) return payloads.forward<std::monostate>();
    std::map<std::string, std::string> done = std::move(payloads).take();

    // Phase A: every (document, question group) cell asks R times per chunk.
    struct AskCell {
        const corpus::Document* doc;
        const extraction::QuestionGroup* group;
        std::string key;
    };
    std::vector<AskCell> cells;
    for (const corpus::Document& doc : targets) {
        for (const extraction::QuestionGroup& g : groups.value()) {
            cells.push_back(AskCell{&doc, &g, doc.doi + "|g" + std::to_string(g.id)});
        }
    }

    std::vector<std::string> cell_payload(cells.size());
    std::vector<VoidResult> results(cells.size(), ok_void());
    std::vector<std::size_t> order(cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    parallel_for_each(cfg_.workers, order, [&](std::size_t i) {
        const AskCell& cell = cells[i];
        std::string cell_key = "ask:" + cell.key;
        if (ledger_->is_done("extract", cell_key)) {
            auto it = done.find(cell_key);
            if (it != done.end()) {
                cell_payload[i] = it->second;
                return;
            }
        }
        auto chunks = extraction::chunk_document(*cell.doc, cfg_.context_budget_tokens);
        if (!chunks.ok()) {
            results[i] = chunks.forward<std::monostate>();
            return;
        }
        json payload;
        payload["answers"] = json::array();
        int missing = 0;
        for (const extraction::DocumentChunk& chunk : chunks.value()) {
            auto asked = extraction::ask_group(*gw_, chunk, *cell.group, cfg_.repetitions);
            if (!asked.ok()) {
                results[i] = asked.forward<std::monostate>();
                auto rec = ledger_->record("extract", cell_key,
                                           ledger::CellState::failed_retryable,
                                           asked.error().message);
                if (!rec.ok()) results[i] = rec;
                return;
            }
            missing += static_cast<int>(asked.value().missing_repetitions.size());
            for (const extraction::RawAnswer& a : asked.value().answers) {
                payload["answers"].push_back(json::parse(extraction::raw_answer_to_json(a)));
            }
        }
        cell_payload[i] = payload.dump();
        auto stored = ledger_->append_cell_payload("extract", cell_key, cell_payload[i]);
        if (!stored.ok()) {
            results[i] = stored;
            return;
        }
        results[i] = ledger_->record("extract", cell_key, ledger::CellState::done,
                                     missing > 0 ? std::to_string(missing) + " repetitions missing"
                                                 : "");
    });
    auto failed = first_failure(results);
    if (!failed.ok()) return failed;

    // (doi, qid) -> answers, rebuilt identically on resume from the payloads.
    std::map<std::pair<std::string, std::string>, std::vector<extraction::RawAnswer>> by_cell;
    for (const std::string& text : cell_payload) {
        json payload = json::parse(text, nullptr, false);
        if (payload.is_discarded()) {
            return VoidResult::failure("integrity", "unreadable extraction payload");
        }
        for (const auto& ja : payload["answers"]) {
            auto a = extraction::raw_answer_from_json(ja.dump());
            if (!a.ok()) return a.forward<std::monostate>();
            by_cell[{a.value().doi, a.value().qid}].push_back(std::move(a).take());
        }
    }

    std::map<std::string, std::string> question_text;
    for (const outline::Question& q : plan.questions.questions) question_text[q.id] = q.text;

    // Phase B: relevance-filter, aggregate, and consistency-check per
    // (document, question) cell.
    struct AggCell {
        std::string doi, qid;
        const std::vector<extraction::RawAnswer>* answers;
    };
    std::vector<AggCell> agg_cells;
    for (const auto& [key, answers] : by_cell) {
        agg_cells.push_back(AggCell{key.first, key.second, &answers});
    }
    std::vector<std::string> agg_payload(agg_cells.size());
    std::vector<VoidResult> agg_results(agg_cells.size(), ok_void());
    std::vector<std::size_t> agg_order(agg_cells.size());
    for (std::size_t i = 0; i < agg_order.size(); ++i) agg_order[i] = i;

    parallel_for_each(cfg_.workers, agg_order, [&](std::size_t i) {
        const AggCell& cell = agg_cells[i];
        std::string cell_key = "agg:" + cell.doi + "|" + cell.qid;
        if (ledger_->is_done("extract", cell_key)) {
            auto it = done.find(cell_key);
            if (it != done.end()) {
                agg_payload[i] = it->second;
                return;
            }
        }
        auto qt = question_text.find(cell.qid);
        if (qt == question_text.end()) {
            agg_results[i] = VoidResult::failure(
                "integrity", "answers reference unknown question " + cell.qid);
            return;
        }
        std::vector<extraction::RawAnswer> survivors;
        std::vector<extraction::RawAnswer> sorted = *cell.answers;
        std::sort(sorted.begin(), sorted.end(),
                  [](const extraction::RawAnswer& a, const extraction::RawAnswer& b) {
                      if (a.repetition != b.repetition) return a.repetition < b.repetition;
                      return a.chunk_index < b.chunk_index;
                  });
        for (const extraction::RawAnswer& a : sorted) {
            if (extraction::relevance_filter(*gw_, a, qt->second)) survivors.push_back(a);
        }
        auto combined =
            extraction::aggregate_answers(*gw_, cell.doi, cell.qid, qt->second, survivors);
        if (!combined.ok()) {
            agg_results[i] = combined.forward<std::monostate>();
            auto rec = ledger_->record("extract", cell_key,
                                       ledger::CellState::failed_retryable,
                                       combined.error().message);
            if (!rec.ok()) agg_results[i] = rec;
            return;
        }

        json payload;
        payload["checks"] = json::array();
        if (combined.value().has_value()) {
            const extraction::InfoCombination& combo = *combined.value();
            payload["combination"] = json::parse(extraction::combination_to_json(combo));
            for (const extraction::RawAnswer& a : survivors) {
                auto pct = extraction::consistency_check(*gw_, a.answer, combo.text);
                if (!pct.ok()) {
                    const std::string& code = pct.error().code;
                    if (code == "retry_exhausted" || code == "format_exhausted") {
                        continue;  // missing verdict, not a stage failure
                    }
                    agg_results[i] = pct.forward<std::monostate>();
                    return;
                }
                payload["checks"].push_back({{"repetition", a.repetition},
                                             {"chunk", a.chunk_index},
                                             {"percent", pct.value()}});
            }
        } else {
            payload["combination"] = nullptr;
        }
        agg_payload[i] = payload.dump();
        auto stored = ledger_->append_cell_payload("extract", cell_key, agg_payload[i]);
        if (!stored.ok()) {
            agg_results[i] = stored;
            return;
        }
        agg_results[i] = ledger_->record("extract", cell_key, ledger::CellState::done);
    });
    failed = first_failure(agg_results);
    if (!failed.ok()) return failed;

    // Assemble sorted artifacts so worker scheduling cannot reorder them.
    std::vector<std::pair<std::string, std::string>> answer_lines;
    for (const auto& [key, answers] : by_cell) {
        for (const extraction::RawAnswer& a : answers) {
            answer_lines.push_back({a.doi + "|" + pad6(qid_ordinal(a.qid)) + "|" +
                                        pad6(a.repetition) + "|" + pad6(a.chunk_index),
                                    extraction::raw_answer_to_json(a)});
        }
    }
    std::vector<std::pair<std::string, std::string>> combo_lines;
    std::vector<std::pair<std::string, std::string>> check_lines;
    std::vector<extraction::InfoCombination> combinations;
    for (std::size_t i = 0; i < agg_cells.size(); ++i) {
        json payload = json::parse(agg_payload[i], nullptr, false);
        if (payload.is_discarded()) {
            return VoidResult::failure("integrity", "unreadable aggregation payload");
        }
        std::string sort_key = agg_cells[i].doi + "|" + pad6(qid_ordinal(agg_cells[i].qid));
        if (!payload["combination"].is_null()) {
            auto combo = extraction::combination_from_json(payload["combination"].dump());
            if (!combo.ok()) return combo.forward<std::monostate>();
            combo_lines.push_back({sort_key, extraction::combination_to_json(combo.value())});
            combinations.push_back(std::move(combo).take());
        }
        for (const auto& check : payload["checks"]) {
            json line = {{"doi", agg_cells[i].doi},
                         {"qid", agg_cells[i].qid},
                         {"repetition", check["repetition"]},
                         {"chunk", check["chunk"]},
                         {"percent", check["percent"]}};
            check_lines.push_back(
                {sort_key + "|" + pad6(check["repetition"].get<int>()), line.dump()});
        }
    }

    std::set<std::string> corpus_dois;
    for (const corpus::Document& d : targets) corpus_dois.insert(d.doi);
    auto traceable = extraction::check_traceability(combinations, corpus_dois);
    if (!traceable.ok()) return traceable;

    std::filesystem::path dir = run_dir_ / "extraction";
    auto wrote = ledger::write_sorted_jsonl(dir / "raw_answers.jsonl", std::move(answer_lines));
    if (!wrote.ok()) return wrote;
    wrote = ledger::write_sorted_jsonl(dir / "combinations.jsonl", std::move(combo_lines));
    if (!wrote.ok()) return wrote;
    wrote = ledger::write_sorted_jsonl(dir / "consistency.jsonl", std::move(check_lines));
    if (!wrote.ok()) return wrote;
    return ledger_->mark_stage_done("extract");
}

VoidResult Pipeline::stage_compose() {
    auto begin = ledger_->record("compose", "__stage__", ledger::CellState::running);
    if (!begin.ok()) return begin;

    auto outline_loaded = outline::load_outline(run_dir_ / "outline.txt");
    if (!outline_loaded.ok()) return outline_loaded.forward<std::monostate>();
    const outline::Outline& plan = outline_loaded.value();

    auto combo_lines = read_lines(run_dir_ / "extraction" / "combinations.jsonl");
    if (!combo_lines.ok()) return combo_lines.forward<std::monostate>();
    std::vector<extraction::InfoCombination> combinations;
    for (const std::string& line : combo_lines.value()) {
        if (trim(line).empty()) continue;
        auto combo = extraction::combination_from_json(line);
        if (!combo.ok()) return combo.forward<std::monostate>();
        combinations.push_back(std::move(combo).take());
    }

    auto loaded = load_corpus();
    if (!loaded.ok()) return loaded.forward<std::monostate>();
    std::set<std::string> corpus_dois;
    std::map<std::string, corpus::Document> all_docs;
    for (const corpus::Document& d : loaded.value()) {
        if (extraction_target(d)) corpus_dois.insert(d.doi);
        if (d.citable()) all_docs[d.doi] = d;
    }

    std::map<std::string, int> qid_topic;
    for (const outline::Question& q : plan.questions.questions) qid_topic[q.id] = q.topic_id;
    std::map<int, std::vector<extraction::InfoCombination>> evidence;
    for (const extraction::InfoCombination& c : combinations) {
        auto it = qid_topic.find(c.qid);
        if (it == qid_topic.end()) {
            return VoidResult::failure("integrity",
                                       "combination references unknown question " + c.qid);
        }
        evidence[it->second].push_back(c);
    }
    for (auto& [topic_id, list] : evidence) {
        std::sort(list.begin(), list.end(),
                  [](const extraction::InfoCombination& a, const extraction::InfoCombination& b) {
                      long qa = qid_ordinal(a.qid), qb = qid_ordinal(b.qid);
                      if (qa != qb) return qa < qb;
                      return a.dois < b.dois;
                  });
    }

    composition::BestOfNParams params;
    params.target_passes = cfg_.target_passes;
    params.ceiling_factor = cfg_.generation_ceiling_factor;
    params.evidence_budget = cfg_.context_budget_tokens;

    std::vector<composition::TopicComposition> comps(plan.topics.size());
    std::vector<VoidResult> results(plan.topics.size(), ok_void());
    std::vector<std::size_t> order(plan.topics.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    parallel_for_each(cfg_.workers, order, [&](std::size_t i) {
        const outline::Topic& topic = plan.topics[i];
        std::string cell = "topic:" + std::to_string(topic.id);
        if (ledger_->is_done("compose", cell)) {
            auto prior = composition::load_drafts(topic.id, run_dir_.string());
            if (prior.ok()) {
                comps[i] = std::move(prior).take();
                return;
            }
        }
        auto it = evidence.find(topic.id);
        std::vector<extraction::InfoCombination> topic_evidence =
            it == evidence.end() ? std::vector<extraction::InfoCombination>{} : it->second;
        std::vector<std::string> warnings;
        auto composed = composition::best_of_n(*gw_, topic, std::move(topic_evidence),
                                               corpus_dois, params, &warnings);
        if (!composed.ok()) {
            if (composed.error().code == "no_evidence") {
                // Nothing extracted for this topic: it fails, the run proceeds.
                comps[i] = composition::TopicComposition{topic.id, {}, -1};
            } else {
                results[i] = composed.forward<std::monostate>();
                auto rec = ledger_->record("compose", cell,
                                           ledger::CellState::failed_retryable,
                                           composed.error().message);
                if (!rec.ok()) results[i] = rec;
                return;
            }
        } else {
            comps[i] = std::move(composed).take();
        }
        for (const std::string& w : warnings) {
            auto noted = ledger_->record("compose", cell, ledger::CellState::running, w);
            if (!noted.ok()) {
                results[i] = noted;
                return;
            }
        }
        auto saved = composition::save_drafts(comps[i], run_dir_.string());
        if (!saved.ok()) {
            results[i] = saved;
            return;
        }
        auto stored = ledger_->append_cell_payload("compose", cell, "{}");
        if (!stored.ok()) {
            results[i] = stored;
            return;
        }
        results[i] = ledger_->record("compose", cell, ledger::CellState::done);
    });
    auto failed = first_failure(results);
    if (!failed.ok()) return failed;

    std::map<int, composition::ParagraphDraft> chosen;
    for (const composition::TopicComposition& comp : comps) {
        if (!comp.failed()) chosen[comp.topic_id] = comp.drafts[comp.chosen];
    }
    auto review = composition::assemble(plan.topics, chosen, all_docs);
    if (!review.ok()) return review.forward<std::monostate>();
    auto saved = composition::save_review(review.value(), run_dir_.string());
    if (!saved.ok()) return saved;
    return ledger_->mark_stage_done("compose");
}

VoidResult Pipeline::stage_mine() {
    auto begin = ledger_->record("mine", "__stage__", ledger::CellState::running);
    if (!begin.ok()) return begin;

    mining::MiningSchema schema;
    if (!cfg_.mining_schema_file.empty()) {
        auto loaded_schema = mining::load_schema(cfg_.mining_schema_file.string());
        if (!loaded_schema.ok()) return loaded_schema.forward<std::monostate>();
        schema = std::move(loaded_schema).take();
    } else {
        schema = mining::default_schema();
    }

    auto loaded = load_corpus();
    if (!loaded.ok()) return loaded.forward<std::monostate>();
    std::vector<corpus::Document> targets;
    for (const corpus::Document& d : loaded.value()) {
        if (extraction_target(d)) targets.push_back(d);
    }

    auto payloads = ledger_->load_cell_payloads("mine");
    if (!payloads.ok()) return payloads.forward<std::monostate>();
    std::map<std::string, std::string> done = std::move(payloads).take();

    std::vector<std::string> record_json(targets.size());
    std::vector<VoidResult> results(targets.size(), ok_void());
    std::vector<std::size_t> order(targets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    parallel_for_each(cfg_.workers, order, [&](std::size_t i) {
        const corpus::Document& doc = targets[i];
        if (ledger_->is_done("mine", doc.doi)) {
            auto it = done.find(doc.doi);
            if (it != done.end()) {
                record_json[i] = it->second;
                return;
            }
        }
        auto mined = mining::extract_fields(*gw_, doc, schema, cfg_.repetitions);
        if (!mined.ok()) {
            results[i] = mined.forward<std::monostate>();
            auto rec = ledger_->record("mine", doc.doi, ledger::CellState::failed_retryable,
                                       mined.error().message);
            if (!rec.ok()) results[i] = rec;
            return;
        }
        mining::MinedRecord record = mining::aggregate_record(mined.value(), schema);
        record_json[i] = mining::record_to_json(record);
        auto stored = ledger_->append_cell_payload("mine", doc.doi, record_json[i]);
        if (!stored.ok()) {
            results[i] = stored;
            return;
        }
        results[i] = ledger_->record("mine", doc.doi, ledger::CellState::done);
    });
    auto failed = first_failure(results);
    if (!failed.ok()) return failed;

    std::vector<std::pair<std::string, std::string>> lines;
    std::vector<mining::MinedRecord> records;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (record_json[i].empty()) continue;
        auto rec = mining::record_from_json(record_json[i]);
        if (!rec.ok()) return rec.forward<std::monostate>();
        lines.push_back({targets[i].doi, record_json[i]});
        records.push_back(std::move(rec).take());
    }
    std::filesystem::path dir = run_dir_ / "mining";
    auto wrote = ledger::write_sorted_jsonl(dir / "records.jsonl", std::move(lines));
    if (!wrote.ok()) return wrote;

    for (const mining::ChartSpec& spec : mining::default_chart_specs(
             cfg_.min_selectivity, cfg_.min_conversion, cfg_.min_stability_h)) {
        auto dataset = mining::build_dataset(records, spec, schema);
        if (!dataset.ok()) {
            // Custom schemas may lack the default chart fields; skip, note.
            auto noted = ledger_->record("mine", "chart:" + spec.name,
                                         ledger::CellState::failed_terminal,
                                         dataset.error().message);
            if (!noted.ok()) return noted;
            continue;
        }
        auto exported = mining::write_dataset(dataset.value(), spec, dir.string());
        if (!exported.ok()) return exported;
    }
    return ledger_->mark_stage_done("mine");
}

VoidResult Pipeline::stage_evaluate() {
    auto begin = ledger_->record("evaluate", "__stage__", ledger::CellState::running);
    if (!begin.ok()) return begin;

    auto loaded = load_corpus();
    if (!loaded.ok()) return loaded.forward<std::monostate>();
    std::vector<corpus::Document> reviews;
    std::map<std::string, corpus::Document> citable;
    for (const corpus::Document& d : loaded.value()) {
        if (evaluation_review(d)) reviews.push_back(d);
        if (d.citable()) citable[d.doi] = d;
    }

    std::filesystem::path dir = run_dir_ / "evaluation";
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        return VoidResult::failure("io_error", "cannot create " + dir.string());
    }
    if (reviews.empty()) {
        auto noted = ledger_->record("evaluate", "__stage__", ledger::CellState::running,
                                     "no screened-in review articles; nothing to evaluate");
        if (!noted.ok()) return noted;
        auto wrote = write_file_atomic(dir / "fragments.jsonl", "");
        if (!wrote.ok()) return wrote;
        return ledger_->mark_stage_done("evaluate");
    }

    auto payloads = ledger_->load_cell_payloads("evaluate");
    if (!payloads.ok()) return payloads.forward<std::monostate>();
    std::map<std::string, std::string> done = std::move(payloads).take();

    evalframe::Rubric rubric = evalframe::default_rubric();
    composition::BestOfNParams best;
    best.target_passes = cfg_.target_passes;
    best.ceiling_factor = cfg_.generation_ceiling_factor;
    best.evidence_budget = cfg_.context_budget_tokens;

    // Fragmentation and candidate generation run serially per review: both
    // are cheap in call count, and fragment indices must stay stable.
    std::vector<evalframe::Fragment> fragments;
    std::vector<std::vector<evalframe::Candidate>> candidates;
    int fragment_index = 0;
    for (const corpus::Document& review : reviews) {
        std::vector<std::string> warnings;
        std::vector<evalframe::Fragment> segmented;
        std::string seg_cell = "seg:" + review.doi;
        if (ledger_->is_done("evaluate", seg_cell) && done.count(seg_cell)) {
            json stored = json::parse(done[seg_cell], nullptr, false);
            if (!stored.is_discarded()) {
                for (const auto& jf : stored["fragments"]) {
                    auto f = evalframe::fragment_from_json(jf.dump());
                    if (!f.ok()) return f.forward<std::monostate>();
                    segmented.push_back(std::move(f).take());
                }
            }
        }
        if (segmented.empty()) {
            auto segs = evalframe::segment_review(*gw_, review, &warnings);
            if (!segs.ok()) {
                if (segs.error().code == "no_fragments") {
                    auto noted = ledger_->record("evaluate", seg_cell,
                                                 ledger::CellState::failed_terminal,
                                                 segs.error().message);
                    if (!noted.ok()) return noted;
                    continue;
                }
                return segs.forward<std::monostate>();
            }
            segmented = std::move(segs).take();
            json stored;
            stored["fragments"] = json::array();
            for (const evalframe::Fragment& f : segmented) {
                stored["fragments"].push_back(json::parse(evalframe::fragment_to_json(f)));
            }
            auto kept = ledger_->append_cell_payload("evaluate", seg_cell, stored.dump());
            if (!kept.ok()) return kept;
            auto rec = ledger_->record("evaluate", seg_cell, ledger::CellState::done);
            if (!rec.ok()) return rec;
        }
        for (const std::string& w : warnings) {
            auto noted =
                ledger_->record("evaluate", seg_cell, ledger::CellState::running, w);
            if (!noted.ok()) return noted;
        }

        for (evalframe::Fragment& frag : segmented) {
            ++fragment_index;
            std::string cand_cell = "cand:" + frag.id;
            std::vector<evalframe::Candidate> cands;
            if (ledger_->is_done("evaluate", cand_cell) && done.count(cand_cell)) {
                json stored = json::parse(done[cand_cell], nullptr, false);
                if (!stored.is_discarded()) {
                    for (const auto& jc : stored["candidates"]) {
                        auto origin = evalframe::origin_from(jc["origin"].get<std::string>());
                        if (!origin.ok()) return origin.forward<std::monostate>();
                        cands.push_back(evalframe::Candidate{
                            jc["id"].get<std::string>(), frag.id, origin.value(),
                            jc["text"].get<std::string>()});
                    }
                }
            }
            if (cands.empty()) {
                evalframe::CandidateParams params;
                params.fragment_index = fragment_index;
                params.best = best;
                std::vector<std::string> cand_warnings;
                auto generated =
                    evalframe::generate_candidates(*gw_, frag, citable, params, &cand_warnings);
                if (!generated.ok()) {
                    if (generated.error().code == "method_failed") {
                        auto noted = ledger_->record("evaluate", cand_cell,
                                                     ledger::CellState::failed_terminal,
                                                     generated.error().message);
                        if (!noted.ok()) return noted;
                        continue;  // fragment excluded from the comparison
                    }
                    return generated.forward<std::monostate>();
                }
                cands = std::move(generated).take();
                json stored;
                stored["candidates"] = json::array();
                for (const evalframe::Candidate& c : cands) {
                    stored["candidates"].push_back({{"id", c.id},
                                                    {"origin", evalframe::origin_name(c.origin)},
                                                    {"text", c.text}});
                }
                auto kept = ledger_->append_cell_payload("evaluate", cand_cell, stored.dump());
                if (!kept.ok()) return kept;
                auto rec = ledger_->record("evaluate", cand_cell, ledger::CellState::done);
                if (!rec.ok()) return rec;
            }
            fragments.push_back(frag);
            candidates.push_back(std::move(cands));
        }
    }
    if (fragments.empty()) {
        auto wrote = write_file_atomic(dir / "fragments.jsonl", "");
        if (!wrote.ok()) return wrote;
        return ledger_->mark_stage_done("evaluate");
    }

    // Comparison cells: (fragment, rubric item, candidate pair), candidates
    // ordered by id so pair orientation is reproducible.
    struct CmpCell {
        const evalframe::Fragment* frag;
        const evalframe::RubricItem* item;
        const evalframe::Candidate* a;
        const evalframe::Candidate* b;
        std::string key;
    };
    std::vector<CmpCell> cmp_cells;
    for (std::size_t f = 0; f < fragments.size(); ++f) {
        std::vector<const evalframe::Candidate*> sorted;
        for (const evalframe::Candidate& c : candidates[f]) sorted.push_back(&c);
        std::sort(sorted.begin(), sorted.end(),
                  [](const evalframe::Candidate* x, const evalframe::Candidate* y) {
                      return x->id < y->id;
                  });
        for (const evalframe::RubricItem& item : rubric.items) {
            for (std::size_t i = 0; i < sorted.size(); ++i) {
                for (std::size_t j = i + 1; j < sorted.size(); ++j) {
                    cmp_cells.push_back(CmpCell{&fragments[f], &item, sorted[i], sorted[j],
                                                "cmp:" + fragments[f].id + ":" + item.id + ":" +
                                                    sorted[i]->id + "|" + sorted[j]->id});
                }
            }
        }
    }

    std::vector<std::vector<evalframe::ComparisonRecord>> cell_records(cmp_cells.size());
    std::vector<VoidResult> results(cmp_cells.size(), ok_void());
    std::vector<std::size_t> order(cmp_cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    parallel_for_each(cfg_.workers, order, [&](std::size_t i) {
        const CmpCell& cell = cmp_cells[i];
        if (ledger_->is_done("evaluate", cell.key)) {
            auto it = done.find(cell.key);
            if (it != done.end()) {
                json stored = json::parse(it->second, nullptr, false);
                if (!stored.is_discarded()) {
                    bool all_ok = true;
                    for (const auto& jr : stored["records"]) {
                        auto r = evalframe::record_from_json(jr.dump());
                        if (!r.ok()) {
                            all_ok = false;
                            break;
                        }
                        cell_records[i].push_back(std::move(r).take());
                    }
                    if (all_ok) return;
                    cell_records[i].clear();
                }
            }
        }
        auto compared =
            evalframe::pairwise_compare(*gw_, *cell.a, *cell.b, *cell.item, cfg_.repetitions);
        if (!compared.ok()) {
            results[i] = compared.forward<std::monostate>();
            auto rec = ledger_->record("evaluate", cell.key,
                                       ledger::CellState::failed_retryable,
                                       compared.error().message);
            if (!rec.ok()) results[i] = rec;
            return;
        }
        cell_records[i] = std::move(compared).take();
        json stored;
        stored["records"] = json::array();
        for (const evalframe::ComparisonRecord& r : cell_records[i]) {
            stored["records"].push_back(json::parse(evalframe::record_to_json(r)));
        }
        auto kept = ledger_->append_cell_payload("evaluate", cell.key, stored.dump());
        if (!kept.ok()) {
            results[i] = kept;
            return;
        }
        results[i] = ledger_->record("evaluate", cell.key, ledger::CellState::done);
    });
    auto failed = first_failure(results);
    if (!failed.ok()) return failed;

    std::vector<evalframe::ComparisonRecord> all_records;
    for (const auto& recs : cell_records) {
        all_records.insert(all_records.end(), recs.begin(), recs.end());
    }
    std::sort(all_records.begin(), all_records.end(),
              [](const evalframe::ComparisonRecord& x, const evalframe::ComparisonRecord& y) {
                  auto kx = std::tie(x.fragment_id, x.item_id, x.a, x.b, x.repetition);
                  auto ky = std::tie(y.fragment_id, y.item_id, y.a, y.b, y.repetition);
                  return kx < ky;
              });

    // Scores: one ranking per (fragment, item) over that item's records.
    std::map<std::string, evalframe::Origin> origin_of;
    for (const auto& cands : candidates) {
        for (const evalframe::Candidate& c : cands) origin_of[c.id] = c.origin;
    }
    std::map<std::pair<std::string, std::string>, std::vector<evalframe::ComparisonRecord>>
        by_item;
    for (const evalframe::ComparisonRecord& r : all_records) {
        by_item[{r.fragment_id, r.item_id}].push_back(r);
    }
    evalframe::ScoreTable table;
    std::vector<evalframe::ReliabilityRow> reliability;
    for (const auto& [key, recs] : by_item) {
        auto scored = evalframe::pagerank_scores(recs);
        if (!scored.ok()) continue;  // an item whose judgments all vanished
        for (const auto& [cid, score] : scored.value().scores) {
            table.rows.push_back(
                evalframe::ScoreRow{key.first, key.second, cid, origin_of[cid], score});
        }
        std::set<int> reps;
        for (const evalframe::ComparisonRecord& r : recs) reps.insert(r.repetition);
        if (reps.size() >= 2) {
            auto reliable = evalframe::repetition_reliability(recs);
            if (reliable.ok()) reliability.push_back(std::move(reliable).take());
        }
    }

    auto saved = evalframe::save_fragments(fragments, (dir / "fragments.jsonl").string());
    if (!saved.ok()) return saved;
    saved = evalframe::save_records(all_records, (dir / "records.jsonl").string());
    if (!saved.ok()) return saved;
    saved = write_file_atomic(dir / "scores.csv", evalframe::scores_to_csv(table));
    if (!saved.ok()) return saved;
    saved = write_file_atomic(dir / "reliability.csv",
                              evalframe::reliability_to_csv(reliability));
    if (!saved.ok()) return saved;

    auto report = evalframe::relative_report(table);
    if (report.ok()) {
        saved = write_file_atomic(dir / "report.json",
                                  evaluation_report_json(report.value()));
    } else {
        saved = write_file_atomic(dir / "report.json",
                                  "{\"origins\":{},\"per_item\":{},\"flags\":[\"" +
                                      report.error().code + "\"]}");
    }
    if (!saved.ok()) return saved;
    return ledger_->mark_stage_done("evaluate");
}

std::string evaluation_report_json(const evalframe::RelativeReport& report) {
    json j;
    j["origins"] = json::object();
    for (const auto& [origin, stats] : report.origins) {
        j["origins"][evalframe::origin_name(origin)] = {
            {"mean_score", stats.mean_score},     {"best_score", stats.best_score},
            {"mean_percent", stats.mean_percent}, {"best_percent", stats.best_percent},
            {"candidates", stats.candidates}};
    }
    j["per_item"] = json::object();
    for (const auto& [item, per_origin] : report.per_item) {
        for (const auto& [origin, mean] : per_origin) {
            j["per_item"][item][evalframe::origin_name(origin)] = mean;
        }
    }
    j["flags"] = report.flags;
    return j.dump(2);
}

namespace {

Result<long> count_validated_lines(const std::filesystem::path& path,
                                   const std::function<VoidResult(const std::string&)>& check) {
    using R = Result<long>;
    if (!std::filesystem::exists(path)) return R(0L);
    auto lines = read_lines(path);
    if (!lines.ok()) return lines.forward<long>();
    long count = 0;
    for (std::size_t i = 0; i < lines.value().size(); ++i) {
        if (trim(lines.value()[i]).empty()) continue;
        auto valid = check(lines.value()[i]);
        if (!valid.ok()) {
            return R::failure("integrity", path.string() + " line " + std::to_string(i + 1) +
                                               ": " + valid.error().message);
        }
        ++count;
    }
    return R(count);
}

}  // namespace

Result<RunReport> build_report(const std::filesystem::path& run_dir,
                               const config::RunConfig& cfg) {
    using R = Result<RunReport>;
    // Opening the journal is the integrity gate: a corrupt line fails here.
    auto led = ledger::RunLedger::open(run_dir);
    if (!led.ok()) return led.forward<RunReport>();

    RunReport report;
    corpus::CorpusStore store(run_dir / "corpus");
    auto funnel = store.load_funnel();
    if (funnel.ok()) {
        report.funnel = funnel.value();
        report.funnel_present = true;
    }

    auto answers = count_validated_lines(
        run_dir / "extraction" / "raw_answers.jsonl", [](const std::string& line) {
            auto parsed = extraction::raw_answer_from_json(line);
            return parsed.ok() ? ok_void() : VoidResult(parsed.error());
        });
    if (!answers.ok()) return answers.forward<RunReport>();
    report.raw_answers = answers.value();

    auto combos = count_validated_lines(
        run_dir / "extraction" / "combinations.jsonl", [](const std::string& line) {
            auto parsed = extraction::combination_from_json(line);
            return parsed.ok() ? ok_void() : VoidResult(parsed.error());
        });
    if (!combos.ok()) return combos.forward<RunReport>();
    report.combinations = combos.value();

    std::vector<std::optional<int>> verdicts;
    auto checks = count_validated_lines(
        run_dir / "extraction" / "consistency.jsonl", [&](const std::string& line) {
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("percent") ||
                !j["percent"].is_number_integer()) {
                return VoidResult::failure("bad_check", "not a consistency record");
            }
            verdicts.push_back(j["percent"].get<int>());
            return ok_void();
        });
    if (!checks.ok()) return checks.forward<RunReport>();
    report.consistency_points = checks.value();
    if (!verdicts.empty()) {
        auto rate = stats::consistency_rate(verdicts);
        if (rate.ok()) {
            report.consistency = rate.value();
            report.consistency_defined = true;
        }
    }

    if (std::filesystem::exists(run_dir / "outline.txt")) {
        auto plan = outline::load_outline(run_dir / "outline.txt");
        if (!plan.ok()) return plan.forward<RunReport>();
        std::vector<composition::TopicComposition> comps;
        for (const outline::Topic& topic : plan.value().topics) {
            auto comp = composition::load_drafts(topic.id, run_dir.string());
            if (!comp.ok()) continue;  // compose not run (or not for this topic)
            if (comp.value().failed()) {
                report.failed_topics.push_back(topic.id);
            } else {
                report.best_scores[topic.id] =
                    comp.value().drafts[comp.value().chosen].score;
            }
            comps.push_back(std::move(comp).take());
        }
        report.drafts = composition::tally_compositions(comps);
    }

    if (std::filesystem::exists(run_dir / "mining" / "records.jsonl")) {
        auto records = mining::load_records((run_dir / "mining" / "records.jsonl").string());
        if (!records.ok()) {
            return R::failure("integrity", "mining/records.jsonl: " + records.error().message);
        }
        report.mined_records = static_cast<long>(records.value().size());
    }

    if (!cfg.labels_file.empty() && std::filesystem::exists(cfg.labels_file)) {
        auto labels = stats::ingest_labels_file(cfg.labels_file);
        if (!labels.ok()) return labels.forward<RunReport>();
        stats::IntervalMethod method = cfg.interval_method == "clopper-pearson"
                                           ? stats::IntervalMethod::clopper_pearson
                                           : stats::IntervalMethod::wilson;
        for (const char* stage : {"extraction", "mining_direct", "mining_aggregated"}) {
            stats::ConfusionCounts counts = stats::tally(labels.value(), stage);
            if (counts.total() == 0) continue;
            stats::MetricReport metrics = stats::with_fpr_interval(
                stats::confusion_metrics(counts), counts, cfg.confidence, method);
            report.label_counts[stage] = counts;
            report.label_metrics[stage] = metrics;
        }
    }
    return R(std::move(report));
}

namespace {

json metric_json(const stats::MetricValue& v) {
    return {{"value", v.value}, {"defined", v.defined}};
}

std::string pct2(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

}  // namespace

std::string report_to_json(const RunReport& r) {
    json j;
    j["funnel"] = {{"retrieved", r.funnel.retrieved},
                   {"deduplicated", r.funnel.deduplicated},
                   {"keyword_passed", r.funnel.keyword_passed},
                   {"llm_passed", r.funnel.llm_passed},
                   {"present", r.funnel_present}};
    j["extraction"] = {{"raw_answers", r.raw_answers},
                       {"combinations", r.combinations},
                       {"consistency_points", r.consistency_points}};
    if (r.consistency_defined) j["extraction"]["consistency_rate"] = r.consistency;
    j["composition"] = {{"drafts", r.drafts.total},
                        {"passing", r.drafts.passing},
                        {"format_fails", r.drafts.format_fails},
                        {"doi_fails", r.drafts.doi_fails},
                        {"pass_percent", r.drafts.pass_percent()},
                        {"format_fail_percent", r.drafts.format_fail_percent()},
                        {"doi_fail_percent", r.drafts.doi_fail_percent()},
                        {"failed_topics", r.failed_topics}};
    j["composition"]["best_scores"] = json::object();
    for (const auto& [topic, score] : r.best_scores) {
        j["composition"]["best_scores"][std::to_string(topic)] = score;
    }
    j["mining"] = {{"records", r.mined_records}};
    j["labels"] = json::object();
    for (const auto& [stage, metrics] : r.label_metrics) {
        const stats::ConfusionCounts& c = r.label_counts.at(stage);
        json m = {{"tp", c.tp},
                  {"tn", c.tn},
                  {"fp", c.fp},
                  {"fn", c.fn},
                  {"n", metrics.n_points},
                  {"accuracy", metric_json(metrics.accuracy)},
                  {"precision", metric_json(metrics.precision)},
                  {"recall", metric_json(metrics.recall)},
                  {"f1", metric_json(metrics.f1)},
                  {"fpr", metric_json(metrics.fpr)}};
        if (metrics.has_ci) {
            m["fpr_ci"] = {{"low", metrics.fpr_ci.first}, {"high", metrics.fpr_ci.second}};
        }
        j["labels"][stage] = m;
    }
    return j.dump(2);
}

std::string report_table_csv(const RunReport& r) {
    std::string csv = csv_row({"stage", "n", "accuracy", "fpr", "fpr_ci_low", "fpr_ci_high",
                               "precision", "recall", "f1", "consistency"}) +
                      "\n";
    auto cell = [](const stats::MetricValue& v) { return v.defined ? pct2(v.value) : ""; };
    for (const char* stage : {"extraction", "mining_direct", "mining_aggregated"}) {
        auto it = r.label_metrics.find(stage);
        if (it == r.label_metrics.end()) continue;
        const stats::MetricReport& m = it->second;
        std::string consistency;
        if (std::string(stage) == "extraction" && r.consistency_defined) {
            consistency = pct2(r.consistency);
        }
        csv += csv_row({stage, std::to_string(m.n_points), cell(m.accuracy), cell(m.fpr),
                        m.has_ci ? pct2(m.fpr_ci.first) : "",
                        m.has_ci ? pct2(m.fpr_ci.second) : "", cell(m.precision),
                        cell(m.recall), cell(m.f1), consistency}) +
               "\n";
    }
    return csv;
}

VoidResult write_report(const RunReport& r, const std::filesystem::path& run_dir) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir / "stats", ec);
    if (ec) {
        return VoidResult::failure("io_error", "cannot create stats dir: " + ec.message());
    }
    auto wrote = write_file_atomic(run_dir / "stats" / "report.json", report_to_json(r));
    if (!wrote.ok()) return wrote;
    return write_file_atomic(run_dir / "stats" / "table.csv", report_table_csv(r));
}

namespace {

Result<std::vector<composition::SentenceTrace>> load_trace_sentences(
    const std::filesystem::path& run_dir) {
    using R = Result<std::vector<composition::SentenceTrace>>;
    auto text = read_file(run_dir / "review_trace.json");
    if (!text.ok()) {
        return R::failure("missing_dependency", "no assembled review: run compose first");
    }
    json j = json::parse(text.value(), nullptr, false);
    if (j.is_discarded() || !j.contains("sentences")) {
        return R::failure("integrity", "review_trace.json is not a trace file");
    }
    std::vector<composition::SentenceTrace> out;
    for (const auto& js : j["sentences"]) {
        composition::SentenceTrace t;
        t.topic_id = js.value("topic_id", 0);
        t.sentence = js.value("sentence", "");
        for (const auto& d : js["dois"]) t.dois.push_back(d.get<std::string>());
        out.push_back(std::move(t));
    }
    return R(std::move(out));
}

Result<std::vector<extraction::InfoCombination>> load_combinations(
    const std::filesystem::path& run_dir) {
    using R = Result<std::vector<extraction::InfoCombination>>;
    std::vector<extraction::InfoCombination> out;
    auto path = run_dir / "extraction" / "combinations.jsonl";
    if (!std::filesystem::exists(path)) return R(std::move(out));
    auto lines = read_lines(path);
    if (!lines.ok()) return lines.forward<std::vector<extraction::InfoCombination>>();
    for (const std::string& line : lines.value()) {
        if (trim(line).empty()) continue;
        auto combo = extraction::combination_from_json(line);
        if (!combo.ok()) return combo.forward<std::vector<extraction::InfoCombination>>();
        out.push_back(std::move(combo).take());
    }
    return R(std::move(out));
}

Result<std::vector<extraction::RawAnswer>> load_raw_answers(
    const std::filesystem::path& run_dir) {
    using R = Result<std::vector<extraction::RawAnswer>>;
    std::vector<extraction::RawAnswer> out;
    auto path = run_dir / "extraction" / "raw_answers.jsonl";
    if (!std::filesystem::exists(path)) return R(std::move(out));
    auto lines = read_lines(path);
    if (!lines.ok()) return lines.forward<std::vector<extraction::RawAnswer>>();
    for (const std::string& line : lines.value()) {
        if (trim(line).empty()) continue;
        auto answer = extraction::raw_answer_from_json(line);
        if (!answer.ok()) return answer.forward<std::vector<extraction::RawAnswer>>();
        out.push_back(std::move(answer).take());
    }
    return R(std::move(out));
}

// Chain assembly shared by both trace entry points: combinations citing the
// DOI, and the raw answers behind those combinations.
void attach_chain(const std::string& doi,
                  const std::vector<extraction::InfoCombination>& combinations,
                  const std::vector<extraction::RawAnswer>& answers, TraceChain& chain,
                  std::set<std::string>& seen_combos, std::set<std::string>& seen_answers) {
    std::set<std::pair<std::string, std::string>> wanted;  // (doi, qid)
    for (const extraction::InfoCombination& c : combinations) {
        if (std::find(c.dois.begin(), c.dois.end(), doi) == c.dois.end()) continue;
        std::string key = join(c.dois, ",") + "|" + c.qid;
        if (seen_combos.insert(key).second) chain.combinations.push_back(c);
        for (const std::string& d : c.dois) wanted.insert({d, c.qid});
    }
    for (const extraction::RawAnswer& a : answers) {
        if (!wanted.count({a.doi, a.qid})) continue;
        std::string key = a.doi + "|" + a.qid + "|" + std::to_string(a.repetition) + "|" +
                          std::to_string(a.chunk_index);
        if (seen_answers.insert(key).second) chain.raw_answers.push_back(a);
    }
}

}  // namespace

Result<TraceChain> trace_doi(const std::filesystem::path& run_dir, const std::string& query) {
    using R = Result<TraceChain>;
    auto sentences = load_trace_sentences(run_dir);
    if (!sentences.ok()) return sentences.forward<TraceChain>();

    auto docs = corpus::CorpusStore(run_dir / "corpus").load();
    if (!docs.ok()) {
        return R::failure("missing_dependency", "no corpus: run search first");
    }

    TraceChain chain;
    chain.query = normalize_doi(query);
    bool known = false;
    for (const corpus::Document& d : docs.value()) {
        if (d.doi == chain.query) known = true;
    }
    if (!known) {
        chain.status = "unknown";
        std::vector<std::pair<std::size_t, std::string>> ranked;
        for (const corpus::Document& d : docs.value()) {
            if (d.citable()) ranked.push_back({levenshtein(chain.query, d.doi), d.doi});
        }
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
            chain.nearest.push_back(ranked[i].second);
        }
        return R(std::move(chain));
    }

    for (const composition::SentenceTrace& t : sentences.value()) {
        if (std::find(t.dois.begin(), t.dois.end(), chain.query) != t.dois.end()) {
            chain.sentences.push_back(t);
        }
    }
    auto combinations = load_combinations(run_dir);
    if (!combinations.ok()) return combinations.forward<TraceChain>();
    auto answers = load_raw_answers(run_dir);
    if (!answers.ok()) return answers.forward<TraceChain>();
    std::set<std::string> seen_combos, seen_answers;
    attach_chain(chain.query, combinations.value(), answers.value(), chain, seen_combos,
                 seen_answers);
    chain.status = chain.sentences.empty() ? "uncited" : "cited";
    return R(std::move(chain));
}

Result<TraceChain> trace_sentence(const std::filesystem::path& run_dir, int index) {
    using R = Result<TraceChain>;
    auto sentences = load_trace_sentences(run_dir);
    if (!sentences.ok()) return sentences.forward<TraceChain>();
    if (index < 1 || static_cast<std::size_t>(index) > sentences.value().size()) {
        return R::failure("bad_index",
                          "sentence index out of range 1.." +
                              std::to_string(sentences.value().size()));
    }
    const composition::SentenceTrace& target = sentences.value()[index - 1];

    TraceChain chain;
    chain.query = "sentence " + std::to_string(index);
    chain.status = "sentence";
    chain.sentences.push_back(target);

    auto combinations = load_combinations(run_dir);
    if (!combinations.ok()) return combinations.forward<TraceChain>();
    auto answers = load_raw_answers(run_dir);
    if (!answers.ok()) return answers.forward<TraceChain>();
    std::set<std::string> seen_combos, seen_answers;
    for (const std::string& doi : target.dois) {
        attach_chain(doi, combinations.value(), answers.value(), chain, seen_combos,
                     seen_answers);
    }
    return R(std::move(chain));
}

std::string trace_chain_to_json(const TraceChain& chain) {
    json j;
    j["query"] = chain.query;
    j["status"] = chain.status;
    j["sentences"] = json::array();
    for (const composition::SentenceTrace& t : chain.sentences) {
        j["sentences"].push_back(
            {{"topic_id", t.topic_id}, {"sentence", t.sentence}, {"dois", t.dois}});
    }
    j["combinations"] = json::array();
    for (const extraction::InfoCombination& c : chain.combinations) {
        j["combinations"].push_back(json::parse(extraction::combination_to_json(c)));
    }
    j["raw_answers"] = json::array();
    for (const extraction::RawAnswer& a : chain.raw_answers) {
        j["raw_answers"].push_back(json::parse(extraction::raw_answer_to_json(a)));
    }
    if (!chain.nearest.empty()) j["nearest"] = chain.nearest;
    return j.dump(2);
}

}  // namespace revgen::pipeline
