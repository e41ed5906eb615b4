#include "revgen/evalframe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "revgen/doi.hpp"
#include "revgen/outline.hpp"
#include "revgen/schemas.hpp"
#include "revgen/text.hpp"

namespace revgen::evalframe {

using nlohmann::json;

std::string fragment_to_json(const Fragment& f) {
    json j;
    j["id"] = f.id;
    j["review_id"] = f.review_id;
    j["topic"] = f.topic;
    j["dois"] = f.dois;
    j["text"] = f.text;
    return j.dump();
}

Result<Fragment> fragment_from_json(const std::string& text) {
    using R = Result<Fragment>;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("dois")) {
        return R::failure("bad_fragment", "not a fragment: " + text.substr(0, 80));
    }
    Fragment f;
    f.id = j["id"].get<std::string>();
    f.review_id = j.value("review_id", "");
    f.topic = j.value("topic", "");
    for (const auto& d : j["dois"]) f.dois.push_back(d.get<std::string>());
    f.text = j.value("text", "");
    if (f.dois.empty()) {
        return R::failure("bad_fragment", "fragment cites nothing: " + f.id);
    }
    return R(std::move(f));
}

VoidResult save_fragments(const std::vector<Fragment>& frags, const std::string& path) {
    std::string body;
    for (const Fragment& f : frags) body += fragment_to_json(f) + "\n";
    return write_file_atomic(path, body);
}

Result<std::vector<Fragment>> load_fragments(const std::string& path) {
    using R = Result<std::vector<Fragment>>;
    auto lines = read_lines(path);
    if (!lines.ok()) return R(lines.error());
    std::vector<Fragment> frags;
    for (const std::string& line : lines.value()) {
        if (trim(line).empty()) continue;
        auto f = fragment_from_json(line);
        if (!f.ok()) return R(f.error());
        frags.push_back(std::move(f).take());
    }
    return R(std::move(frags));
}

std::string origin_name(Origin o) {
    switch (o) {
        case Origin::human: return "human";
        case Origin::method: return "method";
        case Origin::direct: return "direct";
    }
    return "?";
}

Result<Origin> origin_from(const std::string& name) {
    using R = Result<Origin>;
    if (name == "human") return R(Origin::human);
    if (name == "method") return R(Origin::method);
    if (name == "direct") return R(Origin::direct);
    return R::failure("bad_origin", "unknown candidate origin: " + name);
}

VoidResult validate_rubric(const Rubric& rubric) {
    if (rubric.items.size() != 27) {
        return VoidResult::failure(
            "bad_rubric", "expected 27 items, got " + std::to_string(rubric.items.size()));
    }
    std::map<std::string, int> per_category;
    std::set<std::string> ids;
    for (const RubricItem& item : rubric.items) {
        if (item.id.empty() || item.category.empty() || item.prompt.empty()) {
            return VoidResult::failure("bad_rubric", "item with empty id/category/prompt");
        }
        if (!ids.insert(item.id).second) {
            return VoidResult::failure("bad_rubric", "duplicate item id: " + item.id);
        }
        ++per_category[item.category];
    }
    if (per_category.size() != 9) {
        return VoidResult::failure(
            "bad_rubric", "expected 9 categories, got " + std::to_string(per_category.size()));
    }
    for (const auto& [category, count] : per_category) {
        if (count != 3) {
            return VoidResult::failure("bad_rubric", "category " + category + " has " +
                                                         std::to_string(count) +
                                                         " items, expected 3");
        }
    }
    return ok_void();
}

Rubric default_rubric() {
    Rubric r;
    auto add = [&](const std::string& category, int n, std::string prompt) {
        r.items.push_back(
            RubricItem{category + "-" + std::to_string(n), category, std::move(prompt)});
    };
    add("coverage", 1, "which text covers more of the essential subtopics of the theme?");
    add("coverage", 2, "which text accounts for a wider range of the cited evidence?");
    add("coverage", 3, "which text leaves fewer obvious gaps a reader would notice?");
    add("accuracy", 1, "which text states the underlying findings more faithfully?");
    add("accuracy", 2, "which text avoids overgeneralizing beyond the evidence?");
    add("accuracy", 3, "which text keeps quantities, units, and conditions correct?");
    add("coherence", 1, "which text flows more logically from claim to claim?");
    add("coherence", 2, "which text connects its evidence to its conclusions more clearly?");
    add("coherence", 3, "which text avoids contradicting itself?");
    add("citation-fidelity", 1, "which text grounds its claims in the cited sources better?");
    add("citation-fidelity", 2, "which text cites at the right level of granularity?");
    add("citation-fidelity", 3, "which text avoids citations that do not support the claim?");
    add("depth", 1, "which text goes beyond surface description into mechanisms?");
    add("depth", 2, "which text engages with limitations or competing explanations?");
    add("depth", 3, "which text synthesizes across sources rather than listing them?");
    add("organization", 1, "which text orders its material more sensibly?");
    add("organization", 2, "which text signals its structure more clearly?");
    add("organization", 3, "which text uses paragraph focus more effectively?");
    add("clarity", 1, "which text is easier to read sentence by sentence?");
    add("clarity", 2, "which text defines or avoids jargon more appropriately?");
    add("clarity", 3, "which text is more concise without losing content?");
    add("insight", 1, "which text offers the more useful framing of the field?");
    add("insight", 2, "which text identifies trends or tensions across studies better?");
    add("insight", 3, "which text would better guide a researcher's next step?");
    add("balance", 1, "which text weighs competing approaches more even-handedly?");
    add("balance", 2, "which text avoids overselling a single study or method?");
    add("balance", 3, "which text acknowledges uncertainty more honestly?");
    return r;
}

Result<Rubric> rubric_from_json(const std::string& text) {
    using R = Result<Rubric>;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("items") || !j["items"].is_array()) {
        return R::failure("bad_rubric", "rubric file must be an object with an items array");
    }
    Rubric rubric;
    for (const auto& ji : j["items"]) {
        if (!ji.is_object() || !ji.contains("id") || !ji.contains("category") ||
            !ji.contains("prompt")) {
            return R::failure("bad_rubric", "each item needs id, category, and prompt");
        }
        rubric.items.push_back(RubricItem{ji["id"].get<std::string>(),
                                          ji["category"].get<std::string>(),
                                          ji["prompt"].get<std::string>()});
    }
    auto valid = validate_rubric(rubric);
    if (!valid.ok()) return R(valid.error());
    return R(std::move(rubric));
}

std::string rubric_to_json(const Rubric& rubric) {
    json j;
    j["items"] = json::array();
    for (const RubricItem& item : rubric.items) {
        j["items"].push_back(
            {{"id", item.id}, {"category", item.category}, {"prompt", item.prompt}});
    }
    return j.dump(2);
}

Result<Rubric> load_rubric(const std::string& path) {
    using R = Result<Rubric>;
    auto text = read_file(path);
    if (!text.ok()) return R(text.error());
    auto rubric = rubric_from_json(text.value());
    if (!rubric.ok()) {
        return R::failure(rubric.error().code, path + ": " + rubric.error().message);
    }
    return rubric;
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::A: return "A";
        case Verdict::B: return "B";
        case Verdict::tie: return "tie";
    }
    return "?";
}

namespace {

Result<Verdict> verdict_from(const std::string& name) {
    using R = Result<Verdict>;
    if (name == "A") return R(Verdict::A);
    if (name == "B") return R(Verdict::B);
    if (name == "tie") return R(Verdict::tie);
    return R::failure("bad_verdict", "unknown verdict: " + name);
}

}  // namespace

std::string record_to_json(const ComparisonRecord& r) {
    json j;
    j["fragment_id"] = r.fragment_id;
    j["item_id"] = r.item_id;
    j["a"] = r.a;
    j["b"] = r.b;
    j["repetition"] = r.repetition;
    j["verdict_ab"] = verdict_name(r.verdict_ab);
    j["verdict_ba"] = verdict_name(r.verdict_ba);
    j["verdict"] = verdict_name(r.verdict);
    return j.dump();
}

Result<ComparisonRecord> record_from_json(const std::string& text) {
    using R = Result<ComparisonRecord>;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("a") || !j.contains("b") ||
        !j.contains("verdict")) {
        return R::failure("bad_record", "not a comparison record: " + text.substr(0, 80));
    }
    ComparisonRecord r;
    r.fragment_id = j.value("fragment_id", "");
    r.item_id = j.value("item_id", "");
    r.a = j["a"].get<std::string>();
    r.b = j["b"].get<std::string>();
    r.repetition = j.value("repetition", 0);
    const std::pair<const char*, Verdict*> verdict_fields[] = {
        {"verdict_ab", &r.verdict_ab}, {"verdict_ba", &r.verdict_ba}, {"verdict", &r.verdict}};
    for (auto& [field, target] : verdict_fields) {
        if (!j.contains(field)) continue;
        auto v = verdict_from(j[field].get<std::string>());
        if (!v.ok()) return R(v.error());
        *target = v.value();
    }
    if (r.a == r.b) {
        return R::failure("bad_record", "comparison of a candidate with itself: " + r.a);
    }
    return R(std::move(r));
}

VoidResult save_records(const std::vector<ComparisonRecord>& records, const std::string& path) {
    std::string body;
    for (const ComparisonRecord& r : records) body += record_to_json(r) + "\n";
    return write_file_atomic(path, body);
}

Result<std::vector<ComparisonRecord>> load_records(const std::string& path) {
    using R = Result<std::vector<ComparisonRecord>>;
    auto lines = read_lines(path);
    if (!lines.ok()) return R(lines.error());
    std::vector<ComparisonRecord> records;
    for (const std::string& line : lines.value()) {
        if (trim(line).empty()) continue;
        auto r = record_from_json(line);
        if (!r.ok()) return R(r.error());
        records.push_back(std::move(r).take());
    }
    return R(std::move(records));
}

Result<std::vector<Fragment>> segment_review(gateway::Gateway& gw,
                                             const corpus::Document& review,
                                             std::vector<std::string>* warnings) {
    using R = Result<std::vector<Fragment>>;
    if (review.body.empty()) {
        return R::failure("empty_body", "review has no ingested body: " + review.doi);
    }

    gateway::CompletionRequest req;
    req.template_id = "segment";
    req.vars = {{"review", review.body}};
    req.key = {"segment", review.doi, ""};
    auto resp = gw.complete(req);
    if (!resp.ok()) return R(resp.error());

    // Numbered topic lines, each followed by an ANCHOR line quoting where
    // the fragment begins. Anything else is chatter.
    struct Boundary {
        std::string topic;
        std::size_t start = 0;
    };
    std::vector<Boundary> bounds;
    std::string pending_topic;
    std::size_t search_from = 0;
    for (const std::string& raw_line : split(resp.value().text, '\n')) {
        std::string line = trim(raw_line);
        if (line.empty()) continue;
        std::size_t digits = 0;
        while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
            ++digits;
        }
        if (digits > 0 && digits < line.size() &&
            (line[digits] == '.' || line[digits] == ')')) {
            pending_topic = trim(line.substr(digits + 1));
            continue;
        }
        if (line.rfind("ANCHOR:", 0) == 0) {
            std::string anchor = trim(line.substr(7));
            if (pending_topic.empty() || anchor.empty()) continue;
            std::size_t pos = review.body.find(anchor, search_from);
            if (pos == std::string::npos) {
                if (warnings != nullptr) {
                    warnings->push_back("anchor not found in review " + review.doi + ": " +
                                        anchor.substr(0, 60));
                }
                pending_topic.clear();
                continue;
            }
            bounds.push_back(Boundary{pending_topic, pos});
            search_from = pos + 1;
            pending_topic.clear();
        }
    }
    if (bounds.empty()) {
        return R::failure("no_fragments", "segmentation produced no usable anchors for " +
                                              review.doi);
    }

    // The opening of the review always belongs to the first fragment.
    bounds.front().start = 0;
    std::vector<Fragment> fragments;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        std::size_t end = i + 1 < bounds.size() ? bounds[i + 1].start : review.body.size();
        Fragment f;
        f.review_id = review.doi;
        f.topic = bounds[i].topic;
        f.text = review.body.substr(bounds[i].start, end - bounds[i].start);
        std::set<std::string> seen;
        for (const std::string& cite : extract_bracket_citations(f.text)) {
            if (seen.insert(cite).second) f.dois.push_back(cite);
        }
        if (f.dois.empty()) {
            if (warnings != nullptr) {
                warnings->push_back("fragment without citations dropped: " + f.topic);
            }
            continue;
        }
        f.id = doi_slug(review.doi) + "-f" + std::to_string(fragments.size() + 1);
        fragments.push_back(std::move(f));
    }
    if (fragments.empty()) {
        return R::failure("no_fragments",
                          "every fragment of " + review.doi + " lacked citations");
    }
    return R(std::move(fragments));
}

namespace {

std::string doc_excerpt(const corpus::Document& doc) {
    if (!doc.abstract.empty()) return doc.abstract;
    if (!doc.body.empty()) return doc.body.substr(0, 600);
    return doc.title;
}

}  // namespace

Result<std::vector<Candidate>> generate_candidates(
    gateway::Gateway& gw, const Fragment& fragment,
    const std::map<std::string, corpus::Document>& corpus_docs, const CandidateParams& params,
    std::vector<std::string>* warnings) {
    using R = Result<std::vector<Candidate>>;
    if (params.method_candidates < 1 || params.direct_candidates < 1) {
        return R::failure("bad_params", "need at least one method and one direct candidate");
    }
    if (fragment.dois.empty()) {
        return R::failure("bad_fragment", "fragment cites nothing: " + fragment.id);
    }
    for (const std::string& doi : fragment.dois) {
        if (corpus_docs.count(doi) == 0) {
            return R::failure("unresolvable_doi",
                              "fragment " + fragment.id + " cites " + doi +
                                  " which the corpus does not hold");
        }
    }

    std::vector<Candidate> out;
    out.push_back(Candidate{fragment.id + "-human", fragment.id, Origin::human, fragment.text});

    std::vector<extraction::InfoCombination> evidence;
    std::string sources;
    for (std::size_t i = 0; i < fragment.dois.size(); ++i) {
        const corpus::Document& doc = corpus_docs.at(fragment.dois[i]);
        extraction::InfoCombination combo;
        combo.qid = "E" + std::to_string(i + 1);
        combo.text = doc_excerpt(doc);
        combo.dois = {fragment.dois[i]};
        combo.repetitions = {1};
        evidence.push_back(std::move(combo));
        sources += "[" + fragment.dois[i] + "] " + doc_excerpt(doc) + "\n";
    }
    std::set<std::string> corpus_dois;
    for (const auto& [doi, doc] : corpus_docs) corpus_dois.insert(doi);

    for (int i = 1; i <= params.method_candidates; ++i) {
        outline::Topic topic;
        topic.id = params.fragment_index * 100 + i;
        topic.title = fragment.topic;
        topic.source = outline::TopicSource::drafted;
        auto comp = composition::best_of_n(gw, topic, evidence, corpus_dois, params.best,
                                           warnings);
        if (!comp.ok()) return R(comp.error());
        if (comp.value().failed()) {
            return R::failure("method_failed",
                              "no draft passed the gates for fragment " + fragment.id);
        }
        out.push_back(Candidate{fragment.id + "-method-" + std::to_string(i), fragment.id,
                                Origin::method,
                                comp.value().drafts[comp.value().chosen].text});
    }

    for (int i = 1; i <= params.direct_candidates; ++i) {
        gateway::CompletionRequest req;
        req.template_id = "direct";
        req.vars = {{"topic", fragment.topic}, {"sources", sources}};
        req.key = {"direct", fragment.id, "d" + std::to_string(i)};
        auto resp = gw.complete(req);
        if (!resp.ok()) return R(resp.error());
        out.push_back(Candidate{fragment.id + "-direct-" + std::to_string(i), fragment.id,
                                Origin::direct, trim(resp.value().text)});
    }
    return R(std::move(out));
}

namespace {

// One judged ordering. Returns the winning candidate id, empty string for a
// tie, and nullopt when the judge was unusable after retries.
Result<std::optional<std::string>> judge_once(gateway::Gateway& gw, const Candidate& first,
                                              const Candidate& second, const RubricItem& item,
                                              const std::string& pair_key,
                                              const std::string& group) {
    using R = Result<std::optional<std::string>>;
    gateway::CompletionRequest req;
    req.template_id = "compare";
    req.vars = {{"item", item.prompt}, {"first", first.text}, {"second", second.text}};
    req.key = {"compare", pair_key, group};
    auto resp = gw.complete_structured(req, "comparison-verdict");
    if (!resp.ok()) {
        if (resp.error().code == "retry_exhausted" || resp.error().code == "format_exhausted") {
            return R(std::optional<std::string>{});
        }
        return R(resp.error());
    }
    const auto& verdict = std::get<schemas::VerdictPayload>(resp.value().structured.payload);
    if (!verdict.choice.has_value()) return R(std::optional<std::string>{});
    switch (*verdict.choice) {
        case schemas::Choice::A: return R(std::optional<std::string>{first.id});
        case schemas::Choice::B: return R(std::optional<std::string>{second.id});
        case schemas::Choice::Tie: return R(std::optional<std::string>{std::string{}});
        default: return R(std::optional<std::string>{});  // yes/no: not a comparison verdict
    }
}

Verdict winner_to_verdict(const std::string& winner, const std::string& a_id) {
    if (winner.empty()) return Verdict::tie;
    return winner == a_id ? Verdict::A : Verdict::B;
}

}  // namespace

Result<std::vector<ComparisonRecord>> pairwise_compare(gateway::Gateway& gw, const Candidate& a,
                                                       const Candidate& b,
                                                       const RubricItem& item,
                                                       int repetitions) {
    using R = Result<std::vector<ComparisonRecord>>;
    if (a.id == b.id) {
        return R::failure("bad_pair", "cannot compare a candidate with itself: " + a.id);
    }
    if (a.fragment_id != b.fragment_id) {
        return R::failure("fragment_mismatch",
                          a.id + " and " + b.id + " belong to different fragments");
    }
    if (repetitions < 1) {
        return R::failure("bad_repetitions", "repetitions must be >= 1");
    }

    std::string pair_key = a.fragment_id + "|" + item.id + "|" + a.id + "|" + b.id;
    std::vector<ComparisonRecord> records;
    for (int rep = 1; rep <= repetitions; ++rep) {
        auto ab = judge_once(gw, a, b, item, pair_key, "r" + std::to_string(rep) + ":ab");
        if (!ab.ok()) return R(ab.error());
        auto ba = judge_once(gw, b, a, item, pair_key, "r" + std::to_string(rep) + ":ba");
        if (!ba.ok()) return R(ba.error());
        if (!ab.value().has_value() || !ba.value().has_value()) continue;  // repetition missing

        ComparisonRecord rec;
        rec.fragment_id = a.fragment_id;
        rec.item_id = item.id;
        rec.a = a.id;
        rec.b = b.id;
        rec.repetition = rep;
        rec.verdict_ab = winner_to_verdict(*ab.value(), a.id);
        rec.verdict_ba = winner_to_verdict(*ba.value(), a.id);
        // Agreement across both presentation orders is required to call a
        // winner; anything else neutralizes to a tie.
        rec.verdict = rec.verdict_ab == rec.verdict_ba ? rec.verdict_ab : Verdict::tie;
        records.push_back(std::move(rec));
    }
    return R(std::move(records));
}

Result<ScoreOutcome> pagerank_scores(const std::vector<ComparisonRecord>& records) {
    using R = Result<ScoreOutcome>;
    std::map<std::string, std::size_t> index;
    for (const ComparisonRecord& rec : records) {
        index.emplace(rec.a, index.size());
        index.emplace(rec.b, index.size());
    }
    const std::size_t n = index.size();
    if (n < 2) {
        return R::failure("bad_records", "ranking needs at least two candidates");
    }

    std::vector<std::vector<double>> weight(n, std::vector<double>(n, 0.0));
    bool informative = false;
    for (const ComparisonRecord& rec : records) {
        std::size_t ia = index[rec.a], ib = index[rec.b];
        switch (rec.verdict) {
            case Verdict::A:
                weight[ib][ia] += 1.0;  // loser endorses winner
                informative = true;
                break;
            case Verdict::B:
                weight[ia][ib] += 1.0;
                informative = true;
                break;
            case Verdict::tie:
                weight[ia][ib] += 0.5;
                weight[ib][ia] += 0.5;
                break;
        }
    }

    ScoreOutcome out;
    if (!informative) {
        out.degenerate = true;
        for (const auto& [id, idx] : index) out.scores[id] = 5.0;
        return R(std::move(out));
    }

    std::vector<double> strength(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) strength[i] += weight[i][j];
    }

    const double damping = 0.85;
    std::vector<double> p(n, 1.0 / n), next(n, 0.0);
    for (int iter = 0; iter < 100000; ++iter) {
        double dangling = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (strength[i] == 0.0) dangling += p[i];
        }
        for (std::size_t j = 0; j < n; ++j) {
            next[j] = (1.0 - damping) / n + damping * dangling / n;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (strength[i] == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (weight[i][j] > 0.0) {
                    next[j] += damping * p[i] * weight[i][j] / strength[i];
                }
            }
        }
        double delta = 0.0;
        for (std::size_t j = 0; j < n; ++j) delta += std::fabs(next[j] - p[j]);
        p.swap(next);
        if (delta < 1e-10) break;
    }

    double lo = p[0], hi = p[0];
    for (double v : p) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-8) {
        out.degenerate = true;
        for (const auto& [id, idx] : index) out.scores[id] = 5.0;
        return R(std::move(out));
    }
    for (const auto& [id, idx] : index) {
        out.scores[id] = (p[idx] - lo) / (hi - lo) * 10.0;
    }
    return R(std::move(out));
}

Result<IccResult> icc(const std::vector<std::vector<double>>& raters_by_subjects) {
    using R = Result<IccResult>;
    const std::size_t k = raters_by_subjects.size();
    if (k < 2) return R::failure("bad_matrix", "need at least two raters");
    const std::size_t n = raters_by_subjects[0].size();
    if (n < 2) return R::failure("bad_matrix", "need at least two subjects");
    for (const auto& row : raters_by_subjects) {
        if (row.size() != n) {
            return R::failure("bad_matrix", "rater rows must all rate the same subjects");
        }
    }

    double grand = 0.0;
    for (const auto& row : raters_by_subjects) {
        for (double v : row) grand += v;
    }
    grand /= static_cast<double>(n * k);

    std::vector<double> subject_mean(n, 0.0), rater_mean(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            subject_mean[j] += raters_by_subjects[i][j];
            rater_mean[i] += raters_by_subjects[i][j];
        }
    }
    for (double& m : subject_mean) m /= static_cast<double>(k);
    for (double& m : rater_mean) m /= static_cast<double>(n);

    double ss_subjects = 0.0, ss_raters = 0.0, ss_error = 0.0, ss_total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        ss_subjects += (subject_mean[j] - grand) * (subject_mean[j] - grand);
    }
    ss_subjects *= static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
        ss_raters += (rater_mean[i] - grand) * (rater_mean[i] - grand);
    }
    ss_raters *= static_cast<double>(n);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double cell = raters_by_subjects[i][j];
            double resid = cell - subject_mean[j] - rater_mean[i] + grand;
            ss_error += resid * resid;
            ss_total += (cell - grand) * (cell - grand);
        }
    }

    IccResult out;
    if (ss_total < 1e-12) {
        // No variance anywhere: agreement is vacuously perfect.
        out.degenerate_perfect = true;
        out.icc21 = 1.0;
        out.icc2k = 1.0;
        return R(out);
    }

    const double dn = static_cast<double>(n), dk = static_cast<double>(k);
    out.msr = ss_subjects / (dn - 1.0);
    out.msc = ss_raters / (dk - 1.0);
    out.mse = ss_error / ((dn - 1.0) * (dk - 1.0));

    double denom21 = out.msr + (dk - 1.0) * out.mse + dk / dn * (out.msc - out.mse);
    double denom2k = out.msr + (out.msc - out.mse) / dn;
    if (std::fabs(denom21) < 1e-300 || std::fabs(denom2k) < 1e-300) {
        out.degenerate_perfect = true;
        out.icc21 = 1.0;
        out.icc2k = 1.0;
        return R(out);
    }
    out.icc21 = (out.msr - out.mse) / denom21;
    out.icc2k = (out.msr - out.mse) / denom2k;
    return R(out);
}

TcrOutcome tcr(const std::vector<ComparisonRecord>& records) {
    // Majority verdict per unordered pair; only pairs with a clear majority
    // participate in triples.
    std::set<std::string> candidates;
    std::map<std::pair<std::string, std::string>, std::pair<int, int>> tallies;
    for (const ComparisonRecord& rec : records) {
        candidates.insert(rec.a);
        candidates.insert(rec.b);
        if (rec.verdict == Verdict::tie) continue;
        std::string lo = std::min(rec.a, rec.b), hi = std::max(rec.a, rec.b);
        auto& tally = tallies[{lo, hi}];
        const std::string& winner = rec.verdict == Verdict::A ? rec.a : rec.b;
        if (winner == lo) {
            ++tally.first;
        } else {
            ++tally.second;
        }
    }

    // majority[{x,y}] = winner id, or absent when tied/unjudged.
    std::map<std::pair<std::string, std::string>, std::string> majority;
    for (const auto& [pair, tally] : tallies) {
        if (tally.first > tally.second) {
            majority[pair] = pair.first;
        } else if (tally.second > tally.first) {
            majority[pair] = pair.second;
        }
    }

    std::vector<std::string> ids(candidates.begin(), candidates.end());
    TcrOutcome out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            for (std::size_t l = j + 1; l < ids.size(); ++l) {
                auto find = [&](const std::string& x, const std::string& y) {
                    auto it = majority.find({std::min(x, y), std::max(x, y)});
                    return it == majority.end() ? std::string{} : it->second;
                };
                std::string w1 = find(ids[i], ids[j]);
                std::string w2 = find(ids[j], ids[l]);
                std::string w3 = find(ids[i], ids[l]);
                if (w1.empty() || w2.empty() || w3.empty()) continue;
                ++out.eligible;
                // A three-node tournament is cyclic exactly when every node
                // wins once.
                std::map<std::string, int> wins;
                ++wins[w1];
                ++wins[w2];
                ++wins[w3];
                bool cyclic = wins.size() == 3;
                if (!cyclic) ++out.acyclic;
            }
        }
    }
    out.applicable = out.eligible > 0;
    out.ratio = out.applicable ? static_cast<double>(out.acyclic) / out.eligible : 0.0;
    return out;
}

namespace {

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string scores_to_csv(const ScoreTable& table) {
    std::string csv = csv_row({"fragment", "item", "candidate", "origin", "score"}) + "\n";
    for (const ScoreRow& row : table.rows) {
        csv += csv_row({row.fragment_id, row.item_id, row.candidate_id,
                        origin_name(row.origin), format_score(row.score)}) +
               "\n";
    }
    return csv;
}

Result<RelativeReport> relative_report(const ScoreTable& table) {
    using R = Result<RelativeReport>;
    if (table.rows.empty()) {
        return R::failure("no_scores", "score table is empty");
    }

    struct Agg {
        Origin origin = Origin::human;
        double sum = 0.0;
        int items = 0;
        double mean() const { return items == 0 ? 0.0 : sum / items; }
    };
    // fragment -> candidate -> aggregate
    std::map<std::string, std::map<std::string, Agg>> frags;
    RelativeReport report;
    std::map<std::string, std::map<Origin, std::pair<double, int>>> item_sums;
    for (const ScoreRow& row : table.rows) {
        Agg& agg = frags[row.fragment_id][row.candidate_id];
        agg.origin = row.origin;
        agg.sum += row.score;
        ++agg.items;
        auto& cell = item_sums[row.item_id][row.origin];
        cell.first += row.score;
        ++cell.second;
    }
    for (const auto& [item, per_origin] : item_sums) {
        for (const auto& [origin, cell] : per_origin) {
            report.per_item[item][origin] = cell.first / cell.second;
        }
    }

    struct Rollup {
        double score_sum = 0.0;
        double best_score_sum = 0.0;
        double percent_sum = 0.0;
        double best_percent_sum = 0.0;
        int candidates = 0;
        int fragments = 0;           // fragments contributing scores
        int percent_fragments = 0;   // fragments with a usable human baseline
    };
    std::map<Origin, Rollup> rollups;

    for (const auto& [fragment_id, cands] : frags) {
        double human_agg = 0.0;
        int humans = 0;
        for (const auto& [cid, agg] : cands) {
            if (agg.origin == Origin::human) {
                human_agg = agg.mean();
                ++humans;
            }
        }
        bool human_usable = humans == 1 && human_agg > 0.0;
        if (humans != 1) {
            report.flags.push_back("fragment " + fragment_id + " has " +
                                   std::to_string(humans) + " human candidates");
        } else if (human_agg <= 0.0) {
            report.flags.push_back("fragment " + fragment_id +
                                   " has a zero human aggregate; percentages undefined");
        }

        std::map<Origin, std::pair<double, int>> frag_mean;  // sum, count
        std::map<Origin, double> frag_best;
        for (const auto& [cid, agg] : cands) {
            double m = agg.mean();
            Rollup& roll = rollups[agg.origin];
            roll.score_sum += m;
            ++roll.candidates;
            auto& fm = frag_mean[agg.origin];
            fm.first += m;
            ++fm.second;
            auto it = frag_best.find(agg.origin);
            if (it == frag_best.end() || m > it->second) frag_best[agg.origin] = m;
        }
        for (const auto& [origin, fm] : frag_mean) {
            Rollup& roll = rollups[origin];
            ++roll.fragments;
            roll.best_score_sum += frag_best[origin];
            if (human_usable) {
                roll.percent_sum += fm.first / fm.second / human_agg * 100.0;
                roll.best_percent_sum += frag_best[origin] / human_agg * 100.0;
                ++roll.percent_fragments;
            }
        }
    }

    for (const auto& [origin, roll] : rollups) {
        OriginStats stats;
        stats.candidates = roll.candidates;
        stats.mean_score = roll.candidates == 0 ? 0.0 : roll.score_sum / roll.candidates;
        stats.best_score = roll.fragments == 0 ? 0.0 : roll.best_score_sum / roll.fragments;
        if (roll.percent_fragments > 0) {
            stats.mean_percent = roll.percent_sum / roll.percent_fragments;
            stats.best_percent = roll.best_percent_sum / roll.percent_fragments;
        }
        report.origins[origin] = stats;
    }
    return R(std::move(report));
}

Result<ReliabilityRow> repetition_reliability(const std::vector<ComparisonRecord>& records) {
    using R = Result<ReliabilityRow>;
    if (records.empty()) {
        return R::failure("bad_records", "no records to assess");
    }
    const std::string& fragment_id = records[0].fragment_id;
    const std::string& item_id = records[0].item_id;
    std::map<int, std::vector<ComparisonRecord>> by_rep;
    for (const ComparisonRecord& rec : records) {
        if (rec.fragment_id != fragment_id || rec.item_id != item_id) {
            return R::failure("bad_records",
                              "reliability runs over one fragment and item at a time");
        }
        by_rep[rec.repetition].push_back(rec);
    }
    if (by_rep.size() < 2) {
        return R::failure("bad_records", "need at least two repetitions to compare raters");
    }

    std::vector<std::string> candidate_order;
    std::vector<std::vector<double>> matrix;
    for (const auto& [rep, recs] : by_rep) {
        auto scores = pagerank_scores(recs);
        if (!scores.ok()) return R(scores.error());
        if (candidate_order.empty()) {
            for (const auto& [id, score] : scores.value().scores) {
                candidate_order.push_back(id);
            }
        } else if (scores.value().scores.size() != candidate_order.size()) {
            return R::failure("bad_records",
                              "repetitions cover different candidate sets");
        }
        std::vector<double> row;
        for (const std::string& id : candidate_order) {
            auto it = scores.value().scores.find(id);
            if (it == scores.value().scores.end()) {
                return R::failure("bad_records",
                                  "repetitions cover different candidate sets");
            }
            row.push_back(it->second);
        }
        matrix.push_back(std::move(row));
    }

    ReliabilityRow out;
    out.fragment_id = fragment_id;
    out.item_id = item_id;
    auto agreement = icc(matrix);
    if (!agreement.ok()) return R(agreement.error());
    out.icc = agreement.value();
    out.tcr = tcr(records);
    return R(std::move(out));
}

std::string reliability_to_csv(const std::vector<ReliabilityRow>& rows) {
    std::string csv = csv_row({"fragment", "item", "icc21", "icc2k", "msr", "msc", "mse",
                               "degenerate_perfect", "tcr", "eligible_triples",
                               "acyclic_triples", "tcr_applicable"}) +
                      "\n";
    for (const ReliabilityRow& row : rows) {
        csv += csv_row({row.fragment_id, row.item_id, format_score(row.icc.icc21),
                        format_score(row.icc.icc2k), format_score(row.icc.msr),
                        format_score(row.icc.msc), format_score(row.icc.mse),
                        row.icc.degenerate_perfect ? "true" : "false",
                        row.tcr.applicable ? format_score(row.tcr.ratio) : "n/a",
                        std::to_string(row.tcr.eligible), std::to_string(row.tcr.acyclic),
                        row.tcr.applicable ? "true" : "false"}) +
               "\n";
    }
    return csv;
}

}  // namespace revgen::evalframe
