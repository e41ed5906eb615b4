#include "revgen/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "revgen/doi.hpp"
#include "revgen/text.hpp"

namespace revgen::corpus {

using nlohmann::json;

const char* screen_status_name(ScreenStatus s) {
    switch (s) {
        case ScreenStatus::unscreened: return "unscreened";
        case ScreenStatus::keyword_pass: return "keyword_pass";
        case ScreenStatus::keyword_reject: return "keyword_reject";
        case ScreenStatus::llm_pass: return "llm_pass";
        case ScreenStatus::llm_reject: return "llm_reject";
    }
    return "?";
}

Result<ScreenStatus> screen_status_from(std::string_view name) {
    using R = Result<ScreenStatus>;
    if (name == "unscreened") return R(ScreenStatus::unscreened);
    if (name == "keyword_pass") return R(ScreenStatus::keyword_pass);
    if (name == "keyword_reject") return R(ScreenStatus::keyword_reject);
    if (name == "llm_pass") return R(ScreenStatus::llm_pass);
    if (name == "llm_reject") return R(ScreenStatus::llm_reject);
    return R::failure("bad_status", "unknown screen status '" + std::string(name) + "'");
}

bool Document::citable() const { return !doi.empty() && !is_surrogate_key(doi); }

bool Document::eligible() const { return !body.empty(); }

std::string document_to_json(const Document& doc) {
    json j;
    j["doi"] = doc.doi;
    j["title"] = doc.title;
    j["abstract"] = doc.abstract;
    j["journal"] = doc.journal;
    j["year"] = doc.year;
    j["body"] = doc.body;
    j["is_review"] = doc.is_review;
    j["screen_status"] = screen_status_name(doc.screen_status);
    return j.dump();
}

Result<Document> document_from_json(std::string_view line) {
    using R = Result<Document>;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return R::failure("bad_record", "corpus record is not a JSON object");
    }
    Document doc;
    doc.doi = j.value("doi", "");
    doc.title = j.value("title", "");
    doc.abstract = j.value("abstract", "");
    doc.journal = j.value("journal", "");
    doc.year = j.value("year", 0);
    doc.body = j.value("body", "");
    doc.is_review = j.value("is_review", false);
    auto status = screen_status_from(j.value("screen_status", "unscreened"));
    if (!status) return status.forward<Document>();
    doc.screen_status = status.value();
    return R(std::move(doc));
}

VoidResult advance_screen(Document& doc, ScreenStatus next) {
    if (next == doc.screen_status) return ok_void();  // idempotent re-stamp
    bool legal = false;
    switch (next) {
        case ScreenStatus::keyword_pass:
        case ScreenStatus::keyword_reject:
            legal = doc.screen_status == ScreenStatus::unscreened;
            break;
        case ScreenStatus::llm_pass:
        case ScreenStatus::llm_reject:
            legal = doc.screen_status == ScreenStatus::keyword_pass;
            break;
        case ScreenStatus::unscreened:
            legal = false;
            break;
    }
    if (!legal) {
        return VoidResult::failure(
            "bad_transition", doc.doi + ": " + screen_status_name(doc.screen_status) + " -> " +
                                  screen_status_name(next));
    }
    doc.screen_status = next;
    return ok_void();
}

// ---------------------------------------------------------------------------
// Journal catalog

namespace {

std::string normalize_name(std::string_view raw) {
    auto tokens = tokenize_words(raw);
    return join(tokens, " ");
}

bool valid_quartile(std::string_view q) {
    return q == "q1" || q == "q2" || q == "q3" || q == "q4";
}

}  // namespace

Result<JournalCatalog> JournalCatalog::from_csv(std::string_view content) {
    using R = Result<JournalCatalog>;
    JournalCatalog cat;
    std::istringstream in{std::string(content)};
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = csv_parse_line(line);
        if (!saw_header) {
            if (fields.size() != 3 || to_lower(trim(fields[0])) != "journal" ||
                to_lower(trim(fields[1])) != "quartile" ||
                to_lower(trim(fields[2])) != "discipline") {
                return R::failure("bad_header",
                                  "journal catalog must start with 'journal,quartile,discipline'");
            }
            saw_header = true;
            continue;
        }
        if (fields.size() != 3) {
            return R::failure("bad_row", "line " + std::to_string(line_no) + ": expected 3 fields");
        }
        JournalEntry entry{trim(fields[0]), to_lower(trim(fields[1])), trim(fields[2])};
        if (!valid_quartile(entry.quartile)) {
            return R::failure("bad_quartile", "line " + std::to_string(line_no) + ": '" +
                                                  entry.quartile + "' is not q1..q4");
        }
        std::string key = normalize_name(entry.journal);
        if (key.empty()) {
            return R::failure("bad_row", "line " + std::to_string(line_no) + ": empty journal name");
        }
        if (cat.by_name_.count(key) != 0) {
            return R::failure("duplicate_journal",
                              "line " + std::to_string(line_no) + ": '" + entry.journal + "'");
        }
        cat.by_name_[key] = cat.entries_.size();
        cat.entries_.push_back(std::move(entry));
    }
    if (!saw_header) return R::failure("bad_header", "journal catalog is empty");
    return R(std::move(cat));
}

Result<JournalCatalog> JournalCatalog::load(const std::filesystem::path& path) {
    auto content = read_file(path);
    if (!content) return content.forward<JournalCatalog>();
    return from_csv(content.value());
}

const JournalEntry* JournalCatalog::find(std::string_view journal) const {
    auto it = by_name_.find(normalize_name(journal));
    if (it == by_name_.end()) return nullptr;
    return &entries_[it->second];
}

bool JournalCatalog::allows(std::string_view journal, std::string_view quartile_mode) const {
    const JournalEntry* entry = find(journal);
    if (entry == nullptr) return false;
    if (quartile_mode == "q1") return entry->quartile == "q1";
    return entry->quartile == "q1" || entry->quartile == "q2" || entry->quartile == "q3";
}

std::vector<JournalEntry> JournalCatalog::tier(std::string_view quartile_mode) const {
    std::vector<JournalEntry> out;
    for (const JournalEntry& e : entries_) {
        if (allows(e.journal, quartile_mode)) out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Screening

VoidResult validate_rule(const FilterRule& rule) {
    std::set<std::string> include;
    for (const auto& k : rule.include_keywords) include.insert(to_lower(trim(k)));
    for (const auto& k : rule.exclude_keywords) {
        if (include.count(to_lower(trim(k))) != 0) {
            return VoidResult::failure("rule_conflict",
                                       "keyword '" + k + "' is both included and excluded");
        }
    }
    return ok_void();
}

namespace {

// Multiword keywords match as a contiguous run of whole tokens.
bool matches_keyword(const std::vector<std::string>& text_tokens, std::string_view keyword) {
    auto needle = tokenize_words(keyword);
    if (needle.empty() || needle.size() > text_tokens.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= text_tokens.size(); ++i) {
        bool all = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            if (text_tokens[i + j] != needle[j]) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

}  // namespace

ScreenDecision keyword_screen(Document& doc, const FilterRule& rule) {
    ScreenDecision decision;
    auto tokens = tokenize_words(doc.title + " " + doc.abstract);
    if (doc.year != 0 && (doc.year < rule.min_year || doc.year > rule.max_year)) {
        decision.reason = "year " + std::to_string(doc.year) + " outside range";
    } else {
        for (const auto& k : rule.exclude_keywords) {
            if (matches_keyword(tokens, k)) {
                decision.reason = "excluded by '" + k + "'";
                break;
            }
        }
        if (decision.reason.empty()) {
            for (const auto& k : rule.include_keywords) {
                if (matches_keyword(tokens, k)) decision.matched_include.push_back(k);
            }
            if (decision.matched_include.empty()) {
                decision.reason = "no include keyword matched";
            } else {
                decision.pass = true;
            }
        }
    }
    // Keyword truth is wholly determined by the rules, so re-screening may
    // overwrite any earlier keyword or LLM decision.
    doc.screen_status = decision.pass ? ScreenStatus::keyword_pass : ScreenStatus::keyword_reject;
    return decision;
}

std::vector<Document> dedupe(std::vector<Document> stubs) {
    std::vector<Document> out;
    std::set<std::string> seen;
    for (auto& stub : stubs) {
        std::string key = stub.doi;
        if (key.empty()) key = surrogate_key(stub.title);
        if (!seen.insert(key).second) continue;
        out.push_back(std::move(stub));
    }
    return out;
}

bool mark_review_type(Document& doc, const std::vector<std::string>& markers) {
    auto tokens = tokenize_words(doc.title + " " + doc.abstract);
    doc.is_review = false;
    for (const auto& m : markers) {
        if (matches_keyword(tokens, m)) {
            doc.is_review = true;
            break;
        }
    }
    return doc.is_review;
}

VoidResult ingest_fulltext(Document& doc, std::string_view raw_text) {
    std::string body = normalize_extracted_text(raw_text);
    if (trim(body).empty()) {
        return VoidResult::failure("empty_body",
                                   doc.doi + ": extracted body is empty, document stays ineligible");
    }
    doc.body = std::move(body);
    return ok_void();
}

VoidResult ingest_fulltext_file(Document& doc, const std::filesystem::path& path) {
    auto content = read_file(path);
    if (!content) {
        return VoidResult::failure("ingest_error",
                                   doc.doi + ": cannot read " + path.string() + ": " +
                                       content.error().message);
    }
    return ingest_fulltext(doc, content.value());
}

// ---------------------------------------------------------------------------
// Funnel

bool funnel_monotone(const FunnelStats& f) {
    return f.retrieved >= f.deduplicated && f.deduplicated >= f.keyword_passed &&
           f.keyword_passed >= f.llm_passed && f.llm_passed >= 0;
}

std::string funnel_to_json(const FunnelStats& f) {
    json j;
    j["retrieved"] = f.retrieved;
    j["deduplicated"] = f.deduplicated;
    j["keyword_passed"] = f.keyword_passed;
    j["llm_passed"] = f.llm_passed;
    return j.dump();
}

Result<FunnelStats> funnel_from_json(std::string_view text) {
    using R = Result<FunnelStats>;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return R::failure("bad_record", "funnel file is not a JSON object");
    }
    FunnelStats f;
    f.retrieved = j.value("retrieved", 0L);
    f.deduplicated = j.value("deduplicated", 0L);
    f.keyword_passed = j.value("keyword_passed", 0L);
    f.llm_passed = j.value("llm_passed", 0L);
    if (!funnel_monotone(f)) {
        return R::failure("integrity", "funnel counters are not monotone");
    }
    return R(f);
}

// ---------------------------------------------------------------------------
// Search providers

namespace {

Result<Document> stub_from_json(const json& j) {
    using R = Result<Document>;
    if (!j.is_object() || !j.contains("title")) {
        return R::failure("bad_record", "search stub lacks a title");
    }
    Document doc;
    doc.title = j.value("title", "");
    doc.abstract = j.value("abstract", "");
    doc.journal = j.value("journal", "");
    doc.year = j.value("year", 0);
    std::string raw_doi = j.value("doi", "");
    if (!raw_doi.empty() && is_doi_like(normalize_doi(raw_doi))) {
        doc.doi = normalize_doi(raw_doi);
    } else {
        doc.doi = surrogate_key(doc.title);
    }
    return R(std::move(doc));
}

bool stub_admitted(const Document& doc, const SearchQuery& query) {
    if (!query.journals.empty()) {
        bool found = false;
        for (const auto& j : query.journals) {
            if (normalize_name(j) == normalize_name(doc.journal)) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    // Unknown years pass here; the keyword screen revisits them.
    if (doc.year != 0 && (doc.year < query.min_year || doc.year > query.max_year)) return false;
    return true;
}

}  // namespace

Result<std::unique_ptr<FixtureSearchProvider>> FixtureSearchProvider::load(
    const std::filesystem::path& dir, int page_size) {
    using R = Result<std::unique_ptr<FixtureSearchProvider>>;
    if (page_size < 1) return R::failure("bad_page", "page size must be positive");
    if (!std::filesystem::is_directory(dir)) {
        return R::failure("io_error", "fixture dir not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    auto provider = std::make_unique<FixtureSearchProvider>();
    provider->page_size_ = page_size;
    for (const auto& f : files) {
        auto content = read_file(f);
        if (!content) return content.forward<std::unique_ptr<FixtureSearchProvider>>();
        json arr = json::parse(content.value(), nullptr, false);
        if (arr.is_discarded() || !arr.is_array()) {
            return R::failure("bad_record", f.filename().string() + ": not a JSON array");
        }
        for (const json& item : arr) {
            auto stub = stub_from_json(item);
            if (!stub) {
                return R::failure("bad_record",
                                  f.filename().string() + ": " + stub.error().message);
            }
            provider->stubs_.push_back(std::move(stub).take());
        }
    }
    return R(std::move(provider));
}

Result<std::vector<Document>> FixtureSearchProvider::search(const SearchQuery& query) {
    using R = Result<std::vector<Document>>;
    if (query.page < 1) return R::failure("bad_page", "page numbers start at 1");
    std::vector<Document> admitted;
    for (const Document& stub : stubs_) {
        if (stub_admitted(stub, query)) admitted.push_back(stub);
    }
    std::size_t begin = static_cast<std::size_t>(query.page - 1) * page_size_;
    std::vector<Document> page;
    for (std::size_t i = begin; i < admitted.size() && i < begin + page_size_; ++i) {
        page.push_back(std::move(admitted[i]));
    }
    return R(std::move(page));
}

HttpSearchProvider::HttpSearchProvider(std::string base_url, std::string api_key, int page_size)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), page_size_(page_size) {}

namespace {

std::string url_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

}  // namespace

Result<std::vector<Document>> HttpSearchProvider::search(const SearchQuery& query) {
    using R = Result<std::vector<Document>>;
    if (query.page < 1) return R::failure("bad_page", "page numbers start at 1");
    std::string host = base_url_;
    std::string prefix;
    std::size_t scheme = host.find("://");
    std::size_t slash = scheme == std::string::npos ? host.find('/') : host.find('/', scheme + 3);
    if (slash != std::string::npos) {
        prefix = host.substr(slash);
        host = host.substr(0, slash);
        if (prefix == "/") prefix.clear();
    }
    std::string url = prefix + "/search?engine=google_scholar&q=" + url_encode(query.text) +
                      "&start=" + std::to_string((query.page - 1) * page_size_) +
                      "&num=" + std::to_string(page_size_) +
                      "&as_ylo=" + std::to_string(query.min_year) +
                      "&as_yhi=" + std::to_string(query.max_year);
    if (!api_key_.empty()) url += "&api_key=" + url_encode(api_key_);

    httplib::Client cli(host);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(120);
    auto res = cli.Get(url);
    if (!res) {
        return R::failure("provider_unreachable", "connection to " + host + " failed");
    }
    if (res->status == 401 || res->status == 402 || res->status == 403 || res->status == 429) {
        return R::failure("quota_exhausted",
                          "provider status " + std::to_string(res->status));
    }
    if (res->status != 200) {
        return R::failure("provider_unreachable",
                          "provider status " + std::to_string(res->status));
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
        return R::failure("provider_unreachable", "provider returned non-JSON body");
    }
    const json* hits = nullptr;
    if (parsed.contains("organic_results")) {
        hits = &parsed["organic_results"];
    } else if (parsed.contains("results")) {
        hits = &parsed["results"];
    }
    if (hits == nullptr || !hits->is_array()) return R(std::vector<Document>{});
    std::vector<Document> out;
    for (const json& item : *hits) {
        json stub;
        stub["title"] = item.value("title", "");
        stub["abstract"] = item.value("snippet", item.value("abstract", ""));
        stub["doi"] = item.value("doi", "");
        stub["journal"] = item.value("journal", item.value("publication", ""));
        stub["year"] = item.value("year", 0);
        auto doc = stub_from_json(stub);
        if (doc && stub_admitted(doc.value(), query)) out.push_back(std::move(doc).take());
    }
    return R(std::move(out));
}

Result<std::vector<Document>> search_all(SearchProvider& provider, SearchQuery query) {
    using R = Result<std::vector<Document>>;
    std::vector<Document> all;
    for (query.page = 1;; ++query.page) {
        auto page = provider.search(query);
        if (!page) return page;
        if (page.value().empty()) break;
        for (auto& doc : page.value()) all.push_back(std::move(doc));
    }
    return R(std::move(all));
}

// ---------------------------------------------------------------------------
// Store

CorpusStore::CorpusStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path CorpusStore::corpus_path() const { return dir_ / "corpus.jsonl"; }

std::filesystem::path CorpusStore::funnel_path() const { return dir_ / "funnel.json"; }

VoidResult CorpusStore::save(const std::vector<Document>& docs) const {
    std::string blob;
    for (const Document& doc : docs) {
        blob += document_to_json(doc);
        blob += '\n';
    }
    std::lock_guard<std::mutex> lock(mu_);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    return write_file_atomic(corpus_path(), blob);
}

Result<std::vector<Document>> CorpusStore::load() const {
    using R = Result<std::vector<Document>>;
    auto lines = read_lines(corpus_path());
    if (!lines) return lines.forward<std::vector<Document>>();
    std::vector<Document> docs;
    std::set<std::string> seen;
    int line_no = 0;
    for (const std::string& line : lines.value()) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto doc = document_from_json(line);
        if (!doc) {
            return R::failure("integrity",
                              "corpus.jsonl line " + std::to_string(line_no) + ": " +
                                  doc.error().message);
        }
        if (!seen.insert(doc.value().doi).second) {
            return R::failure("integrity", "corpus.jsonl line " + std::to_string(line_no) +
                                               ": duplicate doi " + doc.value().doi);
        }
        docs.push_back(std::move(doc).take());
    }
    return R(std::move(docs));
}

VoidResult CorpusStore::save_funnel(const FunnelStats& funnel) const {
    if (!funnel_monotone(funnel)) {
        return VoidResult::failure("integrity", "funnel counters are not monotone");
    }
    std::lock_guard<std::mutex> lock(mu_);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    return write_file_atomic(funnel_path(), funnel_to_json(funnel) + "\n");
}

Result<FunnelStats> CorpusStore::load_funnel() const {
    auto content = read_file(funnel_path());
    if (!content) return content.forward<FunnelStats>();
    return funnel_from_json(content.value());
}

}  // namespace revgen::corpus
