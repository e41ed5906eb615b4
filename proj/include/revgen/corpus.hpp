#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "revgen/config.hpp"
#include "revgen/util.hpp"

namespace revgen::corpus {

// Screening walks strictly forward: keyword decisions come first, LLM
// decisions only ever refine a keyword pass.
enum class ScreenStatus { unscreened, keyword_pass, keyword_reject, llm_pass, llm_reject };

const char* screen_status_name(ScreenStatus s);
Result<ScreenStatus> screen_status_from(std::string_view name);

struct Document {
    std::string doi;  // normalized DOI, or a non-citable surrogate key
    std::string title;
    std::string abstract;
    std::string journal;
    int year = 0;
    std::string body;
    bool is_review = false;
    ScreenStatus screen_status = ScreenStatus::unscreened;

    bool citable() const;   // surrogate-keyed documents are not
    bool eligible() const;  // has a non-empty ingested body
};

std::string document_to_json(const Document& doc);
Result<Document> document_from_json(std::string_view line);

// Legal status moves only; encodes "llm decisions require a keyword pass".
VoidResult advance_screen(Document& doc, ScreenStatus next);

struct JournalEntry {
    std::string journal;
    std::string quartile;  // "q1".."q4"
    std::string discipline;
};

// Loaded from CSV `journal,quartile,discipline`. Lookup is case- and
// whitespace-insensitive; duplicate names after normalization are rejected.
class JournalCatalog {
public:
    static Result<JournalCatalog> from_csv(std::string_view content);
    static Result<JournalCatalog> load(const std::filesystem::path& path);

    const JournalEntry* find(std::string_view journal) const;
    // quartile_mode is "q1" or "q1-q3".
    bool allows(std::string_view journal, std::string_view quartile_mode) const;
    std::vector<JournalEntry> tier(std::string_view quartile_mode) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<JournalEntry> entries_;
    std::map<std::string, std::size_t> by_name_;  // normalized name -> index
};

struct FilterRule {
    std::vector<std::string> include_keywords;
    std::vector<std::string> exclude_keywords;
    int min_year = 0;
    int max_year = 9999;
};

// Include and exclude sets must not overlap.
VoidResult validate_rule(const FilterRule& rule);

struct ScreenDecision {
    bool pass = false;
    std::vector<std::string> matched_include;
    std::string reason;  // set when rejected
};

// Whole-token, case-insensitive match over title+abstract; multiword
// keywords match as contiguous token runs. Also stamps doc.screen_status.
ScreenDecision keyword_screen(Document& doc, const FilterRule& rule);

// First occurrence wins; DOI-less stubs collapse on normalized title.
std::vector<Document> dedupe(std::vector<Document> stubs);

// Flags survey-style articles from title/abstract marker terms; stamps and
// returns doc.is_review.
bool mark_review_type(Document& doc, const std::vector<std::string>& markers);

VoidResult ingest_fulltext(Document& doc, std::string_view raw_text);
VoidResult ingest_fulltext_file(Document& doc, const std::filesystem::path& path);

struct FunnelStats {
    long retrieved = 0;
    long deduplicated = 0;
    long keyword_passed = 0;
    long llm_passed = 0;
};

// retrieved >= deduplicated >= keyword_passed >= llm_passed
bool funnel_monotone(const FunnelStats& f);
std::string funnel_to_json(const FunnelStats& f);
Result<FunnelStats> funnel_from_json(std::string_view text);

struct SearchQuery {
    std::string text;
    std::vector<std::string> journals;  // empty = any journal
    int min_year = 0;
    int max_year = 9999;
    int page = 1;  // 1-based
};

// Metadata-only search. Implementations never invent DOIs: stubs arriving
// without one get a deterministic surrogate key instead.
class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    virtual Result<std::vector<Document>> search(const SearchQuery& query) = 0;
};

// Replays stub lists from a directory of JSON files (each an array of stub
// objects), concatenated in filename order and served in fixed-size pages.
// The query text is ignored; journal and year constraints still apply.
class FixtureSearchProvider : public SearchProvider {
public:
    static Result<std::unique_ptr<FixtureSearchProvider>> load(const std::filesystem::path& dir,
                                                               int page_size = 20);
    Result<std::vector<Document>> search(const SearchQuery& query) override;

private:
    std::vector<Document> stubs_;
    int page_size_ = 20;
};

// Scholar-style HTTP metadata search (SerpAPI wire shape).
class HttpSearchProvider : public SearchProvider {
public:
    HttpSearchProvider(std::string base_url, std::string api_key, int page_size = 20);
    Result<std::vector<Document>> search(const SearchQuery& query) override;

private:
    std::string base_url_;
    std::string api_key_;
    int page_size_;
};

// Run all pages of one query through a provider, accumulating stubs until a
// short or empty page arrives.
Result<std::vector<Document>> search_all(SearchProvider& provider, SearchQuery query);

// corpus.jsonl + funnel.json persistence. Writes are serialized; loads are
// safe to call concurrently with each other.
class CorpusStore {
public:
    explicit CorpusStore(std::filesystem::path dir);

    VoidResult save(const std::vector<Document>& docs) const;
    Result<std::vector<Document>> load() const;
    VoidResult save_funnel(const FunnelStats& funnel) const;
    Result<FunnelStats> load_funnel() const;

    std::filesystem::path corpus_path() const;
    std::filesystem::path funnel_path() const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

}  // namespace revgen::corpus
