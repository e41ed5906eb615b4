#pragma once

#include <condition_variable>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "revgen/config.hpp"
#include "revgen/schemas.hpp"
#include "revgen/text.hpp"
#include "revgen/util.hpp"

namespace revgen::gateway {

// Prompt-template classification; drives the default sampling temperature
// (generation stages sample for diversity, judging stages want stability).
enum class Stage { screen, outline, extract, aggregate, compose, compress, mine, compare, consistency };

const char* stage_name(Stage s);

struct PromptTemplate {
    std::string id;
    Stage stage = Stage::extract;
    bool judging = false;  // true forces temperature 0 by default
    std::string body;      // placeholders as {{name}}
};

// Pure substitution; every {{placeholder}} must be covered by vars.
Result<std::string> render(const PromptTemplate& tmpl,
                           const std::map<std::string, std::string>& vars);

// Identifies a work item for scripting, logging, and ledger keys. Empty
// fields are legal (e.g. outline calls carry no document).
struct WorkKey {
    std::string stage;  // template id, not the Stage enum
    std::string doc;
    std::string group;
};

struct CompletionRequest {
    std::string template_id;
    std::map<std::string, std::string> vars;
    WorkKey key;
    long max_output_tokens = 8000;
    double temperature = -1.0;  // negative = use the template's default
};

struct CompletionOutcome {
    std::string text;
    int attempt = 1;  // 1-based attempt that succeeded
};

struct StructuredOutcome {
    schemas::Structured structured;
    int attempt = 1;
};

// Provider abstraction: returns completion text or a typed failure with code
// "transient" (retryable) or "terminal".
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual Result<std::string> complete(const WorkKey& key, const std::string& prompt,
                                         double temperature, long max_output_tokens) = 0;
};

// Deterministic scripted provider. Scripts are JSON files in a directory;
// each file holds an array of entries:
//   {"stage": "...", "doc": "...", "group": "...", "responses": [...]}
// Omitted stage/doc/group act as wildcards. A response is a plain string, or
// {"fail": "transient"|"terminal"}, or {"text": "...", "delay_ms": N}.
// Lookup precedence: (stage,doc,group) > (stage,doc,*) > (stage,*,group) >
// (stage,*,*) > (*,*,*). Each distinct request key keeps its own cursor into
// the matched entry's response list (cycling), so concurrent cells stay
// deterministic regardless of scheduling.
class MockClient : public LlmClient {
public:
    static Result<std::unique_ptr<MockClient>> load(const std::filesystem::path& dir);
    static std::unique_ptr<MockClient> from_json(const std::string& json_array_text);

    Result<std::string> complete(const WorkKey& key, const std::string& prompt,
                                 double temperature, long max_output_tokens) override;

    // Instrumentation for concurrency tests.
    int max_in_flight() const;
    long calls() const;

private:
    struct ScriptEntry {
        std::string stage, doc, group;
        struct Response {
            std::string text;
            std::string fail;  // "", "transient", "terminal"
            long delay_ms = 0;
        };
        std::vector<Response> responses;
    };
    const ScriptEntry* match(const WorkKey& key) const;

    std::vector<ScriptEntry> entries_;
    std::map<std::string, std::size_t> cursors_;  // per exact request key
    mutable std::mutex mu_;
    int in_flight_ = 0;
    int max_in_flight_ = 0;
    long calls_ = 0;
};

// Chat-completions HTTP provider (OpenAI-style wire format).
class HttpClient : public LlmClient {
public:
    HttpClient(std::string base_url, std::string api_key, std::string model);
    Result<std::string> complete(const WorkKey& key, const std::string& prompt,
                                 double temperature, long max_output_tokens) override;

private:
    std::string base_url_;
    std::string api_key_;
    std::string model_;
};

// Concurrency cap plus a rolling token window shared by all callers.
class RateLimiter {
public:
    RateLimiter(int max_concurrent, long tokens_per_window, long window_ms);
    void acquire(long tokens);
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int cap_;
    long window_budget_;
    long window_ms_;
    int in_flight_ = 0;
    long window_used_ = 0;
    std::chrono::steady_clock::time_point window_start_;
};

// The single entry point for every LLM call: renders, enforces the context
// budget, rate-limits, retries transient provider failures with exponential
// backoff, and appends one audit line per attempt to llm_log.jsonl.
class Gateway {
public:
    Gateway(std::unique_ptr<LlmClient> client, const config::RunConfig& cfg);

    void set_log_path(const std::filesystem::path& path);
    void set_token_estimator(TokenEstimator est);

    const PromptTemplate* find_template(std::string_view id) const;
    Result<std::string> render_request(const CompletionRequest& req) const;

    // One logical completion; provider transient failures retry up to
    // max_attempts with backoff.
    Result<CompletionOutcome> complete(const CompletionRequest& req);

    // Completion + schema gate in one loop: a format failure consumes an
    // attempt from the same budget as a transient failure (no backoff sleep,
    // the provider is healthy). Error code "format_exhausted" when every
    // attempt parsed badly.
    Result<StructuredOutcome> complete_structured(const CompletionRequest& req,
                                                  std::string_view schema);

    RateLimiter& limiter() { return limiter_; }

private:
    Result<std::string> attempt_once(const CompletionRequest& req, const std::string& prompt,
                                     double temperature, int attempt);
    void log_attempt(const WorkKey& key, int attempt, const std::string& prompt,
                     const std::string& response, std::string_view outcome);
    void backoff_sleep(int attempt);
    double default_temperature(const CompletionRequest& req) const;

    std::unique_ptr<LlmClient> client_;
    std::vector<PromptTemplate> templates_;
    RateLimiter limiter_;
    int max_attempts_;
    long backoff_base_ms_;
    long backoff_factor_;
    long backoff_jitter_ms_;
    long context_budget_;
    double temp_generation_;
    double temp_judging_;
    TokenEstimator estimator_;
    std::filesystem::path log_path_;
    std::mutex log_mu_;
    std::mt19937 jitter_rng_;
    std::mutex rng_mu_;
};

// The built-in template set used by the pipeline stages.
std::vector<PromptTemplate> builtin_templates();

}  // namespace revgen::gateway
