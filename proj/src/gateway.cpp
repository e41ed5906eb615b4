#include "revgen/gateway.hpp"

#include <algorithm>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace revgen::gateway {

using nlohmann::json;

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::screen: return "screen";
        case Stage::outline: return "outline";
        case Stage::extract: return "extract";
        case Stage::aggregate: return "aggregate";
        case Stage::compose: return "compose";
        case Stage::compress: return "compress";
        case Stage::mine: return "mine";
        case Stage::compare: return "compare";
        case Stage::consistency: return "consistency";
    }
    return "?";
}

Result<std::string> render(const PromptTemplate& tmpl,
                           const std::map<std::string, std::string>& vars) {
    using R = Result<std::string>;
    std::string out;
    out.reserve(tmpl.body.size());
    std::size_t pos = 0;
    const std::string& body = tmpl.body;
    // Single pass: substituted values are never rescanned, so braces inside
    // literature text survive verbatim.
    while (pos < body.size()) {
        std::size_t open = body.find("{{", pos);
        if (open == std::string::npos) {
            out.append(body, pos, body.size() - pos);
            break;
        }
        out.append(body, pos, open - pos);
        std::size_t close = body.find("}}", open + 2);
        if (close == std::string::npos) {
            return R::failure("bad_template",
                              "template '" + tmpl.id + "' has an unterminated placeholder");
        }
        std::string name = trim(body.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it == vars.end()) {
            return R::failure("missing_variable", name);
        }
        out.append(it->second);
        pos = close + 2;
    }
    return R(std::move(out));
}

// ---------------------------------------------------------------------------
// MockClient

Result<std::unique_ptr<MockClient>> MockClient::load(const std::filesystem::path& dir) {
    using R = Result<std::unique_ptr<MockClient>>;
    if (!std::filesystem::is_directory(dir)) {
        return R::failure("io_error", "mock dir not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    auto client = std::make_unique<MockClient>();
    for (const auto& f : files) {
        auto content = read_file(f);
        if (!content) return content.forward<std::unique_ptr<MockClient>>();
        auto partial = from_json(content.value());
        if (!partial) {
            return R::failure("bad_script", f.filename().string() + ": malformed mock script");
        }
        for (auto& e : partial->entries_) client->entries_.push_back(std::move(e));
    }
    return R(std::move(client));
}

std::unique_ptr<MockClient> MockClient::from_json(const std::string& json_array_text) {
    json arr = json::parse(json_array_text, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) return nullptr;
    auto client = std::make_unique<MockClient>();
    for (const json& item : arr) {
        if (!item.is_object() || !item.contains("responses") || !item["responses"].is_array()) {
            return nullptr;
        }
        ScriptEntry entry;
        entry.stage = item.value("stage", "");
        entry.doc = item.value("doc", "");
        entry.group = item.value("group", "");
        for (const json& r : item["responses"]) {
            ScriptEntry::Response resp;
            if (r.is_string()) {
                resp.text = r.get<std::string>();
            } else if (r.is_object()) {
                resp.fail = r.value("fail", "");
                resp.text = r.value("text", "");
                resp.delay_ms = r.value("delay_ms", 0L);
                if (!resp.fail.empty() && resp.fail != "transient" && resp.fail != "terminal") {
                    return nullptr;
                }
            } else {
                return nullptr;
            }
            entry.responses.push_back(std::move(resp));
        }
        if (entry.responses.empty()) return nullptr;
        client->entries_.push_back(std::move(entry));
    }
    return client;
}

const MockClient::ScriptEntry* MockClient::match(const WorkKey& key) const {
    const ScriptEntry* best = nullptr;
    int best_score = -1;
    for (const ScriptEntry& e : entries_) {
        if (!e.stage.empty() && e.stage != key.stage) continue;
        if (!e.doc.empty() && e.doc != key.doc) continue;
        if (!e.group.empty() && e.group != key.group) continue;
        int score = (e.stage.empty() ? 0 : 4) + (e.doc.empty() ? 0 : 2) + (e.group.empty() ? 0 : 1);
        if (score > best_score) {
            best_score = score;
            best = &e;
        }
    }
    return best;
}

Result<std::string> MockClient::complete(const WorkKey& key, const std::string& prompt,
                                         double temperature, long max_output_tokens) {
    using R = Result<std::string>;
    (void)prompt;
    (void)temperature;
    (void)max_output_tokens;
    ScriptEntry::Response resp;
    {
        std::lock_guard<std::mutex> lock(mu_);
        const ScriptEntry* entry = match(key);
        if (entry == nullptr) {
            return R::failure("terminal", "no mock script entry for stage '" + key.stage +
                                              "' doc '" + key.doc + "' group '" + key.group + "'");
        }
        std::string cursor_key = key.stage + '\x1f' + key.doc + '\x1f' + key.group;
        std::size_t idx = cursors_[cursor_key]++ % entry->responses.size();
        resp = entry->responses[idx];
        ++calls_;
        ++in_flight_;
        max_in_flight_ = std::max(max_in_flight_, in_flight_);
    }
    if (resp.delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(resp.delay_ms));
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        --in_flight_;
    }
    if (!resp.fail.empty()) {
        return R::failure(resp.fail, "scripted " + resp.fail + " failure");
    }
    return R(std::move(resp.text));
}

int MockClient::max_in_flight() const {
    std::lock_guard<std::mutex> lock(mu_);
    return max_in_flight_;
}

long MockClient::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
}

// ---------------------------------------------------------------------------
// HttpClient

HttpClient::HttpClient(std::string base_url, std::string api_key, std::string model)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), model_(std::move(model)) {}

Result<std::string> HttpClient::complete(const WorkKey& key, const std::string& prompt,
                                         double temperature, long max_output_tokens) {
    using R = Result<std::string>;
    (void)key;
    // Split scheme://host[:port] from any path prefix in the configured URL.
    std::string host = base_url_;
    std::string prefix;
    std::size_t scheme = host.find("://");
    std::size_t slash = scheme == std::string::npos ? host.find('/') : host.find('/', scheme + 3);
    if (slash != std::string::npos) {
        prefix = host.substr(slash);
        host = host.substr(0, slash);
        if (prefix == "/") prefix.clear();
    }
    json body;
    body["model"] = model_;
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = temperature;
    body["max_tokens"] = max_output_tokens;

    httplib::Client cli(host);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(300);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = cli.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        return R::failure("transient", "connection to " + host + " failed");
    }
    if (res->status == 429 || res->status >= 500) {
        return R::failure("transient", "provider status " + std::to_string(res->status));
    }
    if (res->status != 200) {
        return R::failure("terminal", "provider status " + std::to_string(res->status) + ": " +
                                          res->body.substr(0, 200));
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty() ||
        !parsed["choices"][0].contains("message")) {
        return R::failure("terminal", "unexpected provider response shape");
    }
    return R(parsed["choices"][0]["message"].value("content", ""));
}

// ---------------------------------------------------------------------------
// RateLimiter

RateLimiter::RateLimiter(int max_concurrent, long tokens_per_window, long window_ms)
    : cap_(max_concurrent),
      window_budget_(tokens_per_window),
      window_ms_(window_ms),
      window_start_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire(long tokens) {
    std::unique_lock<std::mutex> lock(mu_);
    for (;;) {
        auto now = std::chrono::steady_clock::now();
        if (now - window_start_ >= std::chrono::milliseconds(window_ms_)) {
            window_start_ = now;
            window_used_ = 0;
        }
        // A single request larger than the whole window budget is admitted
        // alone into a fresh window rather than deadlocking.
        bool tokens_ok = window_used_ + tokens <= window_budget_ || window_used_ == 0;
        if (in_flight_ < cap_ && tokens_ok) {
            ++in_flight_;
            window_used_ += tokens;
            return;
        }
        cv_.wait_for(lock, std::chrono::milliseconds(5));
    }
}

void RateLimiter::release() {
    {
        std::lock_guard<std::mutex> lock(mu_);
        --in_flight_;
    }
    cv_.notify_all();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::unique_ptr<LlmClient> client, const config::RunConfig& cfg)
    : client_(std::move(client)),
      templates_(builtin_templates()),
      limiter_(cfg.concurrency, cfg.tokens_per_minute, cfg.rate_window_ms),
      max_attempts_(cfg.max_attempts),
      backoff_base_ms_(cfg.backoff_base_ms),
      backoff_factor_(cfg.backoff_factor),
      backoff_jitter_ms_(cfg.backoff_jitter_ms),
      context_budget_(cfg.context_budget_tokens),
      temp_generation_(cfg.temperature_generation),
      temp_judging_(cfg.temperature_judging),
      estimator_(default_token_estimate),
      jitter_rng_(std::random_device{}()) {}

void Gateway::set_log_path(const std::filesystem::path& path) { log_path_ = path; }

void Gateway::set_token_estimator(TokenEstimator est) { estimator_ = std::move(est); }

const PromptTemplate* Gateway::find_template(std::string_view id) const {
    for (const PromptTemplate& t : templates_) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

Result<std::string> Gateway::render_request(const CompletionRequest& req) const {
    using R = Result<std::string>;
    const PromptTemplate* tmpl = find_template(req.template_id);
    if (tmpl == nullptr) {
        return R::failure("unknown_template", "no template '" + req.template_id + "'");
    }
    return render(*tmpl, req.vars);
}

double Gateway::default_temperature(const CompletionRequest& req) const {
    const PromptTemplate* tmpl = find_template(req.template_id);
    if (tmpl == nullptr) return temp_generation_;
    if (tmpl->judging || tmpl->stage == Stage::screen || tmpl->stage == Stage::compare ||
        tmpl->stage == Stage::consistency) {
        return temp_judging_;
    }
    return temp_generation_;
}

void Gateway::log_attempt(const WorkKey& key, int attempt, const std::string& prompt,
                          const std::string& response, std::string_view outcome) {
    if (log_path_.empty()) return;
    json j;
    j["stage"] = key.stage;
    j["doc"] = key.doc;
    j["group"] = key.group;
    j["attempt"] = attempt;
    j["prompt_hash"] = fnv1a64_hex(prompt);
    j["response_hash"] = response.empty() ? "" : fnv1a64_hex(response);
    j["outcome"] = std::string(outcome);
    std::lock_guard<std::mutex> lock(log_mu_);
    (void)append_line(log_path_, j.dump());
}

void Gateway::backoff_sleep(int attempt) {
    long ms = backoff_base_ms_;
    for (int i = 1; i < attempt; ++i) ms *= backoff_factor_;
    if (backoff_jitter_ms_ > 0) {
        std::lock_guard<std::mutex> lock(rng_mu_);
        ms += std::uniform_int_distribution<long>(0, backoff_jitter_ms_)(jitter_rng_);
    }
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

Result<std::string> Gateway::attempt_once(const CompletionRequest& req, const std::string& prompt,
                                          double temperature, int attempt) {
    long tokens = estimator_(prompt) + req.max_output_tokens;
    limiter_.acquire(tokens);
    auto resp = client_->complete(req.key, prompt, temperature, req.max_output_tokens);
    limiter_.release();
    (void)attempt;
    return resp;
}

Result<CompletionOutcome> Gateway::complete(const CompletionRequest& req) {
    using R = Result<CompletionOutcome>;
    auto prompt = render_request(req);
    if (!prompt) return prompt.forward<CompletionOutcome>();
    if (estimator_(prompt.value()) > context_budget_) {
        return R::failure("budget_exceeded",
                          "rendered prompt exceeds the context budget; split or compress first");
    }
    double temperature = req.temperature >= 0.0 ? req.temperature : default_temperature(req);
    std::string last_message;
    for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
        auto resp = attempt_once(req, prompt.value(), temperature, attempt);
        if (resp.ok()) {
            log_attempt(req.key, attempt, prompt.value(), resp.value(), "ok");
            return R(CompletionOutcome{std::move(resp).take(), attempt});
        }
        log_attempt(req.key, attempt, prompt.value(), "", resp.error().code);
        if (resp.error().code == "terminal") {
            return R::failure("terminal", resp.error().message);
        }
        last_message = resp.error().message;
        if (attempt < max_attempts_) backoff_sleep(attempt);
    }
    return R::failure("retry_exhausted", "gave up after " + std::to_string(max_attempts_) +
                                             " attempts: " + last_message);
}

Result<StructuredOutcome> Gateway::complete_structured(const CompletionRequest& req,
                                                       std::string_view schema) {
    using R = Result<StructuredOutcome>;
    auto prompt = render_request(req);
    if (!prompt) return prompt.forward<StructuredOutcome>();
    if (estimator_(prompt.value()) > context_budget_) {
        return R::failure("budget_exceeded",
                          "rendered prompt exceeds the context budget; split or compress first");
    }
    double temperature = req.temperature >= 0.0 ? req.temperature : default_temperature(req);
    std::string last_message;
    bool saw_format_failure = false;
    for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
        auto resp = attempt_once(req, prompt.value(), temperature, attempt);
        if (!resp.ok()) {
            log_attempt(req.key, attempt, prompt.value(), "", resp.error().code);
            if (resp.error().code == "terminal") {
                return R::failure("terminal", resp.error().message);
            }
            last_message = resp.error().message;
            if (attempt < max_attempts_) backoff_sleep(attempt);
            continue;
        }
        auto parsed = schemas::parse_structured(resp.value(), schema);
        if (parsed.ok()) {
            log_attempt(req.key, attempt, prompt.value(), resp.value(), "ok");
            return R(StructuredOutcome{std::move(parsed).take(), attempt});
        }
        // Format failure: consumes an attempt but needs no backoff, the
        // provider itself is healthy.
        log_attempt(req.key, attempt, prompt.value(), resp.value(), "format_fail");
        saw_format_failure = true;
        last_message = parsed.error().code + ": " + parsed.error().message;
    }
    return R::failure(saw_format_failure ? "format_exhausted" : "retry_exhausted",
                      "gave up after " + std::to_string(max_attempts_) +
                          " attempts: " + last_message);
}

// ---------------------------------------------------------------------------
// Built-in templates

std::vector<PromptTemplate> builtin_templates() {
    std::vector<PromptTemplate> out;
    auto add = [&](const char* id, Stage stage, bool judging, const char* body) {
        out.push_back(PromptTemplate{id, stage, judging, body});
    };

    add("screen", Stage::screen, true,
        "Decide whether this article belongs to the field described below.\n"
        "Field: {{field}}\nTitle: {{title}}\nAbstract: {{abstract}}\n"
        "Answer with exactly <verdict><choice>yes</choice></verdict> or "
        "<verdict><choice>no</choice></verdict>.");

    add("outline-extract", Stage::outline, false,
        "Extract the main topics a literature review in this field should cover from the "
        "review articles below. Reply as numbered lines, one topic per line, in the form\n"
        "1. Topic title | one-sentence rationale\n\nReview articles:\n{{reviews}}");

    add("outline-draft", Stage::outline, false,
        "Draft the topics a literature review of the field below should cover. Reply as "
        "numbered lines, one topic per line, in the form\n"
        "1. Topic title | one-sentence rationale\n\nField description:\n{{field}}");

    add("questions", Stage::outline, false,
        "For each topic in the outline below, write about {{per_topic}} extraction questions "
        "answerable from a single article's text. Reply with the outline echoed back: numbered "
        "topic lines (1. Title | rationale) each followed by indented question lines starting "
        "with 'Q: '.\n\nOutline:\n{{outline}}");

    add("extract", Stage::extract, false,
        "Answer the questions below strictly from the article text. For every question return "
        "an <item qid=\"...\"> with <relevant>true/false</relevant>, an <answer> (empty when "
        "irrelevant), and a verbatim <evidence> quote. Wrap all items in one <answers> "
        "element.\n\nQuestions:\n{{questions}}\n\nArticle:\n{{document}}");

    add("relevance", Stage::extract, true,
        "Does the answer below actually address the question, judging only by the evidence "
        "quote? Question: {{question}}\nAnswer: {{answer}}\nEvidence: {{evidence}}\n"
        "Reply <verdict><choice>yes</choice></verdict> or <verdict><choice>no</choice></verdict>.");

    add("aggregate", Stage::aggregate, false,
        "Merge the repeated answers below into one consolidated answer to the question. Reply "
        "as <answers><item qid=\"{{qid}}\"><relevant>true</relevant><answer>merged text"
        "</answer><evidence>strongest quote</evidence></item></answers>.\n\n"
        "Question: {{question}}\n\nAnswers:\n{{answers}}");

    add("consistency", Stage::consistency, true,
        "Rate how consistent the aggregated answer is with the raw answer, as an integer "
        "percentage. Reply <consistency><percent>NN</percent></consistency>.\n\n"
        "Raw: {{raw}}\n\nAggregated: {{aggregate}}");

    add("compose", Stage::compose, false,
        "Write one review paragraph on the topic below using only the evidence provided. Cite "
        "every conclusion inline with the source DOI in square brackets. Reply as\n"
        "<paragraph topic=\"{{topic}}\"><text>...</text><references><doi>...</doi>"
        "</references></paragraph>\nlisting every cited DOI under <references>.\n\n"
        "Evidence:\n{{evidence}}");

    add("compress", Stage::compress, false,
        "Condense the evidence below, keeping every DOI attribution in square brackets intact "
        "and keeping one statement per source. Reply with plain text only.\n\n{{text}}");

    add("score", Stage::compare, true,
        "Score the paragraph below for the topic on a 0-10 scale considering accuracy, "
        "coverage, and citation discipline. Reply <verdict><score>N</score></verdict>.\n\n"
        "Topic: {{topic}}\n\nParagraph:\n{{text}}");

    add("compare", Stage::compare, true,
        "Compare the two texts on this criterion: {{item}}. Think step by step, then reply "
        "<verdict><choice>A</choice></verdict>, <verdict><choice>B</choice></verdict>, or "
        "<verdict><choice>tie</choice></verdict>.\n\nText A:\n{{first}}\n\nText B:\n{{second}}");

    add("mine", Stage::mine, false,
        "Extract the fields listed below from the article. Reply as one <record> element with "
        "one <field name=\"...\">value</field> per field you can find; omit fields the article "
        "does not state.\n\nFields:\n{{fields}}\n\nArticle:\n{{document}}");

    add("segment", Stage::outline, true,
        "Split the review below into semantically coherent fragments. For each fragment reply "
        "two lines: a numbered topic line (1. topic description) and then\n"
        "ANCHOR: the verbatim opening words of the fragment\n\nReview:\n{{review}}");

    add("direct", Stage::compose, false,
        "Write one review paragraph about the topic below directly from the source texts. "
        "Reply with plain text.\n\nTopic: {{topic}}\n\nSources:\n{{sources}}");

    return out;
}

}  // namespace revgen::gateway
