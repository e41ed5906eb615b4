#include "revgen/config.hpp"

#include <cstdlib>

namespace revgen::config {

namespace {

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
    }
    return std::string(line);
}

Result<std::string> parse_scalar_token(std::string_view token, int line_no) {
    using R = Result<std::string>;
    std::string t = trim(token);
    if (t.empty()) {
        return R::failure("config_parse", "line " + std::to_string(line_no) + ": empty value");
    }
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"') {
            return R::failure("config_parse",
                              "line " + std::to_string(line_no) + ": unterminated string");
        }
        return R(replace_all(t.substr(1, t.size() - 2), "\\\"", "\""));
    }
    return R(t);
}

Result<long> to_long(std::string_view key, const std::string& raw) {
    using R = Result<long>;
    char* end = nullptr;
    long v = std::strtol(raw.c_str(), &end, 10);
    if (raw.empty() || end != raw.c_str() + raw.size()) {
        return R::failure("config_value", std::string(key) + ": not an integer: '" + raw + "'");
    }
    return R(v);
}

Result<double> to_double(std::string_view key, const std::string& raw) {
    using R = Result<double>;
    char* end = nullptr;
    double v = std::strtod(raw.c_str(), &end);
    if (raw.empty() || end != raw.c_str() + raw.size()) {
        return R::failure("config_value", std::string(key) + ": not a number: '" + raw + "'");
    }
    return R(v);
}

}  // namespace

bool ConfigFile::has(std::string_view key) const {
    return scalars.count(std::string(key)) > 0 || arrays.count(std::string(key)) > 0;
}

std::string ConfigFile::get_string(std::string_view key, std::string_view fallback) const {
    auto it = scalars.find(std::string(key));
    return it == scalars.end() ? std::string(fallback) : it->second;
}

Result<std::string> ConfigFile::require_string(std::string_view key) const {
    using R = Result<std::string>;
    auto it = scalars.find(std::string(key));
    if (it == scalars.end()) {
        return R::failure("config_missing", "required key '" + std::string(key) + "' not set");
    }
    return R(it->second);
}

Result<long> ConfigFile::get_long(std::string_view key, long fallback) const {
    auto it = scalars.find(std::string(key));
    if (it == scalars.end()) return Result<long>(fallback);
    return to_long(key, it->second);
}

Result<double> ConfigFile::get_double(std::string_view key, double fallback) const {
    auto it = scalars.find(std::string(key));
    if (it == scalars.end()) return Result<double>(fallback);
    return to_double(key, it->second);
}

Result<bool> ConfigFile::get_bool(std::string_view key, bool fallback) const {
    using R = Result<bool>;
    auto it = scalars.find(std::string(key));
    if (it == scalars.end()) return R(fallback);
    if (it->second == "true") return R(true);
    if (it->second == "false") return R(false);
    return R::failure("config_value", std::string(key) + ": expected true/false, got '" +
                                          it->second + "'");
}

std::vector<std::string> ConfigFile::get_list(std::string_view key) const {
    auto it = arrays.find(std::string(key));
    return it == arrays.end() ? std::vector<std::string>{} : it->second;
}

Result<ConfigFile> parse_config(std::string_view content) {
    using R = Result<ConfigFile>;
    ConfigFile out;
    std::string section;
    int line_no = 0;
    for (const std::string& raw_line : split(std::string(content), '\n')) {
        ++line_no;
        std::string line = trim(strip_comment(raw_line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                return R::failure("config_parse",
                                  "line " + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            return R::failure("config_parse",
                              "line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            return R::failure("config_parse",
                              "line " + std::to_string(line_no) + ": empty key or value");
        }
        std::string full_key = section.empty() ? key : section + "." + key;
        if (value.front() == '[') {
            if (value.back() != ']') {
                return R::failure("config_parse",
                                  "line " + std::to_string(line_no) + ": unterminated array");
            }
            std::vector<std::string> items;
            std::string inner = trim(value.substr(1, value.size() - 2));
            if (!inner.empty()) {
                for (const std::string& part : split(inner, ',')) {
                    auto item = parse_scalar_token(part, line_no);
                    if (!item) return item.forward<ConfigFile>();
                    items.push_back(item.value());
                }
            }
            out.arrays[full_key] = std::move(items);
        } else {
            auto scalar = parse_scalar_token(value, line_no);
            if (!scalar) return scalar.forward<ConfigFile>();
            out.scalars[full_key] = scalar.value();
        }
    }
    return R(std::move(out));
}

Result<ConfigFile> load_config(const std::filesystem::path& path) {
    auto content = read_file(path);
    if (!content) return content.forward<ConfigFile>();
    return parse_config(content.value());
}

Result<RunConfig> run_config_from(const ConfigFile& file) {
    using R = Result<RunConfig>;
    RunConfig cfg;

    cfg.include_keywords = file.get_list("corpus.include_keywords");
    cfg.exclude_keywords = file.get_list("corpus.exclude_keywords");
    if (file.has("corpus.review_markers")) cfg.review_markers = file.get_list("corpus.review_markers");
    cfg.field_description = file.get_string("corpus.field_description", "");
    cfg.quartile = file.get_string("corpus.quartile", cfg.quartile);
    if (cfg.quartile != "q1" && cfg.quartile != "q1-q3") {
        return R::failure("config_value", "corpus.quartile must be q1 or q1-q3");
    }

    cfg.provider = file.get_string("gateway.provider", cfg.provider);
    if (cfg.provider != "mock" && cfg.provider != "http") {
        return R::failure("config_value", "gateway.provider must be mock or http");
    }
    cfg.base_url = file.get_string("gateway.base_url", "");
    cfg.api_key = file.get_string("gateway.api_key", "");
    cfg.model = file.get_string("gateway.model", "");

    auto read_int = [&](const char* key, int* dst, long lo, long hi) -> VoidResult {
        auto v = file.get_long(key, *dst);
        if (!v) return v.forward<std::monostate>();
        if (v.value() < lo || v.value() > hi) {
            return VoidResult::failure("config_value", std::string(key) + " out of range [" +
                                                           std::to_string(lo) + "," +
                                                           std::to_string(hi) + "]");
        }
        *dst = static_cast<int>(v.value());
        return ok_void();
    };
    auto read_long = [&](const char* key, long* dst, long lo, long hi) -> VoidResult {
        auto v = file.get_long(key, *dst);
        if (!v) return v.forward<std::monostate>();
        if (v.value() < lo || v.value() > hi) {
            return VoidResult::failure("config_value", std::string(key) + " out of range [" +
                                                           std::to_string(lo) + "," +
                                                           std::to_string(hi) + "]");
        }
        *dst = v.value();
        return ok_void();
    };
    auto read_double = [&](const char* key, double* dst, double lo, double hi) -> VoidResult {
        auto v = file.get_double(key, *dst);
        if (!v) return v.forward<std::monostate>();
        if (v.value() < lo || v.value() > hi) {
            return VoidResult::failure("config_value", std::string(key) + " out of range");
        }
        *dst = v.value();
        return ok_void();
    };

    VoidResult checks[] = {
        read_int("corpus.min_year", &cfg.min_year, 0, 3000),
        read_int("corpus.max_year", &cfg.max_year, 0, 3000),
        read_int("gateway.max_attempts", &cfg.max_attempts, 1, 10),
        read_long("gateway.backoff_base_ms", &cfg.backoff_base_ms, 0, 600000),
        read_long("gateway.backoff_factor", &cfg.backoff_factor, 1, 100),
        read_long("gateway.backoff_jitter_ms", &cfg.backoff_jitter_ms, 0, 60000),
        read_int("gateway.concurrency", &cfg.concurrency, 1, 256),
        read_long("gateway.tokens_per_minute", &cfg.tokens_per_minute, 1, 1000000000L),
        read_long("gateway.rate_window_ms", &cfg.rate_window_ms, 1, 3600000),
        read_long("gateway.context_budget_tokens", &cfg.context_budget_tokens, 100, 10000000),
        read_long("gateway.output_budget_tokens", &cfg.output_budget_tokens, 1, 1000000),
        read_double("gateway.temperature_generation", &cfg.temperature_generation, 0.0, 2.0),
        read_double("gateway.temperature_judging", &cfg.temperature_judging, 0.0, 2.0),
        read_int("stages.repetitions", &cfg.repetitions, 1, 99),
        read_int("stages.target_passes", &cfg.target_passes, 1, 99),
        read_int("stages.generation_ceiling_factor", &cfg.generation_ceiling_factor, 1, 100),
        read_int("stages.group_size", &cfg.group_size, 1, 100),
        read_int("stages.questions_per_topic", &cfg.questions_per_topic, 1, 50),
        read_int("stages.workers", &cfg.workers, 1, 64),
        read_double("stages.min_selectivity", &cfg.min_selectivity, 0.0, 100.0),
        read_double("stages.min_conversion", &cfg.min_conversion, 0.0, 100.0),
        read_double("stages.min_stability_h", &cfg.min_stability_h, 0.0, 1e9),
        read_double("stages.confidence", &cfg.confidence, 0.5, 0.9999),
    };
    for (const VoidResult& c : checks) {
        if (!c.ok()) return c.forward<RunConfig>();
    }

    if (cfg.min_year > cfg.max_year) {
        return R::failure("config_value", "corpus.min_year exceeds corpus.max_year");
    }

    cfg.interval_method = file.get_string("stages.interval_method", cfg.interval_method);
    if (cfg.interval_method != "wilson" && cfg.interval_method != "clopper-pearson") {
        return R::failure("config_value", "stages.interval_method must be wilson or clopper-pearson");
    }

    cfg.run_dir = file.get_string("paths.run_dir", cfg.run_dir.string());
    cfg.mock_dir = file.get_string("paths.mock_dir", "");
    cfg.fixture_dir = file.get_string("paths.fixture_dir", "");
    cfg.journal_catalog = file.get_string("paths.journal_catalog", "");
    cfg.mining_schema_file = file.get_string("paths.mining_schema", "");
    cfg.labels_file = file.get_string("paths.labels", "");

    // Secrets prefer the environment over the file.
    if (const char* v = std::getenv("REVGEN_API_KEY")) cfg.api_key = v;
    if (const char* v = std::getenv("REVGEN_BASE_URL")) cfg.base_url = v;
    if (const char* v = std::getenv("REVGEN_MODEL")) cfg.model = v;

    if (cfg.provider == "http" && cfg.base_url.empty()) {
        return R::failure("config_missing", "gateway.base_url required for the http provider");
    }
    return R(std::move(cfg));
}

Result<RunConfig> load_run_config(const std::filesystem::path& path) {
    auto file = load_config(path);
    if (!file) return file.forward<RunConfig>();
    return run_config_from(file.value());
}

}  // namespace revgen::config
