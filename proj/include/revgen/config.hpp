#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "revgen/util.hpp"

namespace revgen::config {

// Parsed key-value file: `[section]` headers, `key = value` lines, `#`
// comments. Values are quoted strings, numbers, booleans, or flat arrays.
// Keys flatten to "section.key".
class ConfigFile {
public:
    bool has(std::string_view key) const;

    std::string get_string(std::string_view key, std::string_view fallback) const;
    Result<std::string> require_string(std::string_view key) const;
    Result<long> get_long(std::string_view key, long fallback) const;
    Result<double> get_double(std::string_view key, double fallback) const;
    Result<bool> get_bool(std::string_view key, bool fallback) const;
    std::vector<std::string> get_list(std::string_view key) const;

    std::map<std::string, std::string> scalars;
    std::map<std::string, std::vector<std::string>> arrays;
};

Result<ConfigFile> parse_config(std::string_view content);
Result<ConfigFile> load_config(const std::filesystem::path& path);

// Everything a run needs, with the documented defaults baked in.
struct RunConfig {
    // corpus
    std::vector<std::string> include_keywords;
    std::vector<std::string> exclude_keywords;
    std::vector<std::string> review_markers{"review", "progress", "perspective", "advances"};
    int min_year = 1900;
    int max_year = 2100;
    std::string quartile = "q1";  // or "q1-q3"
    std::string field_description;

    // gateway
    std::string provider = "mock";  // mock | http
    std::string base_url;
    std::string api_key;
    std::string model;
    int max_attempts = 3;
    long backoff_base_ms = 1000;
    long backoff_factor = 4;
    long backoff_jitter_ms = 250;
    int concurrency = 4;
    long tokens_per_minute = 1000000;
    long rate_window_ms = 60000;
    long context_budget_tokens = 24000;
    long output_budget_tokens = 8000;
    double temperature_generation = 0.7;
    double temperature_judging = 0.0;

    // stage parameters
    int repetitions = 5;       // extraction/mining repeats per cell
    int target_passes = 9;     // gate-passing drafts per topic before judging
    int generation_ceiling_factor = 5;
    int group_size = 7;
    int questions_per_topic = 4;
    int workers = 4;
    double min_selectivity = 85.0;
    double min_conversion = 45.0;
    double min_stability_h = 1.0;
    std::string interval_method = "wilson";  // or "clopper-pearson"
    double confidence = 0.95;

    // paths
    std::filesystem::path run_dir = "run";
    std::filesystem::path mock_dir;
    std::filesystem::path fixture_dir;
    std::filesystem::path journal_catalog;
    std::filesystem::path mining_schema_file;
    std::filesystem::path labels_file;
};

// Loads the file, applies defaults, validates ranges. Environment variables
// REVGEN_API_KEY / REVGEN_BASE_URL / REVGEN_MODEL override the file so
// secrets stay out of checked-in configs.
Result<RunConfig> load_run_config(const std::filesystem::path& path);
Result<RunConfig> run_config_from(const ConfigFile& file);

}  // namespace revgen::config
