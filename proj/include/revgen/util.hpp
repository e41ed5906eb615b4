#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace revgen {

// Typed failure carried by Result. `code` is a short stable identifier
// (e.g. "unclosed_tag", "missing_variable"); `message` is human-readable.
struct Error {
    std::string code;
    std::string message;
};

template <typename T>
class [[nodiscard]] Result {
public:
    Result(T value) : data_(std::move(value)) {}
    Result(Error err) : data_(std::move(err)) {}

    static Result failure(std::string code, std::string message) {
        return Result(Error{std::move(code), std::move(message)});
    }

    bool ok() const { return std::holds_alternative<T>(data_); }
    explicit operator bool() const { return ok(); }

    const T& value() const& { return std::get<T>(data_); }
    T& value() & { return std::get<T>(data_); }
    T&& take() && { return std::get<T>(std::move(data_)); }

    const Error& error() const { return std::get<Error>(data_); }

    // Propagation helper: rewrap this error under a different value type.
    template <typename U>
    Result<U> forward() const {
        return Result<U>(error());
    }

private:
    std::variant<T, Error> data_;
};

using VoidResult = Result<std::monostate>;
inline VoidResult ok_void() { return VoidResult(std::monostate{}); }

// ---------------------------------------------------------------------------
// strings

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

// Lowercase alphanumeric word runs; everything else is a separator.
std::vector<std::string> tokenize_words(std::string_view s);

// Whole-token match of `term` (possibly multi-word) against the token stream of `text`.
bool contains_whole_token(std::string_view text, std::string_view term);

// ---------------------------------------------------------------------------
// hashing (deterministic across runs/platforms; used for surrogate keys and audit hashes)

std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

// ---------------------------------------------------------------------------
// files

Result<std::string> read_file(const std::filesystem::path& path);
VoidResult write_file(const std::filesystem::path& path, std::string_view content);
// Write to <path>.tmp then rename, so readers never see a torn file.
VoidResult write_file_atomic(const std::filesystem::path& path, std::string_view content);
VoidResult append_line(const std::filesystem::path& path, std::string_view line);
Result<std::vector<std::string>> read_lines(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// csv

std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);
// Parses one CSV line honoring double-quote escaping.
std::vector<std::string> csv_parse_line(std::string_view line);

// ---------------------------------------------------------------------------
// misc

std::size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace revgen
