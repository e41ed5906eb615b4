#include "revgen/text.hpp"

#include <array>
#include <cctype>

namespace revgen {

long default_token_estimate(std::string_view text) {
    return static_cast<long>((text.size() + 3) / 4);
}

namespace {

struct Fold {
    std::string_view from;
    std::string_view to;
};

// UTF-8 encodings of the Latin ligature block plus NBSP.
constexpr std::array<Fold, 8> kFolds = {{
    {"\xef\xac\x80", "ff"},   // U+FB00
    {"\xef\xac\x81", "fi"},   // U+FB01
    {"\xef\xac\x82", "fl"},   // U+FB02
    {"\xef\xac\x83", "ffi"},  // U+FB03
    {"\xef\xac\x84", "ffl"},  // U+FB04
    {"\xef\xac\x85", "ft"},   // U+FB05
    {"\xef\xac\x86", "st"},   // U+FB06
    {"\xc2\xa0", " "},        // U+00A0 NBSP
}};

}  // namespace

std::string normalize_extracted_text(std::string_view raw) {
    std::string_view s = raw;
    if (s.size() >= 3 && s.substr(0, 3) == "\xef\xbb\xbf") s.remove_prefix(3);

    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        bool folded = false;
        for (const auto& f : kFolds) {
            if (s.size() - i >= f.from.size() && s.substr(i, f.from.size()) == f.from) {
                out.append(f.to);
                i += f.from.size();
                folded = true;
                break;
            }
        }
        if (folded) continue;
        char c = s[i];
        if (c == '\r') {
            if (i + 1 >= s.size() || s[i + 1] != '\n') out.push_back('\n');
            ++i;
            continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

std::vector<Sentence> split_sentences(std::string_view text) {
    std::vector<Sentence> out;
    std::size_t start = 0;
    int bracket_depth = 0;
    auto emit = [&](std::size_t end) {
        // Trim whitespace from both sides but keep offsets on the trimmed span.
        std::size_t b = start, e = end;
        while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
        if (e > b) out.push_back({std::string(text.substr(b, e - b)), b, e});
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '[') ++bracket_depth;
        else if (c == ']' && bracket_depth > 0) --bracket_depth;
        else if ((c == '.' || c == '!' || c == '?') && bracket_depth == 0) {
            // Terminator ends the sentence only before whitespace or end of text;
            // "10.1021/x" style tokens never qualify.
            std::size_t j = i + 1;
            while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
            bool boundary = j >= text.size() || std::isspace(static_cast<unsigned char>(text[j]));
            if (boundary) {
                // Citations directly after the terminator belong to this sentence.
                std::size_t k = j;
                while (k < text.size() && text[k] == ' ') ++k;
                if (k < text.size() && text[k] == '[') {
                    std::size_t close = text.find(']', k);
                    if (close != std::string_view::npos) {
                        emit(close + 1);
                        i = close;
                        continue;
                    }
                }
                emit(j);
                i = j - 1;
            }
        }
    }
    emit(text.size());
    return out;
}

bool is_conclusive_sentence(std::string_view sentence, std::size_t min_words) {
    std::string_view s = sentence;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.empty()) return false;
    // Trailing citation brackets do not change the sentence kind.
    while (!s.empty() && s.back() == ']') {
        std::size_t open = s.rfind('[');
        if (open == std::string_view::npos) break;
        s = s.substr(0, open);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    }
    if (s.empty() || s.back() != '.') return false;
    std::size_t words = 0;
    bool in_word = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return words >= min_words;
}

}  // namespace revgen
