#include "revgen/doi.hpp"

#include "revgen/util.hpp"

namespace revgen {

namespace {

bool strip_prefix(std::string& s, std::string_view prefix) {
    if (s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0) {
        s.erase(0, prefix.size());
        return true;
    }
    return false;
}

}  // namespace

std::string normalize_doi(std::string_view raw) {
    std::string s = to_lower(trim(raw));
    strip_prefix(s, "https://doi.org/");
    strip_prefix(s, "http://doi.org/");
    strip_prefix(s, "https://dx.doi.org/");
    strip_prefix(s, "http://dx.doi.org/");
    strip_prefix(s, "doi.org/");
    strip_prefix(s, "doi:");
    return trim(s);
}

bool is_doi_like(std::string_view s) {
    // 10.<digits>/<nonempty suffix>
    if (s.size() < 6 || s.substr(0, 3) != "10.") return false;
    std::size_t slash = s.find('/');
    if (slash == std::string_view::npos || slash < 4 || slash + 1 >= s.size()) return false;
    for (std::size_t i = 3; i < slash; ++i) {
        char c = s[i];
        if (!(c >= '0' && c <= '9') && c != '.') return false;
    }
    return true;
}

std::string doi_slug(std::string_view doi) {
    std::string out;
    out.reserve(doi.size());
    for (char c : doi) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '.' || c == '-') out.push_back(static_cast<char>(std::tolower(u)));
        else out.push_back('_');
    }
    return out;
}

std::string surrogate_key(std::string_view title) {
    std::string norm = join(tokenize_words(title), " ");
    return "x-nodoi-" + fnv1a64_hex(norm);
}

bool is_surrogate_key(std::string_view key) {
    return key.substr(0, 8) == "x-nodoi-";
}

std::vector<std::string> extract_bracket_citations(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t open = text.find('[', pos);
        if (open == std::string_view::npos) break;
        std::size_t close = text.find(']', open + 1);
        if (close == std::string_view::npos) break;
        std::string_view inside = text.substr(open + 1, close - open - 1);
        // Split on common separators; keep tokens that normalize to DOIs.
        std::string piece;
        auto flush = [&]() {
            std::string doi = normalize_doi(piece);
            if (is_doi_like(doi)) out.push_back(doi);
            piece.clear();
        };
        for (char c : inside) {
            if (c == ',' || c == ';' || c == ' ' || c == '\t' || c == '\n') flush();
            else piece.push_back(c);
        }
        flush();
        pos = close + 1;
    }
    return out;
}

}  // namespace revgen
