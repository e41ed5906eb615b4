#include "revgen/xml.hpp"

#include <cctype>
#include <optional>

namespace revgen::xml {

namespace {

bool is_name_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
           c == '.' || c == ':';
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

void skip_space(std::string_view s, std::size_t& pos) {
    while (pos < s.size() && is_space(s[pos])) ++pos;
}

std::string parse_name(std::string_view s, std::size_t& pos) {
    std::string name;
    if (pos < s.size() && is_name_start(s[pos])) {
        name.push_back(s[pos++]);
        while (pos < s.size() && is_name_char(s[pos])) name.push_back(s[pos++]);
    }
    return name;
}

void append_utf8(std::string& out, unsigned long cp) {
    if (cp <= 0x7F) {
        out.push_back(static_cast<char>(cp));
    } else if (cp <= 0x7FF) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp <= 0xFFFF) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Decodes the entity starting at s[pos] ('&'). Returns false and leaves pos
// untouched when the sequence is not a recognized entity; the caller then
// keeps the '&' literally. Lenience here matters: model output frequently
// contains bare ampersands and the gate should not reject those.
bool decode_entity(std::string_view s, std::size_t& pos, std::string& out) {
    std::size_t semi = s.find(';', pos + 1);
    if (semi == std::string_view::npos || semi - pos > 12) return false;
    std::string_view body = s.substr(pos + 1, semi - pos - 1);
    if (body == "amp") {
        out.push_back('&');
    } else if (body == "lt") {
        out.push_back('<');
    } else if (body == "gt") {
        out.push_back('>');
    } else if (body == "quot") {
        out.push_back('"');
    } else if (body == "apos") {
        out.push_back('\'');
    } else if (body.size() >= 2 && body[0] == '#') {
        unsigned long cp = 0;
        bool hex = body[1] == 'x' || body[1] == 'X';
        std::size_t i = hex ? 2 : 1;
        if (i >= body.size()) return false;
        for (; i < body.size(); ++i) {
            char c = body[i];
            unsigned digit;
            if (c >= '0' && c <= '9') {
                digit = static_cast<unsigned>(c - '0');
            } else if (hex && c >= 'a' && c <= 'f') {
                digit = static_cast<unsigned>(c - 'a' + 10);
            } else if (hex && c >= 'A' && c <= 'F') {
                digit = static_cast<unsigned>(c - 'A' + 10);
            } else {
                return false;
            }
            cp = cp * (hex ? 16 : 10) + digit;
            if (cp > 0x10FFFF) return false;
        }
        if (cp >= 0xD800 && cp <= 0xDFFF) return false;
        append_utf8(out, cp);
    } else {
        return false;
    }
    pos = semi + 1;
    return true;
}

// Skips a comment or processing instruction starting at s[pos]. Returns
// false when the construct never terminates.
bool skip_markup_noise(std::string_view s, std::size_t& pos) {
    if (s.compare(pos, 4, "<!--") == 0) {
        std::size_t end = s.find("-->", pos + 4);
        if (end == std::string_view::npos) return false;
        pos = end + 3;
        return true;
    }
    std::size_t end = s.find("?>", pos + 2);
    if (end == std::string_view::npos) return false;
    pos = end + 2;
    return true;
}

}  // namespace

const Element* Element::child(std::string_view child_name) const {
    for (const Element& c : children) {
        if (c.name == child_name) return &c;
    }
    return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view child_name) const {
    std::vector<const Element*> out;
    for (const Element& c : children) {
        if (c.name == child_name) out.push_back(&c);
    }
    return out;
}

std::string Element::attribute(std::string_view attr_name) const {
    for (const auto& [k, v] : attributes) {
        if (k == attr_name) return v;
    }
    return {};
}

bool Element::has_attribute(std::string_view attr_name) const {
    for (const auto& [k, v] : attributes) {
        if (k == attr_name) return true;
    }
    return false;
}

Result<Element> parse_element(std::string_view text, std::size_t& pos) {
    using R = Result<Element>;
    if (pos >= text.size() || text[pos] != '<') {
        return R::failure("malformed_tag", "expected '<' at offset " + std::to_string(pos));
    }
    std::size_t tag_at = pos;
    ++pos;
    Element el;
    el.name = parse_name(text, pos);
    if (el.name.empty()) {
        return R::failure("malformed_tag", "missing tag name at offset " + std::to_string(tag_at));
    }

    // Attribute list, then '>' or '/>'.
    bool self_closing = false;
    for (;;) {
        skip_space(text, pos);
        if (pos >= text.size()) {
            return R::failure("unclosed_tag", "<" + el.name + "> open tag never terminated");
        }
        if (text[pos] == '>') {
            ++pos;
            break;
        }
        if (text[pos] == '/') {
            if (pos + 1 >= text.size() || text[pos + 1] != '>') {
                return R::failure("malformed_tag", "stray '/' in <" + el.name + "> open tag");
            }
            pos += 2;
            self_closing = true;
            break;
        }
        std::string attr = parse_name(text, pos);
        if (attr.empty()) {
            return R::failure("bad_attribute",
                              "unparseable attribute in <" + el.name + "> at offset " +
                                  std::to_string(pos));
        }
        skip_space(text, pos);
        if (pos >= text.size() || text[pos] != '=') {
            return R::failure("bad_attribute", "attribute '" + attr + "' missing '='");
        }
        ++pos;
        skip_space(text, pos);
        if (pos >= text.size() || (text[pos] != '"' && text[pos] != '\'')) {
            return R::failure("bad_attribute", "attribute '" + attr + "' value not quoted");
        }
        char quote = text[pos++];
        std::string value;
        for (;;) {
            if (pos >= text.size()) {
                return R::failure("bad_attribute", "attribute '" + attr + "' value never closed");
            }
            char c = text[pos];
            if (c == quote) {
                ++pos;
                break;
            }
            if (c == '&' && decode_entity(text, pos, value)) continue;
            value.push_back(c);
            ++pos;
        }
        if (el.has_attribute(attr)) {
            return R::failure("duplicate_attribute",
                              "attribute '" + attr + "' repeated in <" + el.name + ">");
        }
        el.attributes.emplace_back(std::move(attr), std::move(value));
    }
    if (self_closing) return R(std::move(el));

    // Content: character data, child elements, noise. Ends at the matching
    // close tag.
    std::string raw_text;
    for (;;) {
        if (pos >= text.size()) {
            return R::failure("unclosed_tag", "<" + el.name + "> never closed");
        }
        char c = text[pos];
        if (c == '<') {
            if (text.compare(pos, 2, "</") == 0) {
                std::size_t close_at = pos;
                pos += 2;
                std::string close_name = parse_name(text, pos);
                skip_space(text, pos);
                if (pos >= text.size() || text[pos] != '>') {
                    return R::failure("malformed_tag",
                                      "close tag at offset " + std::to_string(close_at) +
                                          " never terminated");
                }
                ++pos;
                if (close_name != el.name) {
                    return R::failure("mismatched_tag", "<" + el.name + "> closed by </" +
                                                            close_name + ">");
                }
                el.text = trim(raw_text);
                return R(std::move(el));
            }
            if (text.compare(pos, 4, "<!--") == 0 || text.compare(pos, 2, "<?") == 0) {
                if (!skip_markup_noise(text, pos)) {
                    return R::failure("unclosed_tag",
                                      "unterminated comment inside <" + el.name + ">");
                }
                continue;
            }
            if (pos + 1 < text.size() && is_name_start(text[pos + 1])) {
                auto child = parse_element(text, pos);
                if (!child) return child;
                el.children.push_back(std::move(child).take());
                continue;
            }
            return R::failure("stray_markup", "stray '<' inside <" + el.name + "> at offset " +
                                                  std::to_string(pos));
        }
        if (c == '&' && decode_entity(text, pos, raw_text)) continue;
        raw_text.push_back(c);
        ++pos;
    }
}

Result<Element> extract_root(std::string_view text, std::string_view root_name) {
    using R = Result<Element>;
    std::optional<Element> found;
    std::optional<Error> first_error;
    std::size_t pos = 0;
    while (pos < text.size()) {
        if (text[pos] != '<') {
            ++pos;
            continue;
        }
        if (text.compare(pos, 4, "<!--") == 0 || text.compare(pos, 2, "<?") == 0) {
            if (!skip_markup_noise(text, pos)) break;
            continue;
        }
        // Candidate only on a whole-name match: <answers> but not <answersx>.
        std::size_t after = pos + 1 + root_name.size();
        bool name_matches = text.compare(pos + 1, root_name.size(), root_name) == 0 &&
                            (after >= text.size() || !is_name_char(text[after]));
        if (!name_matches) {
            ++pos;
            continue;
        }
        std::size_t attempt = pos;
        auto parsed = parse_element(text, attempt);
        if (!parsed) {
            if (!first_error) first_error = parsed.error();
            ++pos;
            continue;
        }
        if (found) {
            return R::failure("duplicate_root",
                              "more than one <" + std::string(root_name) + "> element");
        }
        found = std::move(parsed).take();
        pos = attempt;
    }
    if (found) return R(std::move(*found));
    if (first_error) return R::failure(first_error->code, first_error->message);
    return R::failure("missing_root", "no <" + std::string(root_name) + "> element found");
}

std::string escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace revgen::xml
