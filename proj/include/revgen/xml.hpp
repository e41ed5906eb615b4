#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "revgen/util.hpp"

namespace revgen::xml {

// Minimal element tree. Mixed content is flattened: `text` concatenates the
// character data directly inside the element (entity-decoded, trimmed).
struct Element {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Element> children;
    std::string text;

    const Element* child(std::string_view child_name) const;
    std::vector<const Element*> children_named(std::string_view child_name) const;
    std::string attribute(std::string_view attr_name) const;
    bool has_attribute(std::string_view attr_name) const;
};

// Parses one element starting at text[pos] (which must be '<'). Total: any
// byte input yields either an Element or an Error, never an exception.
// On success pos is advanced past the element's closing tag.
// Error codes: unclosed_tag, malformed_tag, mismatched_tag, bad_attribute,
// duplicate_attribute, stray_markup.
Result<Element> parse_element(std::string_view text, std::size_t& pos);

// Locates the unique well-formed <root_name> element in text that may be
// wrapped in conversational chatter; leading/trailing junk is ignored.
// Error codes as above plus missing_root and duplicate_root.
Result<Element> extract_root(std::string_view text, std::string_view root_name);

// Escapes &<>"' for embedding text in markup.
std::string escape(std::string_view s);

}  // namespace revgen::xml
