#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace revgen {

// Canonical DOI form: lowercase, no resolver prefix, no surrounding whitespace.
// DOIs are case-insensitive by their spec; set membership checks in the citation
// gate rely on this normalization.
std::string normalize_doi(std::string_view raw);

// True when the token looks like a registered DOI ("10.<registrant>/<suffix>").
bool is_doi_like(std::string_view s);

// Filesystem-safe slug for per-document file names.
std::string doi_slug(std::string_view doi);

// Deterministic placeholder key for search stubs without a DOI. Never citable.
std::string surrogate_key(std::string_view title);
bool is_surrogate_key(std::string_view key);

// Extracts bracketed DOI citations from running text, normalized, in order of
// appearance (duplicates preserved). Brackets without DOI-like tokens are ignored.
std::vector<std::string> extract_bracket_citations(std::string_view text);

}  // namespace revgen
