#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace revgen {

// Rough token count for budget checks. The default estimator is chars/4
// (rounded up); callers may plug in a model-specific one.
using TokenEstimator = std::function<long(std::string_view)>;
long default_token_estimate(std::string_view text);

// Cleans text extracted from PDFs: folds typographic ligatures (ﬁ ﬂ ﬀ ﬃ ﬄ ﬅ)
// to their letter sequences, drops a UTF-8 BOM, normalizes CRLF/CR to LF and
// NBSP to a plain space.
std::string normalize_extracted_text(std::string_view raw);

struct Sentence {
    std::string text;
    std::size_t begin = 0;  // offsets into the source string
    std::size_t end = 0;
};

// Splits running prose into sentences at . ! ? boundaries, ignoring
// terminators inside square brackets (where DOI citations live).
std::vector<Sentence> split_sentences(std::string_view text);

// Heuristic for the citation-coverage check: a declarative sentence long
// enough to state a conclusion (ends with '.', at least `min_words` words).
bool is_conclusive_sentence(std::string_view sentence, std::size_t min_words = 6);

}  // namespace revgen
