#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ragutil {

struct TokenizerOptions {
  bool remove_stopwords = false;
  bool stem = false;  // Porter
};

// Lowercases ASCII and splits on runs of non-alphanumeric bytes. Bytes >= 0x80 are
// kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options = {});

bool is_stopword(std::string_view term);

// Classic Porter (1980) suffix stripper over lowercase ASCII words.
std::string porter_stem(std::string_view word);

// Whitespace-delimited words, as used by the token budget estimator.
std::size_t count_words(std::string_view text);

}  // namespace ragutil
