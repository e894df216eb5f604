#include <gtest/gtest.h>

#include "ragutil/text.hpp"

using namespace ragutil;
using Tokens = std::vector<std::string>;

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("Definition of a SIGMET."), (Tokens{"definition", "of", "a", "sigmet"}));
  EXPECT_EQ(tokenize(""), Tokens{});
  EXPECT_EQ(tokenize("foo-bar2"), (Tokens{"foo", "bar2"}));
  EXPECT_EQ(tokenize("  ...  "), Tokens{});
}

TEST(Tokenize, Utf8BytesStayInsideTokens) {
  EXPECT_EQ(tokenize("Café au lait"), (Tokens{"café", "au", "lait"}));
}

TEST(Tokenize, StopwordsAndStemming) {
  TokenizerOptions opt{.remove_stopwords = true, .stem = true};
  EXPECT_EQ(tokenize("The ponies are running in the fields", opt),
            (Tokens{"poni", "run", "field"}));
  EXPECT_TRUE(is_stopword("the"));
  EXPECT_FALSE(is_stopword("sigmet"));
}

TEST(Porter, ReferenceVocabulary) {
  const std::pair<const char*, const char*> cases[] = {
      {"caresses", "caress"},   {"ponies", "poni"},        {"ties", "ti"},
      {"caress", "caress"},     {"cats", "cat"},           {"feed", "feed"},
      {"agreed", "agre"},       {"plastered", "plaster"},  {"motoring", "motor"},
      {"sing", "sing"},         {"conflated", "conflat"},  {"troubled", "troubl"},
      {"sized", "size"},        {"hopping", "hop"},        {"falling", "fall"},
      {"filing", "file"},       {"happy", "happi"},        {"relational", "relat"},
      {"conditional", "condit"}, {"rational", "ration"},   {"digitizer", "digit"},
      {"generalization", "gener"}, {"electrical", "electr"}, {"adjustment", "adjust"},
      {"controlling", "control"}, {"rolling", "roll"},     {"a", "a"},
  };
  for (const auto& [word, stem] : cases) EXPECT_EQ(porter_stem(word), stem) << word;
}

TEST(CountWords, Whitespace) {
  EXPECT_EQ(count_words(""), 0u);
  EXPECT_EQ(count_words("  one\ttwo\nthree  "), 3u);
  EXPECT_EQ(count_words("foo-bar"), 1u);
}
