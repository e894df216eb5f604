#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ragutil/corpus.hpp"

namespace ragutil {

enum class Strategy { ZeroShot, TopK, TopKReversed, RelOracle, NRelOracle };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct ContextSpec {
  Strategy strategy = Strategy::ZeroShot;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  int rel_threshold = 2;
  std::set<int> nonrel_grades = {0};

  void validate() const;  // k == 0 iff ZeroShot
};

struct ContextDoc {
  std::string doc_id;
  std::string text;
  friend bool operator==(const ContextDoc&, const ContextDoc&) = default;
};

struct RagContext {
  std::string query_id;
  Strategy strategy = Strategy::ZeroShot;
  std::vector<ContextDoc> docs;
};

using TextLookup = std::function<std::optional<std::string>(const std::string& doc_id)>;

// Builds the ordered context for one query. Oracle samples are drawn from judged
// documents only, via a seeded partial shuffle keyed on (seed, query_id, k).
RagContext build_context(const ContextSpec& spec, const RunStore* run, const QrelStore& qrels,
                         const std::string& query_id, const TextLookup& lookup);

// Doc ids only; lets callers inspect sampling without fetching text.
std::vector<std::string> select_context_ids(const ContextSpec& spec, const RunStore* run,
                                            const QrelStore& qrels, const std::string& query_id);

struct TokenEstimator {
  double inflation = 1.35;
  // ceil(words * inflation); the product is nudged down by 1e-9 so that exact
  // decimal products such as 100 * 1.35 do not round up past 135.
  std::size_t operator()(std::string_view text) const;
};

inline std::size_t estimate_tokens(std::string_view text, double inflation = 1.35) {
  return TokenEstimator{inflation}(text);
}

struct PromptTemplate {
  std::string text;  // contains {context_block} and {question}

  static PromptTemplate default_template();
  static PromptTemplate load(const std::filesystem::path& path);
};

struct PromptInstance {
  std::string text;
  std::size_t token_estimate = 0;
  std::size_t context_size = 0;
};

struct PromptLimits {
  std::size_t token_budget = 2048;
  std::size_t max_context = 15;
  TokenEstimator estimator;
};

// Renders `Context i: text` lines in context order. Throws DataError
// "prompt exceeds token budget" rather than truncating.
PromptInstance assemble_prompt(std::string_view question, const std::vector<ContextDoc>& context,
                               const PromptTemplate& tmpl, const PromptLimits& limits = {});

}  // namespace ragutil
