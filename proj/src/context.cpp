#include "ragutil/context.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "ragutil/error.hpp"
#include "ragutil/hash.hpp"
#include "ragutil/log.hpp"
#include "ragutil/rng.hpp"
#include "ragutil/text.hpp"

namespace ragutil {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ZeroShot: return "zero_shot";
    case Strategy::TopK: return "topk";
    case Strategy::TopKReversed: return "topk_reversed";
    case Strategy::RelOracle: return "rel_oracle";
    case Strategy::NRelOracle: return "nrel_oracle";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::ZeroShot, Strategy::TopK, Strategy::TopKReversed, Strategy::RelOracle,
                 Strategy::NRelOracle}) {
    if (to_string(s) == name) return s;
  }
  throw UsageError("unknown context strategy '" + std::string(name) + "'");
}

void ContextSpec::validate() const {
  if ((k == 0) != (strategy == Strategy::ZeroShot)) {
    throw UsageError("context size k must be 0 exactly for zero_shot");
  }
}

namespace {

std::vector<std::string> sample_pool(std::vector<std::string> pool, const ContextSpec& spec,
                                     const std::string& query_id) {
  if (pool.empty()) throw DataError("no judged documents in pool for query '" + query_id + "'");
  std::uint64_t state = spec.seed ^ fnv1a64(query_id);
  state ^= splitmix64(state) + spec.k;
  std::mt19937_64 gen(splitmix64(state));
  const std::size_t take = std::min(spec.k, pool.size());
  partial_shuffle(std::span<std::string>(pool), take, gen);
  pool.resize(take);
  return pool;
}

}  // namespace

std::vector<std::string> select_context_ids(const ContextSpec& spec, const RunStore* run,
                                            const QrelStore& qrels, const std::string& query_id) {
  spec.validate();
  switch (spec.strategy) {
    case Strategy::ZeroShot: return {};
    case Strategy::TopK:
    case Strategy::TopKReversed: {
      const auto* ranking = run == nullptr ? nullptr : run->ranking(query_id);
      if (ranking == nullptr || ranking->empty()) {
        throw DataError("run has no entries for query '" + query_id + "'");
      }
      if (ranking->size() < spec.k) {
        log::warn("run for '{}' has {} entries, fewer than k={}", query_id, ranking->size(), spec.k);
      }
      const std::size_t take = std::min(spec.k, ranking->size());
      std::vector<std::string> ids;
      ids.reserve(take);
      for (std::size_t i = 0; i < take; ++i) ids.push_back((*ranking)[i].doc_id);
      if (spec.strategy == Strategy::TopKReversed) std::reverse(ids.begin(), ids.end());
      return ids;
    }
    case Strategy::RelOracle:
    case Strategy::NRelOracle: {
      const auto* judged = qrels.judgments(query_id);
      if (judged == nullptr) throw DataError("no judged documents in pool for query '" + query_id + "'");
      std::vector<std::string> pool;  // map order: ascending doc_id before shuffling
      for (const auto& [doc_id, grade] : *judged) {
        const bool in_pool = spec.strategy == Strategy::RelOracle ? grade >= spec.rel_threshold
                                                                  : spec.nonrel_grades.contains(grade);
        if (in_pool) pool.push_back(doc_id);
      }
      return sample_pool(std::move(pool), spec, query_id);
    }
  }
  return {};
}

RagContext build_context(const ContextSpec& spec, const RunStore* run, const QrelStore& qrels,
                         const std::string& query_id, const TextLookup& lookup) {
  RagContext ctx;
  ctx.query_id = query_id;
  ctx.strategy = spec.strategy;
  for (auto& id : select_context_ids(spec, run, qrels, query_id)) {
    auto text = lookup(id);
    if (!text) throw DataError("document '" + id + "' not found in collection");
    ctx.docs.push_back(ContextDoc{std::move(id), std::move(*text)});
  }
  return ctx;
}

std::size_t TokenEstimator::operator()(std::string_view text) const {
  const double raw = static_cast<double>(count_words(text)) * inflation;
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

PromptTemplate PromptTemplate::default_template() {
  return PromptTemplate{
      "You are an expert at answering questions based on your own knowledge and related "
      "context. Please answer this question based on the given context. End your answer with "
      "STOP.\n"
      "{context_block}"
      "Question: {question}\n"
      "Now start your answer.\n"
      "Answer:"};
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open prompt template " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  PromptTemplate t{buf.str()};
  if (t.text.find("{question}") == std::string::npos ||
      t.text.find("{context_block}") == std::string::npos) {
    throw DataError("prompt template must contain {context_block} and {question}");
  }
  return t;
}

PromptInstance assemble_prompt(std::string_view question, const std::vector<ContextDoc>& context,
                               const PromptTemplate& tmpl, const PromptLimits& limits) {
  if (context.size() > limits.max_context) {
    throw UsageError("context of " + std::to_string(context.size()) + " documents exceeds maximum " +
                     std::to_string(limits.max_context));
  }
  std::string block;
  for (std::size_t i = 0; i < context.size(); ++i) {
    block += "Context " + std::to_string(i + 1) + ": " + context[i].text + "\n";
  }
  // Substitute the question last so document text can never inject a placeholder.
  std::string text = tmpl.text;
  const auto qpos = text.find("{question}");
  const auto cpos = text.find("{context_block}");
  if (qpos == std::string::npos || cpos == std::string::npos) {
    throw DataError("prompt template must contain {context_block} and {question}");
  }
  std::string rendered;
  if (cpos < qpos) {
    rendered = text.substr(0, cpos) + block +
               text.substr(cpos + 15, qpos - cpos - 15) + std::string(question) +
               text.substr(qpos + 10);
  } else {
    rendered = text.substr(0, qpos) + std::string(question) +
               text.substr(qpos + 10, cpos - qpos - 10) + block + text.substr(cpos + 15);
  }
  PromptInstance prompt;
  prompt.text = std::move(rendered);
  prompt.context_size = context.size();
  prompt.token_estimate = limits.estimator(prompt.text);
  if (prompt.token_estimate > limits.token_budget) {
    throw DataError("prompt exceeds token budget (" + std::to_string(prompt.token_estimate) + " > " +
                    std::to_string(limits.token_budget) + ")");
  }
  return prompt;
}

}  // namespace ragutil
