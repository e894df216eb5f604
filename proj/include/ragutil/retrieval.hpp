#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ragutil/corpus.hpp"
#include "ragutil/text.hpp"

namespace ragutil {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  void validate() const;
};

struct Posting {
  std::uint32_t doc;  // internal id
  std::uint32_t tf;
  friend bool operator==(const Posting&, const Posting&) = default;
};

// Internal ids are assigned in ascending doc_id order, so ordering by internal id
// is the same as ordering by doc_id.
class InvertedIndex {
 public:
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  double avg_doc_length() const noexcept { return avg_doc_length_; }
  std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_.at(doc); }
  const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
  std::size_t document_frequency(const std::string& term) const;
  const std::vector<Posting>* postings(const std::string& term) const;
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }
  const TokenizerOptions& tokenizer() const noexcept { return tokenizer_; }

  void save(const std::filesystem::path& dir) const;
  static InvertedIndex load(const std::filesystem::path& dir);

  friend InvertedIndex build_index(const Collection&, const TokenizerOptions&);

 private:
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_lengths_;
  std::vector<std::string> doc_ids_;
  double avg_doc_length_ = 0.0;
  TokenizerOptions tokenizer_;
};

// Throws DataError on an empty collection.
InvertedIndex build_index(const Collection& collection, const TokenizerOptions& tokenizer = {});

struct ScoredDoc {
  std::string doc_id;
  double score;
  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

double bm25_idf(std::size_t doc_count, std::size_t df);

// Top-k by BM25, descending score, ties by ascending doc_id. Throws UsageError
// ("empty query") when the query has no terms after tokenization.
std::vector<ScoredDoc> bm25_search(const InvertedIndex& index, const Bm25Params& params,
                                   std::string_view query, std::size_t k);

// Runs every query; queries that tokenize to nothing get an empty ranking and a
// warning. The OpenMP version parallelizes across queries; the serial one is the
// reference it is tested against.
RunStore batch_search(const InvertedIndex& index, const Bm25Params& params,
                      const std::vector<Query>& queries, std::size_t k);
RunStore batch_search_serial(const InvertedIndex& index, const Bm25Params& params,
                             const std::vector<Query>& queries, std::size_t k);

// query_id -> doc_id -> external relevance score (e.g. a cross-encoder).
using RerankScores = std::map<std::string, std::map<std::string, double>>;

// TSV `qid<TAB>docid<TAB>score`.
RerankScores load_rerank_scores(const std::filesystem::path& path);
RerankScores parse_rerank_scores(std::istream& in, const std::string& source);
RerankScores scores_from_run(const RunStore& run);

// Reorders the top-`depth` of every base ranking by external score (descending,
// ties by doc_id) and drops everything below depth. Missing scores are fatal and
// listed in the error.
RunStore apply_rerank(const RunStore& base, const RerankScores& scores, std::size_t depth);

}  // namespace ragutil
