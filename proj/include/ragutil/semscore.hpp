#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ragutil {

// L x d row-major token vectors; every row has unit norm.
class TokenEmbeddings {
 public:
  TokenEmbeddings() = default;
  // Normalizes each row; throws DataError on shape mismatch or a zero row.
  TokenEmbeddings(std::vector<std::string> tokens, std::size_t dim, std::vector<double> values);

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const std::vector<double>& values() const noexcept { return values_; }

  // Rows [begin, begin + count).
  TokenEmbeddings slice(std::size_t begin, std::size_t count) const;

 private:
  std::vector<std::string> tokens_;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  // Identifies model and tokenization; part of every cache key.
  virtual std::string provider_id() const = 0;
  virtual TokenEmbeddings embed(std::string_view text) = 0;
};

// Deterministic mock: tokens from the lexical tokenizer, each mapped to a
// pseudo-random unit vector seeded by a hash of the token. Equal tokens get equal
// vectors; distinct tokens are nearly orthogonal for large dim.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256) : dim_(dim) {}
  std::string provider_id() const override { return "mock-hash-d" + std::to_string(dim_); }
  TokenEmbeddings embed(std::string_view text) override;

 private:
  std::size_t dim_;
};

// POST {text} -> {tokens: [...], embeddings: [[...]]}.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(std::string base_url, std::string path, std::string model_id,
               std::chrono::seconds timeout = std::chrono::seconds(60), int max_attempts = 4);
  std::string provider_id() const override { return "http:" + model_id_; }
  TokenEmbeddings embed(std::string_view text) override;

 private:
  std::string base_url_;
  std::string path_;
  std::string model_id_;
  std::chrono::seconds timeout_;
  int max_attempts_;
};

// Parses and validates an embedding reply body.
TokenEmbeddings parse_embedding_reply(std::string_view body);

// Memoizes another embedder, optionally persisting to JSONL keyed by
// (provider_id, sha256(text)). Thread-safe.
class CachingEmbedder : public Embedder {
 public:
  explicit CachingEmbedder(Embedder& inner, std::filesystem::path path = {});
  std::string provider_id() const override { return inner_.provider_id(); }
  TokenEmbeddings embed(std::string_view text) override;
  std::size_t misses() const noexcept { return misses_; }

 private:
  Embedder& inner_;
  std::filesystem::path path_;
  std::unordered_map<std::string, std::shared_ptr<const TokenEmbeddings>> memo_;
  std::size_t misses_ = 0;
  std::mutex mutex_;
};

struct ScoreTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool empty_candidate = false;
};

double f1_of(double precision, double recall);

// token -> idf weight for the optional importance-weighted variant.
using IdfTable = std::unordered_map<std::string, double>;
// idf(w) = -ln(df(w) / M) over M reference texts' token sets.
IdfTable compute_idf(const std::vector<std::vector<std::string>>& documents);

struct ScoreOptions {
  const IdfTable* idf = nullptr;       // off by default
  std::optional<double> baseline;      // affine rescale (f - b) / (1 - b); off by default
  std::size_t reference_window = 0;    // split longer references into windows; 0 = never
};

// Greedy matching over the cosine matrix. Empty candidate -> zeros, flagged;
// empty reference -> DataError("empty reference").
ScoreTriple bertscore(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
                      const ScoreOptions& options = {});

// Max F1 over the relevant references. Throws DataError("no relevant ground truth")
// when the list is empty.
double answer_performance(const TokenEmbeddings& answer,
                          std::span<const TokenEmbeddings> relevant,
                          const ScoreOptions& options = {});
double answer_performance(Embedder& embedder, std::string_view answer,
                          const std::vector<std::string>& relevant_texts,
                          const ScoreOptions& options = {});

}  // namespace ragutil
