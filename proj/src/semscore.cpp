#include "ragutil/semscore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ragutil/error.hpp"
#include "ragutil/hash.hpp"
#include "ragutil/kernels.hpp"
#include "ragutil/log.hpp"
#include "ragutil/rng.hpp"
#include "ragutil/text.hpp"

namespace ragutil {

using nlohmann::json;

TokenEmbeddings::TokenEmbeddings(std::vector<std::string> tokens, std::size_t dim,
                                 std::vector<double> values)
    : tokens_(std::move(tokens)), dim_(dim), values_(std::move(values)) {
  if (values_.size() != tokens_.size() * dim_) {
    throw DataError("embedding shape mismatch: " + std::to_string(tokens_.size()) + " tokens x " +
                    std::to_string(dim_) + " dims vs " + std::to_string(values_.size()) + " values");
  }
  if (!tokens_.empty() && dim_ == 0) throw DataError("embedding dimension is zero");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) norm += values_[i * dim_ + j] * values_[i * dim_ + j];
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DataError("embedding row " + std::to_string(i) + " has zero or non-finite norm");
    }
    for (std::size_t j = 0; j < dim_; ++j) values_[i * dim_ + j] /= norm;
  }
}

TokenEmbeddings TokenEmbeddings::slice(std::size_t begin, std::size_t count) const {
  TokenEmbeddings out;
  const std::size_t end = std::min(size(), begin + count);
  out.dim_ = dim_;
  out.tokens_.assign(tokens_.begin() + static_cast<std::ptrdiff_t>(begin),
                     tokens_.begin() + static_cast<std::ptrdiff_t>(end));
  out.values_.assign(values_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                     values_.begin() + static_cast<std::ptrdiff_t>(end * dim_));
  return out;
}

TokenEmbeddings HashEmbedder::embed(std::string_view text) {
  auto tokens = tokenize(text);
  std::vector<double> values;
  values.reserve(tokens.size() * dim_);
  for (const auto& t : tokens) {
    std::uint64_t state = fnv1a64(t);
    for (std::size_t j = 0; j < dim_; ++j) {
      // 53 random bits mapped onto [-1, 1).
      const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      values.push_back(2.0 * u - 1.0);
    }
  }
  return TokenEmbeddings(std::move(tokens), dim_, std::move(values));
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::string path, std::string model_id,
                           std::chrono::seconds timeout, int max_attempts)
    : base_url_(std::move(base_url)),
      path_(std::move(path)),
      model_id_(std::move(model_id)),
      timeout_(timeout),
      max_attempts_(max_attempts) {}

TokenEmbeddings parse_embedding_reply(std::string_view body) {
  json reply;
  try {
    reply = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("embedding reply is not JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("tokens") || !reply.contains("embeddings") ||
      !reply["tokens"].is_array() || !reply["embeddings"].is_array()) {
    throw ProtocolError("embedding reply needs arrays 'tokens' and 'embeddings'");
  }
  const auto& rows = reply["embeddings"];
  std::vector<std::string> tokens;
  for (const auto& t : reply["tokens"]) {
    if (!t.is_string()) throw ProtocolError("embedding token is not a string");
    tokens.push_back(t.get<std::string>());
  }
  if (rows.size() != tokens.size()) {
    throw ProtocolError("embedding reply has " + std::to_string(tokens.size()) + " tokens but " +
                        std::to_string(rows.size()) + " rows");
  }
  const std::size_t dim = rows.empty() ? 0 : rows[0].size();
  std::vector<double> values;
  values.reserve(tokens.size() * dim);
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != dim) throw ProtocolError("ragged embedding matrix");
    for (const auto& v : row) {
      if (!v.is_number()) throw ProtocolError("non-numeric embedding value");
      values.push_back(v.get<double>());
    }
  }
  try {
    return TokenEmbeddings(std::move(tokens), dim, std::move(values));
  } catch (const DataError& e) {
    throw ProtocolError(e.what());
  }
}

TokenEmbeddings HttpEmbedder::embed(std::string_view text) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  const std::string payload = json{{"text", text}}.dump();
  std::chrono::milliseconds backoff{200};
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
    auto res = client.Post(path_, payload, "application/json");
    if (res && res->status == 200) return parse_embedding_reply(res->body);
    if (res && res->status >= 400 && res->status < 500 && res->status != 429) {
      throw ProtocolError("embedding endpoint returned HTTP " + std::to_string(res->status));
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < max_attempts_) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransientError("embedding endpoint " + base_url_ + path_ + " failed: " + last_error);
}

CachingEmbedder::CachingEmbedder(Embedder& inner, std::filesystem::path path)
    : inner_(inner), path_(std::move(path)) {
  if (path_.empty()) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  const auto provider = inner_.provider_id();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      if (j.at("provider").get<std::string>() != provider) continue;
      auto tokens = j.at("tokens").get<std::vector<std::string>>();
      const auto dim = j.at("dim").get<std::size_t>();
      auto values = j.at("values").get<std::vector<double>>();
      memo_[j.at("key").get<std::string>()] =
          std::make_shared<const TokenEmbeddings>(std::move(tokens), dim, std::move(values));
    } catch (const std::exception&) {
      log::warn("{}:{}: skipping corrupt embedding cache line", path_.string(), line_no);
    }
  }
}

TokenEmbeddings CachingEmbedder::embed(std::string_view text) {
  const auto key = sha256_hex(inner_.provider_id() + '\n' + std::string(text));
  {
    std::lock_guard lock(mutex_);
    auto it = memo_.find(key);
    if (it != memo_.end()) return *it->second;
  }
  auto emb = std::make_shared<const TokenEmbeddings>(inner_.embed(text));
  std::lock_guard lock(mutex_);
  ++misses_;
  memo_.emplace(key, emb);
  if (!path_.empty()) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    json j{{"key", key}, {"provider", inner_.provider_id()}, {"tokens", emb->tokens()},
           {"dim", emb->dim()}, {"values", emb->values()}};
    out << j.dump() << '\n';
  }
  return *emb;
}

double f1_of(double precision, double recall) {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

IdfTable compute_idf(const std::vector<std::vector<std::string>>& documents) {
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    std::vector<std::string> uniq(doc);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (const auto& t : uniq) ++df[t];
  }
  IdfTable idf;
  const double m = static_cast<double>(documents.size());
  for (const auto& [t, n] : df) idf[t] = -std::log(static_cast<double>(n) / m);
  return idf;
}

namespace {

double weighted_mean(const std::vector<double>& best, const std::vector<std::string>& tokens,
                     const IdfTable* idf) {
  if (idf == nullptr) {
    double sum = 0.0;
    for (double v : best) sum += v;
    return sum / static_cast<double>(best.size());
  }
  // Unseen tokens take the largest idf in the table, as a rare word would.
  double fallback = 0.0;
  for (const auto& [_, w] : *idf) fallback = std::max(fallback, w);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < best.size(); ++i) {
    auto it = idf->find(tokens[i]);
    const double w = it == idf->end() ? fallback : it->second;
    num += w * best[i];
    den += w;
  }
  return den > 0.0 ? num / den : 0.0;
}

template <typename Kernel>
ScoreTriple score_one(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
                      const ScoreOptions& options, Kernel kernel) {
  if (reference.empty()) throw DataError("empty reference");
  if (candidate.empty()) return ScoreTriple{0.0, 0.0, 0.0, true};
  if (candidate.dim() != reference.dim()) throw DataError("embedding dimensions differ");
  const auto match = kernel(candidate, reference);
  ScoreTriple s;
  s.precision = weighted_mean(match.candidate_best, candidate.tokens(), options.idf);
  s.recall = weighted_mean(match.reference_best, reference.tokens(), options.idf);
  s.f1 = f1_of(s.precision, s.recall);
  if (options.baseline) {
    const double b = *options.baseline;
    s.precision = (s.precision - b) / (1.0 - b);
    s.recall = (s.recall - b) / (1.0 - b);
    s.f1 = (s.f1 - b) / (1.0 - b);
  }
  return s;
}

template <typename Kernel>
double windowed_f1(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
                   const ScoreOptions& options, Kernel kernel) {
  const std::size_t w = options.reference_window;
  if (w == 0 || reference.size() <= w) return score_one(candidate, reference, options, kernel).f1;
  const std::size_t stride = std::max<std::size_t>(1, w / 2);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t begin = 0;; begin += stride) {
    best = std::max(best, score_one(candidate, reference.slice(begin, w), options, kernel).f1);
    if (begin + w >= reference.size()) break;
  }
  return best;
}

}  // namespace

ScoreTriple bertscore(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
                      const ScoreOptions& options) {
  return score_one(candidate, reference, options, kernels::greedy_match);
}

double answer_performance(const TokenEmbeddings& answer, std::span<const TokenEmbeddings> relevant,
                          const ScoreOptions& options) {
  if (relevant.empty()) throw DataError("no relevant ground truth");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ref : relevant) {
    best = std::max(best, windowed_f1(answer, ref, options, kernels::greedy_match));
  }
  return best;
}

double answer_performance(Embedder& embedder, std::string_view answer,
                          const std::vector<std::string>& relevant_texts,
                          const ScoreOptions& options) {
  if (relevant_texts.empty()) throw DataError("no relevant ground truth");
  const auto cand = embedder.embed(answer);
  std::vector<TokenEmbeddings> refs;
  refs.reserve(relevant_texts.size());
  for (const auto& t : relevant_texts) refs.push_back(embedder.embed(t));
  return answer_performance(cand, refs, options);
}

namespace kernels {

double pair_f1(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
               const ScoreOptions& options) {
  return windowed_f1(candidate, reference, options, greedy_match_serial);
}

}  // namespace kernels

}  // namespace ragutil
