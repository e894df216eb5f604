#include "ragutil/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>

#include "ragutil/error.hpp"
#include "ragutil/log.hpp"

namespace ragutil {

void Bm25Params::validate() const {
  if (!(k1 > 0.0)) throw UsageError("bm25 k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) throw UsageError("bm25 b must be in [0, 1]");
}

std::size_t InvertedIndex::document_frequency(const std::string& term) const {
  const auto* list = postings(term);
  return list == nullptr ? 0 : list->size();
}

const std::vector<Posting>* InvertedIndex::postings(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? nullptr : &it->second;
}

InvertedIndex build_index(const Collection& collection, const TokenizerOptions& tokenizer) {
  if (collection.empty()) throw DataError("cannot index an empty collection");

  std::vector<const Document*> order;
  order.reserve(collection.size());
  for (const auto& d : collection.documents()) order.push_back(&d);
  std::sort(order.begin(), order.end(),
            [](const Document* a, const Document* b) { return a->doc_id < b->doc_id; });

  InvertedIndex index;
  index.tokenizer_ = tokenizer;
  index.doc_ids_.reserve(order.size());
  index.doc_lengths_.reserve(order.size());
  std::uint64_t total_length = 0;
  std::unordered_map<std::string, std::uint32_t> tf;
  for (std::uint32_t doc = 0; doc < order.size(); ++doc) {
    const auto terms = tokenize(order[doc]->text, tokenizer);
    index.doc_ids_.push_back(order[doc]->doc_id);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    total_length += terms.size();
    tf.clear();
    for (const auto& t : terms) ++tf[t];
    // Docs are visited in id order, so each postings list stays sorted.
    for (auto& [term, count] : tf) index.postings_[term].push_back(Posting{doc, count});
  }
  index.avg_doc_length_ = static_cast<double>(total_length) / static_cast<double>(order.size());
  return index;
}

namespace {

constexpr char kIndexMagic[8] = {'R', 'A', 'G', 'I', 'D', 'X', '0', '1'};
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("truncated index file");
  return value;
}

std::string get_string(std::istream& in) {
  const auto len = get<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw DataError("truncated index file");
  return s;
}

}  // namespace

// index.bin layout (little-endian):
//   char[8] "RAGIDX01", u32 version, u32 flags (bit0 stopwords, bit1 stem)
//   u64 N, f64 avg_doc_length
//   N x { str doc_id, u32 doc_length }                 internal id order
//   u64 V, V x { str term, u64 df, df x { u32 doc, u32 tf } }   terms sorted
// where str = u32 length + bytes.
void InvertedIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto path = dir / "index.bin";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kIndexMagic, sizeof kIndexMagic);
  put<std::uint32_t>(out, kIndexVersion);
  const std::uint32_t flags =
      (tokenizer_.remove_stopwords ? 1U : 0U) | (tokenizer_.stem ? 2U : 0U);
  put<std::uint32_t>(out, flags);
  put<std::uint64_t>(out, doc_ids_.size());
  put<double>(out, avg_doc_length_);
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    put_string(out, doc_ids_[i]);
    put<std::uint32_t>(out, doc_lengths_[i]);
  }
  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, _] : postings_) terms.push_back(&term);
  std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
  put<std::uint64_t>(out, terms.size());
  for (const auto* term : terms) {
    const auto& list = postings_.at(*term);
    put_string(out, *term);
    put<std::uint64_t>(out, list.size());
    for (const auto& p : list) {
      put<std::uint32_t>(out, p.doc);
      put<std::uint32_t>(out, p.tf);
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& dir) {
  const auto path = dir / "index.bin";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open index " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kIndexMagic, sizeof magic) != 0) {
    throw DataError("not an index file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kIndexVersion) {
    throw DataError("unsupported index version " + std::to_string(version));
  }
  InvertedIndex index;
  const auto flags = get<std::uint32_t>(in);
  index.tokenizer_.remove_stopwords = (flags & 1U) != 0;
  index.tokenizer_.stem = (flags & 2U) != 0;
  const auto n = get<std::uint64_t>(in);
  index.avg_doc_length_ = get<double>(in);
  index.doc_ids_.reserve(n);
  index.doc_lengths_.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    index.doc_ids_.push_back(get_string(in));
    index.doc_lengths_.push_back(get<std::uint32_t>(in));
  }
  const auto vocab = get<std::uint64_t>(in);
  index.postings_.reserve(vocab);
  for (std::uint64_t v = 0; v < vocab; ++v) {
    auto term = get_string(in);
    const auto df = get<std::uint64_t>(in);
    std::vector<Posting> list;
    list.reserve(df);
    for (std::uint64_t i = 0; i < df; ++i) {
      const auto doc = get<std::uint32_t>(in);
      const auto tf = get<std::uint32_t>(in);
      if (doc >= n) throw DataError("posting references unknown document");
      list.push_back(Posting{doc, tf});
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  return index;
}

double bm25_idf(std::size_t doc_count, std::size_t df) {
  const double n = static_cast<double>(doc_count);
  const double f = static_cast<double>(df);
  return std::log((n - f + 0.5) / (f + 0.5) + 1.0);
}

namespace {

// Term-at-a-time scoring into a dense accumulator owned by the caller.
std::vector<ScoredDoc> score_query(const InvertedIndex& index, const Bm25Params& params,
                                   const std::vector<std::string>& terms, std::size_t k,
                                   std::vector<double>& acc, std::vector<std::uint32_t>& touched) {
  touched.clear();
  const double avgdl = index.avg_doc_length();
  for (const auto& term : terms) {
    const auto* list = index.postings(term);
    if (list == nullptr) continue;
    const double idf = bm25_idf(index.doc_count(), list->size());
    for (const auto& p : *list) {
      const double tf = p.tf;
      const double dl = index.doc_length(p.doc);
      const double norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl);
      if (acc[p.doc] == 0.0) touched.push_back(p.doc);
      acc[p.doc] += idf * tf * (params.k1 + 1.0) / (tf + norm);
    }
  }
  std::vector<std::pair<double, std::uint32_t>> hits;
  hits.reserve(touched.size());
  for (auto doc : touched) {
    hits.emplace_back(acc[doc], doc);
    acc[doc] = 0.0;
  }
  auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(), better);
  std::vector<ScoredDoc> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(ScoredDoc{index.doc_id(hits[i].second), hits[i].first});
  return out;
}

std::vector<std::pair<std::string, double>> as_pairs(std::vector<ScoredDoc> docs) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(docs.size());
  for (auto& d : docs) out.emplace_back(std::move(d.doc_id), d.score);
  return out;
}

}  // namespace

std::vector<ScoredDoc> bm25_search(const InvertedIndex& index, const Bm25Params& params,
                                   std::string_view query, std::size_t k) {
  if (k == 0) throw UsageError("k must be >= 1");
  params.validate();
  const auto terms = tokenize(query, index.tokenizer());
  if (terms.empty()) throw UsageError("empty query");
  std::vector<double> acc(index.doc_count(), 0.0);
  std::vector<std::uint32_t> touched;
  return score_query(index, params, terms, k, acc, touched);
}

RunStore batch_search_serial(const InvertedIndex& index, const Bm25Params& params,
                             const std::vector<Query>& queries, std::size_t k) {
  if (k == 0) throw UsageError("k must be >= 1");
  params.validate();
  RunStore run;
  std::vector<double> acc(index.doc_count(), 0.0);
  std::vector<std::uint32_t> touched;
  for (const auto& q : queries) {
    const auto terms = tokenize(q.text, index.tokenizer());
    if (terms.empty()) {
      log::warn("query '{}' has no terms; empty ranking", q.query_id);
      run.set(q.query_id, {});
      continue;
    }
    run.set(q.query_id, as_pairs(score_query(index, params, terms, k, acc, touched)));
  }
  return run;
}

RunStore batch_search(const InvertedIndex& index, const Bm25Params& params,
                      const std::vector<Query>& queries, std::size_t k) {
  if (k == 0) throw UsageError("k must be >= 1");
  params.validate();
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
  std::vector<std::optional<std::vector<ScoredDoc>>> results(queries.size());

#pragma omp parallel
  {
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto terms = tokenize(queries[static_cast<std::size_t>(i)].text, index.tokenizer());
      if (!terms.empty()) results[static_cast<std::size_t>(i)] = score_query(index, params, terms, k, acc, touched);
    }
  }

  RunStore run;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!results[i]) {
      log::warn("query '{}' has no terms; empty ranking", queries[i].query_id);
      run.set(queries[i].query_id, {});
      continue;
    }
    run.set(queries[i].query_id, as_pairs(std::move(*results[i])));
  }
  return run;
}

RerankScores parse_rerank_scores(std::istream& in, const std::string& source) {
  RerankScores scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw ParseError(source, line_no, "expected `qid<TAB>docid<TAB>score`");
    }
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(source, line_no, "invalid score '" + fields[2] + "'");
    }
    auto [it, inserted] = scores[fields[0]].emplace(fields[1], value);
    if (!inserted && it->second != value) {
      throw ParseError(source, line_no, "conflicting score for (" + fields[0] + ", " + fields[1] + ")");
    }
  }
  return scores;
}

RerankScores load_rerank_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_rerank_scores(in, path.string());
}

RerankScores scores_from_run(const RunStore& run) {
  RerankScores scores;
  for (const auto& [qid, ranking] : run.rankings()) {
    auto& per_query = scores[qid];
    for (const auto& e : ranking) per_query[e.doc_id] = e.score;
  }
  return scores;
}

RunStore apply_rerank(const RunStore& base, const RerankScores& scores, std::size_t depth) {
  if (depth == 0) throw UsageError("rerank depth must be >= 1");
  std::vector<std::string> missing;
  RunStore out;
  for (const auto& [qid, ranking] : base.rankings()) {
    const auto qit = scores.find(qid);
    std::vector<std::pair<std::string, double>> top;
    const std::size_t limit = std::min(depth, ranking.size());
    for (std::size_t i = 0; i < limit; ++i) {
      const auto& doc = ranking[i].doc_id;
      std::optional<double> s;
      if (qit != scores.end()) {
        auto dit = qit->second.find(doc);
        if (dit != qit->second.end()) s = dit->second;
      }
      if (!s) {
        missing.push_back(qid + "/" + doc);
        continue;
      }
      top.emplace_back(doc, *s);
    }
    std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (missing.empty()) out.set(qid, std::move(top));
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw DataError("missing rerank scores for " + std::to_string(missing.size()) + " pairs: " + list);
  }
  return out;
}

}  // namespace ragutil
