#include "ragutil/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cctype>
#include <cstring>
#include <sstream>

#include "ragutil/error.hpp"
#include "ragutil/log.hpp"

#include <fmt/format.h>

namespace ragutil {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i == line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

template <typename T>
std::optional<T> parse_number(std::string_view field) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

// Two-column `id<TAB>text` reader shared by collections and query files.
template <typename Fn>
void read_two_column(std::istream& in, const std::string& source, Fn&& on_row) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError(source, line_no,
                       "expected 2 tab-separated fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(source, line_no, "empty identifier");
    on_row(line_no, std::string(fields[0]), std::string(fields[1]));
  }
}

}  // namespace

void Collection::add(Document doc) {
  if (doc.doc_id.empty()) throw DataError("document with empty doc_id");
  auto [it, inserted] = by_id_.emplace(doc.doc_id, docs_.size());
  if (!inserted) throw DataError("duplicate doc_id '" + doc.doc_id + "'");
  docs_.push_back(std::move(doc));
}

const Document* Collection::find(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

Collection parse_collection(std::istream& in, const std::string& source) {
  Collection collection;
  std::size_t degenerate = 0;
  read_two_column(in, source, [&](std::size_t line_no, std::string id, std::string text) {
    if (text.empty()) ++degenerate;
    if (collection.find(id) != nullptr) {
      throw ParseError(source, line_no, "duplicate doc_id '" + id + "'");
    }
    collection.add(Document{std::move(id), std::move(text)});
  });
  if (collection.empty()) log::warn("{}: empty collection", source);
  if (degenerate > 0) log::warn("{}: {} documents with empty text", source, degenerate);
  log::info("{}: loaded {} documents", source, collection.size());
  return collection;
}

Collection load_collection(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_collection(in, path.string());
}

std::vector<Query> parse_queries(std::istream& in, const std::string& source) {
  std::vector<Query> queries;
  std::set<std::string> seen;
  read_two_column(in, source, [&](std::size_t line_no, std::string id, std::string text) {
    if (is_blank(text)) throw ParseError(source, line_no, "empty query text");
    if (!seen.insert(id).second) throw ParseError(source, line_no, "duplicate query_id '" + id + "'");
    queries.push_back(Query{std::move(id), std::move(text)});
  });
  return queries;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_queries(in, path.string());
}

void write_collection(const Collection& collection, std::ostream& out) {
  for (const auto& d : collection.documents()) out << d.doc_id << '\t' << d.text << '\n';
}

void write_queries(const std::vector<Query>& queries, std::ostream& out) {
  for (const auto& q : queries) out << q.query_id << '\t' << q.text << '\n';
}

void QrelStore::add(const std::string& query_id, const std::string& doc_id, int grade) {
  if (grade < range_.min_grade || grade > range_.max_grade) {
    throw DataError("grade " + std::to_string(grade) + " outside [" +
                    std::to_string(range_.min_grade) + ", " + std::to_string(range_.max_grade) +
                    "] for (" + query_id + ", " + doc_id + ")");
  }
  auto& judged = table_[query_id];
  auto [it, inserted] = judged.emplace(doc_id, grade);
  if (!inserted && it->second != grade) {
    throw DataError("conflicting grades " + std::to_string(it->second) + " and " +
                    std::to_string(grade) + " for (" + query_id + ", " + doc_id + ")");
  }
}

void QrelStore::merge(const QrelStore& other) {
  for (const auto& [qid, judged] : other.table_) {
    for (const auto& [docid, grade] : judged) add(qid, docid, grade);
  }
}

std::optional<int> QrelStore::grade(const std::string& query_id, const std::string& doc_id) const {
  const auto* judged = judgments(query_id);
  if (judged == nullptr) return std::nullopt;
  auto it = judged->find(doc_id);
  if (it == judged->end()) return std::nullopt;
  return it->second;
}

const QrelStore::Judgments* QrelStore::judgments(const std::string& query_id) const {
  auto it = table_.find(query_id);
  return it == table_.end() ? nullptr : &it->second;
}

std::vector<std::string> QrelStore::query_ids() const {
  std::vector<std::string> ids;
  ids.reserve(table_.size());
  for (const auto& [qid, _] : table_) ids.push_back(qid);
  return ids;
}

QrelStore parse_qrels(std::istream& in, const std::string& source, GradeRange range) {
  QrelStore store(range);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (is_blank(line)) continue;
    const auto fields = split_ws(line);
    if (fields.size() != 4) {
      throw ParseError(source, line_no,
                       "expected 4 columns `qid 0 docid grade`, found " + std::to_string(fields.size()));
    }
    const auto grade = parse_number<int>(fields[3]);
    if (!grade) throw ParseError(source, line_no, "non-integer grade '" + std::string(fields[3]) + "'");
    try {
      store.add(std::string(fields[0]), std::string(fields[2]), *grade);
    } catch (const DataError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return store;
}

QrelStore load_qrels(const std::filesystem::path& path, GradeRange range) {
  auto in = open_input(path);
  return parse_qrels(in, path.string(), range);
}

void write_qrels(const QrelStore& qrels, std::ostream& out) {
  for (const auto& qid : qrels.query_ids()) {
    for (const auto& [doc_id, grade] : *qrels.judgments(qid)) {
      out << qid << " 0 " << doc_id << ' ' << grade << '\n';
    }
  }
}

std::set<std::string> relevant_docs(const QrelStore& qrels, const std::string& query_id,
                                    int threshold) {
  if (threshold < 1) throw UsageError("relevance threshold must be >= 1");
  std::set<std::string> out;
  const auto* judged = qrels.judgments(query_id);
  if (judged == nullptr) {
    log::warn("no judgments for query '{}'", query_id);
    return out;
  }
  for (const auto& [doc_id, grade] : *judged) {
    if (grade >= threshold) out.insert(doc_id);
  }
  return out;
}

void RunStore::set(const std::string& query_id,
                   std::vector<std::pair<std::string, double>> ranked) {
  Ranking ranking;
  ranking.reserve(ranked.size());
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i > 0 && ranked[i].second > ranked[i - 1].second) {
      throw DataError("scores must be non-increasing for query '" + query_id + "'");
    }
    ranking.push_back(RunEntry{std::move(ranked[i].first), ranked[i].second, static_cast<int>(i + 1)});
  }
  for (const auto& e : ranking) {
    if (!seen.insert(e.doc_id).second) {
      throw DataError("duplicate doc_id '" + e.doc_id + "' in ranking for '" + query_id + "'");
    }
  }
  rankings_[query_id] = std::move(ranking);
}

const RunStore::Ranking* RunStore::ranking(const std::string& query_id) const {
  auto it = rankings_.find(query_id);
  return it == rankings_.end() ? nullptr : &it->second;
}

RunStore parse_run(std::istream& in, const std::string& source) {
  RunStore store;
  std::map<std::string, std::set<std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (is_blank(line)) continue;
    const auto fields = split_ws(line);
    if (fields.size() != 6) {
      throw ParseError(source, line_no,
                       "expected 6 columns `qid Q0 docid rank score tag`, found " +
                           std::to_string(fields.size()));
    }
    const auto rank = parse_number<int>(fields[3]);
    if (!rank || *rank < 1) throw ParseError(source, line_no, "invalid rank '" + std::string(fields[3]) + "'");
    const auto score = parse_number<double>(fields[4]);
    if (!score || !std::isfinite(*score)) {
      throw ParseError(source, line_no, "invalid score '" + std::string(fields[4]) + "'");
    }
    std::string qid(fields[0]);
    std::string docid(fields[2]);
    if (!seen[qid].insert(docid).second) {
      throw ParseError(source, line_no, "duplicate doc_id '" + docid + "' for query '" + qid + "'");
    }
    store.rankings_[qid].push_back(RunEntry{std::move(docid), *score, *rank});
  }

  for (auto& [qid, ranking] : store.rankings_) {
    std::stable_sort(ranking.begin(), ranking.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    const bool monotone = std::is_sorted(
        ranking.begin(), ranking.end(),
        [](const RunEntry& a, const RunEntry& b) { return a.score > b.score; });
    if (!monotone) {
      log::warn("{}: scores not monotone in rank for query '{}'; re-sorting by score", source, qid);
      std::stable_sort(ranking.begin(), ranking.end(),
                       [](const RunEntry& a, const RunEntry& b) { return a.score > b.score; });
    }
    bool renumbered = false;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      const int expected = static_cast<int>(i + 1);
      if (ranking[i].rank != expected) {
        ranking[i].rank = expected;
        renumbered = true;
      }
    }
    if (renumbered && monotone) {
      log::warn("{}: non-contiguous ranks for query '{}'; renumbered", source, qid);
    }
  }
  return store;
}

RunStore load_run(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_run(in, path.string());
}

void write_run(const RunStore& run, std::ostream& out, std::string_view tag) {
  for (const auto& [qid, ranking] : run.rankings()) {
    for (const auto& e : ranking) {
      out << fmt::format("{} Q0 {} {} {:.6f} {}\n", qid, e.doc_id, e.rank, e.score, tag);
    }
  }
}

void save_run(const RunStore& run, const std::filesystem::path& path, std::string_view tag) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_run(run, out, tag);
}

namespace {

constexpr char kDocMagic[8] = {'R', 'A', 'G', 'D', 'O', 'C', 'S', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("truncated doc store");
  return value;
}

}  // namespace

void DocStore::build(const Collection& collection, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<const Document*> sorted;
  sorted.reserve(collection.size());
  for (const auto& d : collection.documents()) sorted.push_back(&d);
  std::sort(sorted.begin(), sorted.end(),
            [](const Document* a, const Document* b) { return a->doc_id < b->doc_id; });

  const auto path = dir / "docs.bin";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kDocMagic, sizeof kDocMagic);
  put<std::uint64_t>(out, sorted.size());
  std::uint64_t offset = 0;
  for (const auto* d : sorted) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(d->doc_id.size()));
    out.write(d->doc_id.data(), static_cast<std::streamsize>(d->doc_id.size()));
    put<std::uint64_t>(out, offset);
    put<std::uint64_t>(out, d->text.size());
    offset += d->text.size();
  }
  for (const auto* d : sorted) out.write(d->text.data(), static_cast<std::streamsize>(d->text.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

bool DocStore::exists(const std::filesystem::path& dir) {
  return std::filesystem::is_regular_file(dir / "docs.bin");
}

DocStore DocStore::open(const std::filesystem::path& dir) {
  DocStore store;
  store.file_ = dir / "docs.bin";
  auto in = std::make_unique<std::ifstream>(store.file_, std::ios::binary);
  if (!*in) throw DataError("cannot open doc store " + store.file_.string());
  char magic[8];
  in->read(magic, sizeof magic);
  if (!*in || std::memcmp(magic, kDocMagic, sizeof magic) != 0) {
    throw DataError("not a doc store: " + store.file_.string());
  }
  const auto count = get<std::uint64_t>(*in);
  store.entries_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(*in);
    std::string id(len, '\0');
    in->read(id.data(), len);
    const auto offset = get<std::uint64_t>(*in);
    const auto length = get<std::uint64_t>(*in);
    store.entries_.push_back(Entry{std::move(id), offset, length});
  }
  store.blob_start_ = static_cast<std::uint64_t>(in->tellg());
  store.in_ = std::move(in);
  store.mutex_ = std::make_unique<std::mutex>();
  return store;
}

bool DocStore::contains(std::string_view doc_id) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), doc_id,
                             [](const Entry& e, std::string_view id) { return e.doc_id < id; });
  return it != entries_.end() && it->doc_id == doc_id;
}

std::optional<std::string> DocStore::text(std::string_view doc_id) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), doc_id,
                             [](const Entry& e, std::string_view id) { return e.doc_id < id; });
  if (it == entries_.end() || it->doc_id != doc_id) return std::nullopt;
  std::string text(it->length, '\0');
  std::lock_guard lock(*mutex_);
  in_->clear();
  in_->seekg(static_cast<std::streamoff>(blob_start_ + it->offset));
  in_->read(text.data(), static_cast<std::streamsize>(it->length));
  if (!*in_) throw DataError("truncated doc store " + file_.string());
  return text;
}

}  // namespace ragutil
