#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ragutil {

struct Document {
  std::string doc_id;
  std::string text;
  friend bool operator==(const Document&, const Document&) = default;
};

struct Query {
  std::string query_id;
  std::string text;
};

// Passage collection in file order, with lookup by doc_id.
class Collection {
 public:
  void add(Document doc);  // throws DataError on duplicate or empty id
  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }
  const Document* find(std::string_view doc_id) const;
  const std::vector<Document>& documents() const noexcept { return docs_; }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// MS MARCO style `doc_id<TAB>text`, one passage per line.
Collection load_collection(const std::filesystem::path& path);
Collection parse_collection(std::istream& in, const std::string& source);

// Queries use the same two-column TSV layout; text must be non-empty.
std::vector<Query> load_queries(const std::filesystem::path& path);
std::vector<Query> parse_queries(std::istream& in, const std::string& source);

void write_collection(const Collection& collection, std::ostream& out);
void write_queries(const std::vector<Query>& queries, std::ostream& out);

struct GradeRange {
  int min_grade = 0;
  int max_grade = 3;
};

// Graded judgments: query_id -> doc_id -> grade.
class QrelStore {
 public:
  using Judgments = std::map<std::string, int>;

  explicit QrelStore(GradeRange range = {}) : range_(range) {}

  // Identical duplicates are accepted; a conflicting grade throws DataError.
  void add(const std::string& query_id, const std::string& doc_id, int grade);
  void merge(const QrelStore& other);

  std::optional<int> grade(const std::string& query_id, const std::string& doc_id) const;
  const Judgments* judgments(const std::string& query_id) const;
  bool contains(const std::string& query_id) const { return table_.contains(query_id); }
  std::vector<std::string> query_ids() const;
  std::size_t size() const noexcept { return table_.size(); }
  GradeRange range() const noexcept { return range_; }

 private:
  GradeRange range_;
  std::map<std::string, Judgments> table_;
};

QrelStore load_qrels(const std::filesystem::path& path, GradeRange range = {});
QrelStore parse_qrels(std::istream& in, const std::string& source, GradeRange range = {});
// `qid 0 docid grade`, sorted by query then doc.
void write_qrels(const QrelStore& qrels, std::ostream& out);

// {d : grade(q, d) >= threshold}. Unknown queries yield an empty set and a warning.
std::set<std::string> relevant_docs(const QrelStore& qrels, const std::string& query_id,
                                    int threshold);

struct RunEntry {
  std::string doc_id;
  double score = 0.0;
  int rank = 0;  // 1-based
  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

// Ranked results per query. Ranks are contiguous from 1 and scores non-increasing.
class RunStore {
 public:
  using Ranking = std::vector<RunEntry>;

  // Takes (doc_id, score) pairs already in rank order and assigns ranks.
  void set(const std::string& query_id, std::vector<std::pair<std::string, double>> ranked);
  const Ranking* ranking(const std::string& query_id) const;
  const std::map<std::string, Ranking>& rankings() const noexcept { return rankings_; }
  std::size_t size() const noexcept { return rankings_.size(); }

  friend bool operator==(const RunStore&, const RunStore&) = default;

 private:
  friend RunStore parse_run(std::istream&, const std::string&);
  std::map<std::string, Ranking> rankings_;
};

// 6-column TREC run: `qid Q0 docid rank score tag`.
RunStore load_run(const std::filesystem::path& path);
RunStore parse_run(std::istream& in, const std::string& source);
void save_run(const RunStore& run, const std::filesystem::path& path, std::string_view tag);
void write_run(const RunStore& run, std::ostream& out, std::string_view tag);

// On-disk doc_id -> text store so a large collection is parsed from TSV only once.
//
// Layout of `docs.bin` (little-endian):
//   char[8] magic "RAGDOCS1"
//   u64     document count
//   count x { u32 id_len; char id[id_len]; u64 offset; u64 length }   sorted by id
//   blob    concatenated passage texts, offsets relative to blob start
class DocStore {
 public:
  static void build(const Collection& collection, const std::filesystem::path& dir);
  static DocStore open(const std::filesystem::path& dir);
  static bool exists(const std::filesystem::path& dir);

  std::optional<std::string> text(std::string_view doc_id) const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view doc_id) const;

 private:
  struct Entry {
    std::string doc_id;
    std::uint64_t offset;
    std::uint64_t length;
  };
  std::vector<Entry> entries_;
  std::uint64_t blob_start_ = 0;
  std::filesystem::path file_;
  mutable std::unique_ptr<std::ifstream> in_;
  mutable std::unique_ptr<std::mutex> mutex_;
};

}  // namespace ragutil
