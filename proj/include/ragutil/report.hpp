#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ragutil/metrics.hpp"

namespace ragutil {

// One query under one (strategy, k, relevance threshold) configuration.
struct UtilityRecord {
  std::string query_id;
  std::string strategy;
  std::size_t k = 0;
  int threshold = 0;
  double p_zero = 0.0;  // mean 0-shot F_BERT over runs
  double p_k = 0.0;     // mean k-shot F_BERT over runs
  double utility = 0.0;
  std::optional<double> ndcg;  // nullopt: undefined for this query

  friend bool operator==(const UtilityRecord&, const UtilityRecord&) = default;
};

void write_records_jsonl(const std::vector<UtilityRecord>& records, std::ostream& out);
std::vector<UtilityRecord> read_records_jsonl(std::istream& in);

struct TableOptions {
  std::string baseline_oracle = "Rel";
  double alpha = 0.05;
  // reversed strategy -> its ordered counterpart, e.g. "BM25-r" -> "BM25"
  std::map<std::string, std::string> reversal_of;
};

struct TableCell {
  int threshold = 0;
  std::string strategy;
  std::size_t k = 0;
  std::size_t n_queries = 0;
  double mean_p_zero = 0.0;
  double mean_p_k = 0.0;
  double mean_utility = 0.0;
  std::optional<double> p_vs_oracle;
  bool sig_vs_oracle = false;  // dagger
  std::optional<double> p_vs_reversal;
  bool sig_vs_reversal = false;  // double dagger, set on the reversed strategy's cell
  bool column_max = false;       // bold
};

// Cells ordered by threshold, then strategy order of first appearance, then k.
// Throws DataError when cells under one threshold disagree on their query set.
std::vector<TableCell> utility_table(const std::vector<UtilityRecord>& records,
                                     const TableOptions& options = {});
void write_table_csv(const std::vector<TableCell>& cells, std::ostream& out);

struct CorrelationPoint {
  int threshold = 0;
  std::string strategy;
  std::size_t k = 0;
  double pearson_r = 0.0;
  std::size_t n_queries = 0;
};

// Pearson r between nDCG@k and utility per (threshold, strategy, k). Queries with
// undefined nDCG are excluded; cells with < 2 pairs or zero variance are omitted.
std::vector<CorrelationPoint> correlation_series(const std::vector<UtilityRecord>& records);
void write_correlation_csv(const std::vector<CorrelationPoint>& points, std::ostream& out);

struct ScatterRow {
  std::string query_id;
  double ndcg = 0.0;
  double utility = 0.0;
  friend bool operator==(const ScatterRow&, const ScatterRow&) = default;
};

struct ScatterGroup {
  int threshold = 0;
  std::string strategy;
  std::vector<ScatterRow> rows;
  std::optional<LinearFit> fit;  // absent when nDCG has no spread
};

std::vector<ScatterGroup> scatter_export(const std::vector<UtilityRecord>& records, std::size_t k);
void write_scatter_csv(const std::vector<ScatterGroup>& groups, std::ostream& out);
std::vector<ScatterGroup> read_scatter_csv(std::istream& in);

// Shortest round-trip decimal form used for every number in the reports.
std::string format_number(double value);

}  // namespace ragutil
