#include "ragutil/report.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ragutil/error.hpp"
#include "ragutil/log.hpp"

namespace ragutil {

using nlohmann::json;

std::string format_number(double value) { return fmt::format("{}", value); }

void write_records_jsonl(const std::vector<UtilityRecord>& records, std::ostream& out) {
  for (const auto& r : records) {
    json j = json::object();
    j["query_id"] = r.query_id;
    j["strategy"] = r.strategy;
    j["k"] = r.k;
    j["threshold"] = r.threshold;
    j["p_zero"] = r.p_zero;
    j["p_k"] = r.p_k;
    j["utility"] = r.utility;
    j["ndcg"] = r.ndcg ? json(*r.ndcg) : json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<UtilityRecord> read_records_jsonl(std::istream& in) {
  std::vector<UtilityRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      UtilityRecord r;
      r.query_id = j.at("query_id").get<std::string>();
      r.strategy = j.at("strategy").get<std::string>();
      r.k = j.at("k").get<std::size_t>();
      r.threshold = j.at("threshold").get<int>();
      r.p_zero = j.at("p_zero").get<double>();
      r.p_k = j.at("p_k").get<double>();
      r.utility = j.at("utility").get<double>();
      if (!j.at("ndcg").is_null()) r.ndcg = j.at("ndcg").get<double>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("records.jsonl", line_no, e.what());
    }
  }
  return records;
}

namespace {

struct CellKey {
  int threshold;
  std::size_t strategy_order;
  std::size_t k;
  auto operator<=>(const CellKey&) const = default;
};

struct CellData {
  std::string strategy;
  std::map<std::string, const UtilityRecord*> by_query;
};

// Pairwise test that treats identical series as "no difference" and a constant
// non-zero shift as maximally significant, where the t statistic itself is undefined.
std::pair<double, bool> compare(const CellData& a, const CellData& b, double alpha) {
  std::vector<double> xs, ys;
  for (const auto& [qid, rec] : a.by_query) {
    auto it = b.by_query.find(qid);
    if (it == b.by_query.end()) continue;
    xs.push_back(rec->utility);
    ys.push_back(it->second->utility);
  }
  if (xs.size() < 2) return {1.0, false};
  try {
    const auto rep = paired_t_test(xs, ys, alpha);
    return {rep.p_value, rep.significant};
  } catch (const DataError&) {
    const bool same = xs == ys;
    return {same ? 1.0 : 0.0, !same};
  }
}

}  // namespace

std::vector<TableCell> utility_table(const std::vector<UtilityRecord>& records,
                                     const TableOptions& options) {
  std::vector<std::string> strategy_order;
  auto order_of = [&](const std::string& s) {
    auto it = std::find(strategy_order.begin(), strategy_order.end(), s);
    if (it != strategy_order.end()) return static_cast<std::size_t>(it - strategy_order.begin());
    strategy_order.push_back(s);
    return strategy_order.size() - 1;
  };

  std::map<CellKey, CellData> cells;
  for (const auto& r : records) {
    auto& cell = cells[CellKey{r.threshold, order_of(r.strategy), r.k}];
    cell.strategy = r.strategy;
    if (!cell.by_query.emplace(r.query_id, &r).second) {
      throw DataError("duplicate record for query '" + r.query_id + "' in cell (" + r.strategy +
                      ", k=" + std::to_string(r.k) + ", threshold=" + std::to_string(r.threshold) + ")");
    }
  }

  // Every cell under one threshold must cover the same queries.
  std::map<int, std::set<std::string>> all_queries;
  for (const auto& [key, cell] : cells) {
    for (const auto& [qid, _] : cell.by_query) all_queries[key.threshold].insert(qid);
  }
  std::vector<std::string> problems;
  for (const auto& [key, cell] : cells) {
    for (const auto& qid : all_queries[key.threshold]) {
      if (!cell.by_query.contains(qid)) {
        problems.push_back(cell.strategy + "@k=" + std::to_string(key.k) + "/t=" +
                           std::to_string(key.threshold) + " missing " + qid);
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "mismatched query sets across cells: ";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += (i ? "; " : "") + problems[i];
    throw DataError(msg);
  }

  auto find_cell = [&](int threshold, const std::string& strategy, std::size_t k) -> const CellData* {
    auto it = std::find(strategy_order.begin(), strategy_order.end(), strategy);
    if (it == strategy_order.end()) return nullptr;
    auto c = cells.find(CellKey{threshold, static_cast<std::size_t>(it - strategy_order.begin()), k});
    return c == cells.end() ? nullptr : &c->second;
  };

  std::vector<TableCell> out;
  for (const auto& [key, cell] : cells) {
    TableCell t;
    t.threshold = key.threshold;
    t.strategy = cell.strategy;
    t.k = key.k;
    t.n_queries = cell.by_query.size();
    double su = 0.0, s0 = 0.0, sk = 0.0;
    for (const auto& [_, rec] : cell.by_query) {
      su += rec->utility;
      s0 += rec->p_zero;
      sk += rec->p_k;
    }
    const double n = static_cast<double>(t.n_queries);
    t.mean_utility = su / n;
    t.mean_p_zero = s0 / n;
    t.mean_p_k = sk / n;
    if (cell.strategy != options.baseline_oracle) {
      if (const auto* oracle = find_cell(key.threshold, options.baseline_oracle, key.k)) {
        auto [p, sig] = compare(cell, *oracle, options.alpha);
        t.p_vs_oracle = p;
        t.sig_vs_oracle = sig;
      }
    }
    if (auto rev = options.reversal_of.find(cell.strategy); rev != options.reversal_of.end()) {
      if (const auto* ordered = find_cell(key.threshold, rev->second, key.k)) {
        auto [p, sig] = compare(cell, *ordered, options.alpha);
        t.p_vs_reversal = p;
        t.sig_vs_reversal = sig;
      }
    }
    out.push_back(std::move(t));
  }

  std::map<std::pair<int, std::size_t>, double> column_best;
  for (const auto& c : out) {
    auto [it, inserted] = column_best.emplace(std::pair{c.threshold, c.k}, c.mean_utility);
    if (!inserted) it->second = std::max(it->second, c.mean_utility);
  }
  for (auto& c : out) c.column_max = c.mean_utility == column_best[{c.threshold, c.k}];
  return out;
}

namespace {

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

void write_table_csv(const std::vector<TableCell>& cells, std::ostream& out) {
  out << "threshold,strategy,k,n_queries,mean_p_zero,mean_p_k,mean_utility,p_vs_oracle,"
         "sig_vs_oracle,p_vs_reversal,sig_vs_reversal,column_max\n";
  for (const auto& c : cells) {
    out << c.threshold << ',' << c.strategy << ',' << c.k << ',' << c.n_queries << ','
        << format_number(c.mean_p_zero) << ',' << format_number(c.mean_p_k) << ','
        << format_number(c.mean_utility) << ',' << opt_number(c.p_vs_oracle) << ','
        << (c.sig_vs_oracle ? 1 : 0) << ',' << opt_number(c.p_vs_reversal) << ','
        << (c.sig_vs_reversal ? 1 : 0) << ',' << (c.column_max ? 1 : 0) << '\n';
  }
}

namespace {

// (threshold, strategy-first-appearance, k) grouping shared by the projections.
template <typename Fn>
void for_each_group(const std::vector<UtilityRecord>& records, bool by_k, Fn&& fn) {
  std::vector<std::string> order;
  std::map<std::tuple<int, std::size_t, std::size_t>, std::vector<const UtilityRecord*>> groups;
  for (const auto& r : records) {
    auto it = std::find(order.begin(), order.end(), r.strategy);
    const auto idx = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) order.push_back(r.strategy);
    groups[{r.threshold, idx, by_k ? r.k : 0}].push_back(&r);
  }
  for (auto& [key, recs] : groups) {
    std::sort(recs.begin(), recs.end(),
              [](const auto* a, const auto* b) { return a->query_id < b->query_id; });
    fn(std::get<0>(key), order[std::get<1>(key)], std::get<2>(key), recs);
  }
}

}  // namespace

std::vector<CorrelationPoint> correlation_series(const std::vector<UtilityRecord>& records) {
  std::vector<CorrelationPoint> out;
  for_each_group(records, true, [&](int threshold, const std::string& strategy, std::size_t k,
                                    const std::vector<const UtilityRecord*>& recs) {
    std::vector<double> xs, ys;
    std::size_t undefined = 0;
    for (const auto* r : recs) {
      if (!r->ndcg) {
        ++undefined;
        continue;
      }
      xs.push_back(*r->ndcg);
      ys.push_back(r->utility);
    }
    if (undefined > 0) {
      log::warn("{} k={} t={}: {} queries with undefined nDCG excluded", strategy, k, threshold, undefined);
    }
    if (xs.size() < 2) {
      log::warn("{} k={} t={}: fewer than 2 valid pairs; correlation omitted", strategy, k, threshold);
      return;
    }
    try {
      out.push_back(CorrelationPoint{threshold, strategy, k, pearson(xs, ys), xs.size()});
    } catch (const DataError&) {
      log::warn("{} k={} t={}: degenerate series; correlation omitted", strategy, k, threshold);
    }
  });
  return out;
}

void write_correlation_csv(const std::vector<CorrelationPoint>& points, std::ostream& out) {
  out << "threshold,strategy,k,pearson_r,n_queries\n";
  for (const auto& p : points) {
    out << p.threshold << ',' << p.strategy << ',' << p.k << ',' << format_number(p.pearson_r) << ','
        << p.n_queries << '\n';
  }
}

std::vector<ScatterGroup> scatter_export(const std::vector<UtilityRecord>& records, std::size_t k) {
  std::vector<UtilityRecord> at_k;
  std::copy_if(records.begin(), records.end(), std::back_inserter(at_k),
               [k](const UtilityRecord& r) { return r.k == k; });
  std::vector<ScatterGroup> out;
  for_each_group(at_k, false, [&](int threshold, const std::string& strategy, std::size_t,
                                  const std::vector<const UtilityRecord*>& recs) {
    ScatterGroup g;
    g.threshold = threshold;
    g.strategy = strategy;
    std::vector<double> xs, ys;
    for (const auto* r : recs) {
      if (!r->ndcg) continue;
      g.rows.push_back(ScatterRow{r->query_id, *r->ndcg, r->utility});
      xs.push_back(*r->ndcg);
      ys.push_back(r->utility);
    }
    if (xs.size() >= 2) {
      try {
        g.fit = linear_fit(xs, ys);
      } catch (const DataError&) {
        log::warn("{} k={} t={}: nDCG has no spread; no fit line", strategy, k, threshold);
      }
    }
    out.push_back(std::move(g));
  });
  return out;
}

void write_scatter_csv(const std::vector<ScatterGroup>& groups, std::ostream& out) {
  out << "threshold,strategy,query_id,ndcg,utility,fit_slope,fit_intercept\n";
  for (const auto& g : groups) {
    const auto slope = g.fit ? format_number(g.fit->slope) : "";
    const auto intercept = g.fit ? format_number(g.fit->intercept) : "";
    for (const auto& r : g.rows) {
      out << g.threshold << ',' << g.strategy << ',' << r.query_id << ',' << format_number(r.ndcg)
          << ',' << format_number(r.utility) << ',' << slope << ',' << intercept << '\n';
    }
  }
}

namespace {

double to_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError("bad number '" + s + "' in CSV");
  return v;
}

}  // namespace

std::vector<ScatterGroup> read_scatter_csv(std::istream& in) {
  std::vector<ScatterGroup> groups;
  std::string line;
  if (!std::getline(in, line)) return groups;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw DataError("scatter CSV row needs 7 fields: " + line);
    const int threshold = std::stoi(f[0]);
    if (groups.empty() || groups.back().threshold != threshold || groups.back().strategy != f[1]) {
      ScatterGroup g;
      g.threshold = threshold;
      g.strategy = f[1];
      if (!f[5].empty()) g.fit = LinearFit{to_double(f[5]), to_double(f[6])};
      groups.push_back(std::move(g));
    }
    groups.back().rows.push_back(ScatterRow{f[2], to_double(f[3]), to_double(f[4])});
  }
  return groups;
}

}  // namespace ragutil
