#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ragutil/error.hpp"
#include "ragutil/report.hpp"

using namespace ragutil;

namespace {

UtilityRecord rec(const std::string& q, const std::string& s, std::size_t k, double u,
                  std::optional<double> ndcg = std::nullopt, int threshold = 2) {
  const double p0 = 0.5;
  return UtilityRecord{q, s, k, threshold, p0, p0 * (1 + u), u, ndcg};
}

const TableCell& cell(const std::vector<TableCell>& cells, const std::string& s, std::size_t k,
                      int threshold = 2) {
  for (const auto& c : cells) {
    if (c.strategy == s && c.k == k && c.threshold == threshold) return c;
  }
  throw std::runtime_error("no cell " + s);
}

}  // namespace

TEST(RecordsJsonl, RoundTrip) {
  std::vector<UtilityRecord> records = {rec("q1", "BM25", 2, 0.1, 0.5), rec("q2", "BM25", 2, -0.25)};
  records[0].p_zero = 0.6427;
  records[0].p_k = 0.70722;
  std::stringstream ss;
  write_records_jsonl(records, ss);
  EXPECT_EQ(read_records_jsonl(ss), records);
  std::istringstream bad("{\"query_id\":1}\n");
  EXPECT_THROW(read_records_jsonl(bad), ParseError);
}

TEST(UtilityTable, IdenticalStrategiesHaveNoMarkers) {
  std::vector<UtilityRecord> r;
  const double us[] = {0.1, -0.2, 0.05, 0.3};
  for (int i = 0; i < 4; ++i) {
    r.push_back(rec("q" + std::to_string(i), "Rel", 5, us[i]));
    r.push_back(rec("q" + std::to_string(i), "A", 5, us[i]));
  }
  auto cells = utility_table(r);
  ASSERT_EQ(cells.size(), 2u);
  const auto& a = cell(cells, "A", 5);
  EXPECT_FALSE(a.sig_vs_oracle);
  EXPECT_NEAR(*a.p_vs_oracle, 1.0, 1e-12);
  EXPECT_FALSE(cell(cells, "Rel", 5).p_vs_oracle.has_value());
  EXPECT_TRUE(a.column_max);
  EXPECT_TRUE(cell(cells, "Rel", 5).column_max);
}

TEST(UtilityTable, ConsistentlyWorseGetsDagger) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<UtilityRecord> r;
  for (int i = 0; i < 10; ++i) {
    const double u = 0.1 * i;
    r.push_back(rec("q" + std::to_string(i), "Rel", 2, u));
    r.push_back(rec("q" + std::to_string(i), "A", 2, u - 0.2 + noise(gen)));
  }
  auto cells = utility_table(r);
  const auto& a = cell(cells, "A", 2);
  EXPECT_TRUE(a.sig_vs_oracle);
  EXPECT_LT(*a.p_vs_oracle, 0.05);
  EXPECT_TRUE(cell(cells, "Rel", 2).column_max);
  EXPECT_FALSE(a.column_max);
}

TEST(UtilityTable, ExactConstantShiftIsSignificant) {
  std::vector<UtilityRecord> r;
  for (int i = 0; i < 4; ++i) {
    r.push_back(rec("q" + std::to_string(i), "Rel", 2, 0.5));
    r.push_back(rec("q" + std::to_string(i), "A", 2, 0.25));
  }
  const auto& a = cell(utility_table(r), "A", 2);
  EXPECT_TRUE(a.sig_vs_oracle);
  EXPECT_EQ(*a.p_vs_oracle, 0.0);
}

TEST(UtilityTable, DoubleDaggerOnReversedCell) {
  std::vector<UtilityRecord> r;
  for (int i = 0; i < 8; ++i) {
    const auto q = "q" + std::to_string(i);
    r.push_back(rec(q, "BM25", 2, 0.3 + 0.01 * i));
    r.push_back(rec(q, "BM25-r", 2, -0.2 + 0.013 * (i % 3)));
    r.push_back(rec(q, "Rel", 2, 0.5 + 0.02 * i));
  }
  TableOptions opt;
  opt.reversal_of = {{"BM25-r", "BM25"}};
  auto cells = utility_table(r, opt);
  EXPECT_TRUE(cell(cells, "BM25-r", 2).sig_vs_reversal);
  EXPECT_FALSE(cell(cells, "BM25", 2).sig_vs_reversal);
  EXPECT_FALSE(cell(cells, "BM25", 2).p_vs_reversal.has_value());
}

TEST(UtilityTable, MeansAndShape) {
  std::vector<UtilityRecord> r;
  for (int t : {2, 3}) {
    for (std::size_t k : {2, 5, 10}) {
      for (const char* s : {"BM25", "Rel", "NRel"}) {
        for (int i = 0; i < 3; ++i) r.push_back(rec("q" + std::to_string(i), s, k, 0.1 * i + t, {}, t));
      }
    }
  }
  auto cells = utility_table(r);
  EXPECT_EQ(cells.size(), 3u * 3u * 2u);
  EXPECT_NEAR(cell(cells, "NRel", 5, 3).mean_utility, 3.1, 1e-12);
  EXPECT_EQ(cells.front().strategy, "BM25");
  EXPECT_EQ(cells.front().threshold, 2);
  EXPECT_EQ(cells.back().threshold, 3);
}

TEST(UtilityTable, MismatchedQuerySetsListed) {
  std::vector<UtilityRecord> r = {rec("q1", "Rel", 2, 0.1), rec("q2", "Rel", 2, 0.2),
                                  rec("q1", "A", 2, 0.0)};
  try {
    utility_table(r);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing q2"), std::string::npos);
  }
}

TEST(UtilityTable, CsvLayout) {
  std::vector<UtilityRecord> r = {rec("q1", "Rel", 2, 0.5), rec("q2", "Rel", 2, 0.25)};
  std::ostringstream out;
  write_table_csv(utility_table(r), out);
  EXPECT_EQ(out.str(),
            "threshold,strategy,k,n_queries,mean_p_zero,mean_p_k,mean_utility,p_vs_oracle,"
            "sig_vs_oracle,p_vs_reversal,sig_vs_reversal,column_max\n"
            "2,Rel,2,2,0.5,0.6875,0.375,,0,,0,1\n");
}

TEST(Correlation, ProportionalIsOne) {
  std::vector<UtilityRecord> r;
  for (std::size_t k : {2, 5}) {
    for (int i = 0; i < 6; ++i) {
      const double n = 0.1 + 0.15 * i;
      r.push_back(rec("q" + std::to_string(i), "BM25", k, 2.0 * n, n));
    }
  }
  auto pts = correlation_series(r);
  ASSERT_EQ(pts.size(), 2u);
  for (const auto& p : pts) {
    EXPECT_NEAR(p.pearson_r, 1.0, 1e-12);
    EXPECT_EQ(p.n_queries, 6u);
  }
}

TEST(Correlation, SeededIndependentFixture) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<UtilityRecord> r;
  std::vector<double> xs, ys;
  for (int i = 0; i < 50; ++i) {
    const double n = u(gen), ut = u(gen) - 0.5;
    xs.push_back(n);
    ys.push_back(ut);
    r.push_back(rec("q" + std::to_string(100 + i), "BM25", 5, ut, n));
  }
  // Deviation-form oracle over the same fixture.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / 50;
    my += ys[i] / 50;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  auto pts = correlation_series(r);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].pearson_r, sxy / std::sqrt(sxx * syy), 1e-12);
  EXPECT_LT(std::fabs(pts[0].pearson_r), 0.3);
}

TEST(Correlation, TooFewOrDegenerateCellsOmitted) {
  std::vector<UtilityRecord> r = {
      rec("q1", "A", 2, 0.1, 0.5), rec("q2", "A", 2, 0.2, std::nullopt),  // one valid pair
      rec("q1", "B", 2, 0.1, 0.0), rec("q2", "B", 2, 0.3, 0.0),           // zero nDCG spread
      rec("q1", "C", 2, 0.1, 0.2), rec("q2", "C", 2, 0.3, 0.6)};
  auto pts = correlation_series(r);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].strategy, "C");
  std::ostringstream out;
  write_correlation_csv(pts, out);
  EXPECT_EQ(out.str(), "threshold,strategy,k,pearson_r,n_queries\n2,C,2,1,2\n");
}

TEST(Scatter, CollinearFitExact) {
  std::vector<UtilityRecord> r;
  for (int i = 0; i < 3; ++i) {
    const double n = 0.2 * (i + 1);
    r.push_back(rec("q" + std::to_string(i), "BM25", 5, 1.5 * n - 0.4, n));
  }
  r.push_back(rec("q9", "BM25", 2, 9.0, 0.9));
  auto groups = scatter_export(r, 5);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].rows.size(), 3u);
  ASSERT_TRUE(groups[0].fit.has_value());
  EXPECT_NEAR(groups[0].fit->slope, 1.5, 1e-12);
  EXPECT_NEAR(groups[0].fit->intercept, -0.4, 1e-12);
}

TEST(Scatter, CsvRoundTrip) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<UtilityRecord> r;
  for (int t : {2, 3}) {
    for (const char* s : {"BM25", "Rel", "NRel"}) {
      for (int i = 0; i < 7; ++i) {
        const bool zero = std::string(s) == "NRel";
        r.push_back(rec("q" + std::to_string(i), s, 5, u(gen) - 0.3, zero ? 0.0 : u(gen), t));
      }
    }
  }
  auto groups = scatter_export(r, 5);
  std::stringstream ss;
  write_scatter_csv(groups, ss);
  auto back = read_scatter_csv(ss);
  ASSERT_EQ(back.size(), groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    EXPECT_EQ(back[g].threshold, groups[g].threshold);
    EXPECT_EQ(back[g].strategy, groups[g].strategy);
    EXPECT_EQ(back[g].rows, groups[g].rows);
    ASSERT_EQ(back[g].fit.has_value(), groups[g].fit.has_value());
    if (groups[g].fit) {
      EXPECT_EQ(back[g].fit->slope, groups[g].fit->slope);
      EXPECT_EQ(back[g].fit->intercept, groups[g].fit->intercept);
    }
  }
  // Rows reproduce the source records exactly.
  for (const auto& g : back) {
    for (const auto& row : g.rows) {
      auto it = std::find_if(r.begin(), r.end(), [&](const UtilityRecord& x) {
        return x.threshold == g.threshold && x.strategy == g.strategy && x.query_id == row.query_id;
      });
      ASSERT_NE(it, r.end());
      EXPECT_EQ(*it->ndcg, row.ndcg);
      EXPECT_EQ(it->utility, row.utility);
    }
  }
}

TEST(Scatter, SlopeSignMatchesCorrelation) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<UtilityRecord> r;
    const double beta = nd(gen);
    for (int i = 0; i < 8; ++i) {
      const double n = std::fabs(nd(gen));
      r.push_back(rec("q" + std::to_string(i), "S", 5, beta * n + nd(gen), n));
    }
    auto g = scatter_export(r, 5);
    auto c = correlation_series(r);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(std::signbit(g[0].fit->slope), std::signbit(c[0].pearson_r));
  }
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-0.0359), "-0.0359");
  EXPECT_EQ(format_number(1.0), "1");
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_number(x)), x);
}
