#include <gtest/gtest.h>

#include <atomic>

#include <json.hpp>

#include "ragutil/config.hpp"
#include "ragutil/error.hpp"
#include "ragutil/pipeline.hpp"
#include "ragutil/report.hpp"
#include "support.hpp"

using namespace ragutil;
using nlohmann::json;
using testsupport::read_file;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

class CountingMock : public GenerationBackend {
 public:
  std::string model_id() const override { return inner_.model_id(); }
  std::string complete(const GenRequest& r) override {
    ++calls;
    return inner_.complete(r);
  }
  std::atomic<int> calls{0};

 private:
  MockTruncatingBackend inner_{1};
};

ExperimentConfig toy_config(const TempDir& dir) {
  testsupport::copy_toy(dir.path());
  return load_config(dir / "config.json");
}

const char* kReportFiles[] = {"utility_table.csv", "correlation_vs_k.csv", "records.jsonl",
                              "scatter_k5.csv"};

}  // namespace

TEST(Config, ToyConfigParses) {
  TempDir dir;
  auto c = toy_config(dir);
  EXPECT_EQ(c.strategies.size(), 6u);
  EXPECT_EQ(c.k_values, (std::vector<std::size_t>{2, 5, 10, 15}));
  EXPECT_EQ(c.n_runs, 5);
  EXPECT_EQ(c.collection, dir / "collection.tsv");
  EXPECT_EQ(c.reversal_pairs().at("BM25-r"), "BM25");
  EXPECT_EQ(c.reversal_pairs().at("MT5-r"), "MT5");
  EXPECT_EQ(c.hash(), load_config(dir / "config.json").hash());
}

TEST(Config, InvalidConfigsAreUsageErrors) {
  TempDir dir;
  testsupport::copy_toy(dir.path());
  auto base = json::parse(read_file(dir / "config.json"));
  auto broken = [&](auto mutate) {
    auto j = base;
    mutate(j);
    return parse_config(j, dir.path());
  };
  EXPECT_THROW(broken([](json& j) { j.erase("strategies"); }), UsageError);
  EXPECT_THROW(broken([](json& j) { j["strategies"][0]["kind"] = "magic"; }), UsageError);
  EXPECT_THROW(broken([](json& j) { j["n_runs"] = 0; }), UsageError);
  EXPECT_THROW(broken([](json& j) { j["k_values"] = json::array({0}); }), UsageError);
  EXPECT_THROW(broken([](json& j) { j["generator"]["type"] = "ftp"; }), UsageError);
  EXPECT_THROW(broken([](json& j) { j["strategies"][0]["run"] = "nope"; }), UsageError);
  EXPECT_THROW(load_config(dir / "absent.json"), UsageError);
}

TEST(Pipeline, ToyRunEmitsAllReports) {
  TempDir dir;
  Pipeline p(toy_config(dir));
  p.run_all(dir / "report");
  for (const char* f : kReportFiles) EXPECT_TRUE(fs::exists(dir / "report" / f)) << f;
  EXPECT_TRUE(fs::exists(dir / "report" / "manifest.json"));

  std::ifstream in(dir / "report" / "records.jsonl");
  auto records = read_records_jsonl(in);
  // 10 queries x 6 strategies x 4 k values x 2 thresholds.
  EXPECT_EQ(records.size(), 480u);
  auto manifest = json::parse(read_file(dir / "report" / "manifest.json"));
  EXPECT_EQ(manifest["seeds"]["base_seed"], 42);

  std::ifstream table_in(dir / "report" / "utility_table.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(table_in, line)) ++rows;
  EXPECT_EQ(rows, 1u + 6u * 4u * 2u);
}

TEST(Pipeline, ToyTableMatchesFixture) {
  TempDir dir;
  Pipeline p(toy_config(dir));
  p.run_all(dir / "report");
  const auto golden = testsupport::fixture_dir() / "golden" / "toy";
  for (const char* f : {"utility_table.csv", "correlation_vs_k.csv", "scatter_k5.csv"}) {
    EXPECT_EQ(read_file(dir / "report" / f), read_file(golden / f)) << f;
  }
}

TEST(Pipeline, RerunOfGenerateMakesNoCalls) {
  TempDir dir;
  auto config = toy_config(dir);
  {
    Pipeline p(config);
    CountingMock backend;
    p.use_generation_backend(backend);
    p.run_all(dir / "report");
    EXPECT_GT(backend.calls, 0);
    EXPECT_EQ(p.generation_calls(), static_cast<std::size_t>(backend.calls.load()));
  }
  {
    Pipeline p(config);
    CountingMock backend;
    p.use_generation_backend(backend);
    EXPECT_EQ(p.generate(), StageStatus::Skipped);
    EXPECT_EQ(backend.calls, 0);
  }
  {
    // Forced regeneration replays everything from the cache.
    PipelineOptions forced;
    forced.force = true;
    Pipeline p(config, forced);
    CountingMock backend;
    p.use_generation_backend(backend);
    EXPECT_EQ(p.generate(), StageStatus::Ran);
    EXPECT_EQ(backend.calls, 0);
  }
}

TEST(Pipeline, AnalyzeBeforeScoreNamesMissingStage) {
  TempDir dir;
  Pipeline p(toy_config(dir));
  p.index();
  p.retrieve();
  p.rerank();
  p.generate();
  try {
    p.analyze();
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("`score`"), std::string::npos) << e.what();
  }
  EXPECT_THROW(p.report(dir / "r"), UsageError);
}

TEST(Pipeline, GenerateWithoutIndexIsUsageError) {
  TempDir dir;
  Pipeline p(toy_config(dir));
  EXPECT_THROW(p.generate(), UsageError);
}

TEST(Pipeline, TwoRunsAreByteIdentical) {
  TempDir a, b;
  Pipeline(toy_config(a)).run_all(a / "report");
  Pipeline(toy_config(b)).run_all(b / "report");
  for (const char* f : kReportFiles) {
    EXPECT_EQ(read_file(a / "report" / f), read_file(b / "report" / f)) << f;
  }
  EXPECT_EQ(read_file(a / "work" / "generations.jsonl"), read_file(b / "work" / "generations.jsonl"));
}

TEST(Pipeline, ConfigChangeInvalidatesStages) {
  TempDir dir;
  auto config = toy_config(dir);
  Pipeline(config).run_all(dir / "report");
  auto j = json::parse(read_file(dir / "config.json"));
  j["n_runs"] = 2;
  testsupport::write_file(dir / "config.json", j.dump());
  Pipeline p(load_config(dir / "config.json"));
  EXPECT_EQ(p.generate(), StageStatus::Ran);
}

TEST(Pipeline, OnlyQueriesRestrictsRecords) {
  TempDir dir;
  PipelineOptions only;
  only.only_queries = {"q1", "q3"};
  Pipeline p(toy_config(dir), only);
  p.run_all(dir / "report");
  std::ifstream in(dir / "report" / "records.jsonl");
  auto records = read_records_jsonl(in);
  EXPECT_EQ(records.size(), 2u * 6u * 4u * 2u);
  for (const auto& r : records) EXPECT_TRUE(r.query_id == "q1" || r.query_id == "q3");
}

TEST(Pipeline, QueryWithoutRelevantJudgmentsExcluded) {
  TempDir dir;
  auto config = toy_config(dir);
  // Strip every relevant judgment of q2 so its Rel pool is empty.
  std::string kept;
  std::istringstream qrels(read_file(dir / "qrels.txt"));
  std::string line;
  while (std::getline(qrels, line)) {
    std::istringstream f(line);
    std::string q, zero, d;
    int g;
    f >> q >> zero >> d >> g;
    if (q == "q2" && g >= 2) continue;
    kept += line + "\n";
  }
  testsupport::write_file(dir / "qrels.txt", kept);
  Pipeline p(config);
  p.run_all(dir / "report");
  auto excluded = json::parse(read_file(dir / "work" / "excluded_queries.json"));
  EXPECT_EQ(excluded, json::array({"q2"}));
  std::ifstream in(dir / "report" / "records.jsonl");
  for (const auto& r : read_records_jsonl(in)) EXPECT_NE(r.query_id, "q2");
}
