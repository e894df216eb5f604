#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include <json.hpp>

#include "http_mock.hpp"
#include "ragutil/corpus.hpp"
#include "support.hpp"

using testsupport::read_file;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RAGUTIL_CLI_PATH) + " -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, StagesInOrderThenIdempotent) {
  TempDir dir;
  testsupport::copy_toy(dir.path());
  const auto cfg = "--config " + quoted(dir / "config.json");
  EXPECT_EQ(run_cli("index " + cfg), 0);
  EXPECT_EQ(run_cli("retrieve " + cfg), 0);
  EXPECT_EQ(run_cli("rerank " + cfg), 0);
  EXPECT_EQ(run_cli("generate " + cfg), 0);
  EXPECT_EQ(run_cli("score " + cfg), 0);
  EXPECT_EQ(run_cli("analyze " + cfg), 0);
  EXPECT_EQ(run_cli("report " + cfg + " --out-dir " + quoted(dir / "out")), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "utility_table.csv"));

  const auto before = read_file(dir / "work" / "gen_cache.jsonl");
  EXPECT_EQ(run_cli("generate " + cfg), 0);
  EXPECT_EQ(read_file(dir / "work" / "gen_cache.jsonl"), before);
}

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir;
  testsupport::copy_toy(dir.path());
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("generate"), 1);
  EXPECT_EQ(run_cli("generate --config " + quoted(dir / "missing.json")), 1);
  EXPECT_EQ(run_cli("analyze --config " + quoted(dir / "config.json")), 1);
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir dir;
  testsupport::write_file(dir / "bad.tsv", "d1 no tab here\n");
  EXPECT_EQ(run_cli("index --collection " + quoted(dir / "bad.tsv") + " --index-dir " +
                    quoted(dir / "idx")),
            2);
}

TEST(Cli, EndpointFailureExitsThree) {
  TempDir dir;
  testsupport::copy_toy(dir.path());
  auto j = nlohmann::json::parse(read_file(dir / "config.json"));
  j["generator"] = {{"type", "http"},
                    {"url", "http://127.0.0.1:" + std::to_string(testsupport::unused_port())},
                    {"max_attempts", 1},
                    {"initial_backoff_ms", 1},
                    {"timeout_s", 1}};
  j["n_runs"] = 1;
  testsupport::write_file(dir / "config.json", j.dump());
  const auto cfg = "--config " + quoted(dir / "config.json");
  EXPECT_EQ(run_cli("index " + cfg), 0);
  EXPECT_EQ(run_cli("retrieve " + cfg), 0);
  EXPECT_EQ(run_cli("rerank " + cfg), 0);
  EXPECT_EQ(run_cli("generate " + cfg + " --only-queries q1"), 3);
}

TEST(Cli, StandaloneRetrieveAndRerank) {
  TempDir dir;
  const auto toy = testsupport::toy_dir();
  EXPECT_EQ(run_cli("index --collection " + quoted(toy / "collection.tsv") + " --index-dir " +
                    quoted(dir / "idx")),
            0);
  EXPECT_EQ(run_cli("retrieve --index-dir " + quoted(dir / "idx") + " --queries " +
                    quoted(toy / "queries.tsv") + " --k-max 20 --out " + quoted(dir / "bm25.run")),
            0);
  auto run = ragutil::load_run(dir / "bm25.run");
  EXPECT_EQ(run.size(), 10u);
  EXPECT_EQ(run.ranking("q1")->size(), 20u);
  EXPECT_EQ(run_cli("rerank --base-run " + quoted(dir / "bm25.run") + " --scores " +
                    quoted(toy / "mt5_scores.tsv") + " --depth 10 --out " + quoted(dir / "mt5.run")),
            0);
  EXPECT_EQ(ragutil::load_run(dir / "mt5.run").ranking("q1")->size(), 10u);
}
