#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragutil/context.hpp"
#include "ragutil/corpus.hpp"
#include "ragutil/metrics.hpp"
#include "ragutil/retrieval.hpp"
#include "ragutil/semscore.hpp"

namespace ragutil {

struct StrategyConfig {
  std::string name;  // label used in reports, e.g. "BM25-r"
  Strategy kind = Strategy::TopK;
  std::string run;   // run name for topk kinds
};

struct GeneratorConfig {
  std::string type = "mock_truncating";  // or "http"
  std::size_t mock_m = 1;
  std::string url;
  std::string path = "/generate";
  std::string model_id = "default";
  std::string auth_env = "RAGUTIL_API_TOKEN";
  int max_tokens = 256;
  std::optional<double> temperature;
  int concurrency = 4;
  int max_attempts = 4;
  int initial_backoff_ms = 200;
  int timeout_s = 120;
};

struct EmbedderConfig {
  std::string type = "mock";  // or "http"
  std::size_t dim = 256;
  std::string url;
  std::string path = "/embed_tokens";
  std::string model_id = "default";
  int timeout_s = 60;
};

struct ExperimentConfig {
  std::filesystem::path config_path;
  std::string raw;  // canonical JSON text, hashed for stage fingerprints

  std::string dataset_id = "dataset";
  std::filesystem::path collection;
  std::filesystem::path queries;
  std::vector<std::filesystem::path> qrels;
  GradeRange grades;

  std::filesystem::path work_dir;
  std::filesystem::path index_dir;

  Bm25Params bm25;
  TokenizerOptions tokenizer;
  std::size_t k_max = 100;

  std::map<std::string, std::filesystem::path> runs;  // name -> run file
  struct Rerank {
    std::string base;
    std::filesystem::path scores;
    std::size_t depth = 100;
    std::string out;
  };
  std::optional<Rerank> rerank;

  std::vector<StrategyConfig> strategies;
  std::vector<std::size_t> k_values = {2, 5, 10, 15};
  std::vector<int> thresholds = {2, 3};
  int rel_threshold = 2;
  std::set<int> nonrel_grades = {0};
  std::uint64_t seed = 42;
  int n_runs = 5;

  std::optional<std::filesystem::path> prompt_template;
  PromptLimits prompt_limits;

  GeneratorConfig generator;
  EmbedderConfig embedder;
  ScoreOptions scoring;  // idf pointer is resolved at score time
  bool idf_weighting = false;

  Gain gain = Gain::Exponential;
  double alpha = 0.05;
  std::string baseline_oracle = "Rel";
  std::vector<std::size_t> scatter_k = {5};

  std::string hash() const;
  std::map<std::string, std::string> reversal_pairs() const;
  nlohmann::json to_json() const;
};

// Relative paths resolve against the config file's directory. Throws UsageError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

}  // namespace ragutil
