#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragutil/config.hpp"
#include "ragutil/genclient.hpp"
#include "ragutil/semscore.hpp"

namespace ragutil {

struct PipelineOptions {
  bool force = false;
  std::vector<std::string> only_queries;  // empty: all
};

enum class StageStatus { Ran, Skipped };

// Stage artifacts under work_dir; completion is recorded in work_dir/stages.json
// with a fingerprint of the config, so re-running a finished stage is a no-op
// unless forced or the config changed.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config, PipelineOptions options = {});
  ~Pipeline();

  // Replace the configured endpoints, e.g. with instrumented test doubles.
  void use_generation_backend(GenerationBackend& backend) { backend_override_ = &backend; }
  void use_embedder(Embedder& embedder) { embedder_override_ = &embedder; }

  StageStatus index(const std::optional<std::filesystem::path>& collection = {},
                    const std::optional<std::filesystem::path>& index_dir = {});
  StageStatus retrieve(const std::optional<std::filesystem::path>& index_dir = {},
                       const std::optional<std::filesystem::path>& queries = {},
                       std::optional<std::size_t> k_max = {},
                       const std::optional<std::filesystem::path>& out_run = {});
  StageStatus rerank();
  StageStatus generate();
  StageStatus score();
  StageStatus analyze();
  StageStatus report(const std::filesystem::path& out_dir);

  // index, retrieve, rerank (when configured), generate, score, analyze, report.
  void run_all(const std::filesystem::path& out_dir);

  std::size_t generation_calls() const noexcept { return generation_calls_; }
  const ExperimentConfig& config() const noexcept { return config_; }

  std::filesystem::path generations_path() const { return config_.work_dir / "generations.jsonl"; }
  std::filesystem::path scores_path() const { return config_.work_dir / "scores.jsonl"; }
  std::filesystem::path records_path() const { return config_.work_dir / "records.jsonl"; }

 private:
  bool stage_done(const std::string& stage) const;
  void mark_done(const std::string& stage);
  void require(const std::string& stage, const std::string& needed_by) const;
  std::string fingerprint(const std::string& stage) const;
  std::vector<Query> selected_queries() const;
  QrelStore load_all_qrels() const;

  ExperimentConfig config_;
  PipelineOptions options_;
  GenerationBackend* backend_override_ = nullptr;
  Embedder* embedder_override_ = nullptr;
  std::size_t generation_calls_ = 0;
};

}  // namespace ragutil
