// ragutil: relevance-to-utility evaluation pipeline driver.

#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ragutil/config.hpp"
#include "ragutil/corpus.hpp"
#include "ragutil/error.hpp"
#include "ragutil/log.hpp"
#include "ragutil/pipeline.hpp"
#include "ragutil/retrieval.hpp"

namespace fs = std::filesystem;
using namespace ragutil;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ragutil: measure how retrieved-context relevance carries into RAG answer utility"};
  app.require_subcommand(1);

  std::string config_path;
  bool force = false;
  std::string only_queries;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress info and warning logs");

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "Experiment config (JSON)");
    if (config_required) opt->required();
    sub->add_flag("--force", force, "Re-run even if the stage is complete");
    sub->add_option("--only-queries", only_queries, "Comma-separated query ids to restrict to");
  };

  std::optional<std::string> collection, index_dir, queries, out_run, base_run, scores_path, run_path;
  std::optional<std::size_t> k_max;
  std::size_t depth = 100;
  std::string out_dir = "report";

  auto* index = app.add_subcommand("index", "Ingest the collection into a doc store and BM25 index");
  add_common(index, false);
  index->add_option("--collection", collection, "Collection TSV (doc_id<TAB>text)");
  index->add_option("--index-dir", index_dir, "Output index directory");

  auto* retrieve = app.add_subcommand("retrieve", "BM25 retrieval into a TREC run file");
  add_common(retrieve, false);
  retrieve->add_option("--index-dir", index_dir, "Index directory");
  retrieve->add_option("--queries", queries, "Queries TSV (qid<TAB>text)");
  retrieve->add_option("--k-max", k_max, "Results per query");
  retrieve->add_option("--out", out_run, "Output run file");

  auto* rerank = app.add_subcommand("rerank", "Re-rank the head of a run with external scores");
  add_common(rerank, false);
  rerank->add_option("--base-run", base_run, "Run to re-rank");
  auto* scores_opt = rerank->add_option("--scores", scores_path, "TSV qid<TAB>docid<TAB>score");
  auto* run_opt = rerank->add_option("--run", run_path, "Run file whose scores are used");
  scores_opt->excludes(run_opt);
  rerank->add_option("--depth", depth, "Re-rank depth")->check(CLI::PositiveNumber);
  rerank->add_option("--out", out_run, "Output run file");

  auto* generate = app.add_subcommand("generate", "Build contexts and prompts, collect answers");
  add_common(generate, true);
  auto* score = app.add_subcommand("score", "BERTScore answers against relevant documents");
  add_common(score, true);
  auto* analyze = app.add_subcommand("analyze", "Utilities, nDCG, correlations and significance");
  add_common(analyze, true);
  auto* report = app.add_subcommand("report", "Write tables, series and manifest");
  add_common(report, true);
  report->add_option("--out-dir", out_dir, "Report directory");
  auto* all = app.add_subcommand("run", "Run every stage in order");
  add_common(all, true);
  all->add_option("--out-dir", out_dir, "Report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  log::set_quiet(quiet);

  try {
    if (index->parsed() && config_path.empty()) {
      if (!collection || !index_dir) throw UsageError("index needs --config or both --collection and --index-dir");
      const auto coll = load_collection(*collection);
      DocStore::build(coll, *index_dir);
      build_index(coll).save(*index_dir);
      return 0;
    }
    if (retrieve->parsed() && config_path.empty()) {
      if (!index_dir || !queries || !out_run) throw UsageError("retrieve needs --config or --index-dir, --queries and --out");
      const auto idx = InvertedIndex::load(*index_dir);
      save_run(batch_search(idx, Bm25Params{}, load_queries(*queries), k_max.value_or(100)), *out_run, "bm25");
      return 0;
    }
    if (rerank->parsed() && (base_run || config_path.empty())) {
      if (!base_run || !out_run || (!scores_path && !run_path)) {
        throw UsageError("rerank needs --base-run, --out and one of --scores / --run");
      }
      const auto base = load_run(*base_run);
      const auto scores = scores_path ? load_rerank_scores(*scores_path) : scores_from_run(load_run(*run_path));
      save_run(apply_rerank(base, scores, depth), *out_run, "rerank");
      return 0;
    }

    PipelineOptions options;
    options.force = force;
    options.only_queries = split_csv(only_queries);
    Pipeline pipeline(load_config(config_path), options);
    auto opt_path = [](const std::optional<std::string>& s) -> std::optional<fs::path> {
      if (!s) return std::nullopt;
      return fs::path(*s);
    };

    if (index->parsed()) pipeline.index(opt_path(collection), opt_path(index_dir));
    else if (retrieve->parsed()) pipeline.retrieve(opt_path(index_dir), opt_path(queries), k_max, opt_path(out_run));
    else if (rerank->parsed()) pipeline.rerank();
    else if (generate->parsed()) pipeline.generate();
    else if (score->parsed()) pipeline.score();
    else if (analyze->parsed()) pipeline.analyze();
    else if (report->parsed()) pipeline.report(out_dir);
    else if (all->parsed()) pipeline.run_all(out_dir);
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
