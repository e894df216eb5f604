#include "ragutil/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ragutil/context.hpp"
#include "ragutil/error.hpp"
#include "ragutil/hash.hpp"
#include "ragutil/kernels.hpp"
#include "ragutil/log.hpp"
#include "ragutil/metrics.hpp"
#include "ragutil/report.hpp"
#include "ragutil/retrieval.hpp"

namespace ragutil {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kZeroShot = "0-shot";

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  return std::to_string(secs);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return json::object();
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    log::warn("{} is corrupt; treating as empty", path.string());
    return json::object();
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp);
    out << text;
    if (!out) throw DataError("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return rows;
}

std::unique_ptr<GenerationBackend> make_backend(const GeneratorConfig& g) {
  if (g.type == "mock_truncating") return std::make_unique<MockTruncatingBackend>(g.mock_m);
  HttpEndpoint ep;
  ep.base_url = g.url;
  ep.path = g.path;
  if (const char* token = std::getenv(g.auth_env.c_str())) ep.auth_token = token;
  ep.timeout = std::chrono::seconds(g.timeout_s);
  ep.retry.max_attempts = g.max_attempts;
  ep.retry.initial_backoff = std::chrono::milliseconds(g.initial_backoff_ms);
  return std::make_unique<HttpGenerationBackend>(ep, g.model_id);
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& e) {
  if (e.type == "mock") return std::make_unique<HashEmbedder>(e.dim);
  return std::make_unique<HttpEmbedder>(e.url, e.path, e.model_id, std::chrono::seconds(e.timeout_s));
}

// Index of a (strategy, k) cell within the generation grid; the 0-shot cell is k = 0.
struct Cell {
  std::string strategy;
  Strategy kind;
  std::string run;
  std::size_t k;
};

}  // namespace

Pipeline::Pipeline(ExperimentConfig config, PipelineOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  std::sort(options_.only_queries.begin(), options_.only_queries.end());
}

Pipeline::~Pipeline() = default;

std::string Pipeline::fingerprint(const std::string& stage) const {
  std::string material = stage + '\n' + config_.hash();
  for (const auto& q : options_.only_queries) material += '\n' + q;
  return sha256_hex(material);
}

bool Pipeline::stage_done(const std::string& stage) const {
  const auto stages = read_json_file(config_.work_dir / "stages.json");
  return stages.contains(stage) && stages[stage].value("fingerprint", "") == fingerprint(stage);
}

void Pipeline::mark_done(const std::string& stage) {
  auto stages = read_json_file(config_.work_dir / "stages.json");
  stages[stage] = json{{"fingerprint", fingerprint(stage)}, {"completed_at", timestamp()}};
  write_text_file(config_.work_dir / "stages.json", stages.dump(2) + "\n");
}

void Pipeline::require(const std::string& stage, const std::string& needed_by) const {
  if (!stage_done(stage)) {
    throw UsageError("`" + needed_by + "` needs the `" + stage + "` stage; run `ragutil " + stage +
                     " --config " + config_.config_path.string() + "` first");
  }
}

std::vector<Query> Pipeline::selected_queries() const {
  auto queries = load_queries(config_.queries);
  if (options_.only_queries.empty()) return queries;
  std::vector<Query> out;
  for (auto& q : queries) {
    if (std::binary_search(options_.only_queries.begin(), options_.only_queries.end(), q.query_id)) {
      out.push_back(std::move(q));
    }
  }
  if (out.size() != options_.only_queries.size()) log::warn("some --only-queries ids are not in the query file");
  return out;
}

QrelStore Pipeline::load_all_qrels() const {
  if (config_.qrels.empty()) throw UsageError("config lists no qrels files");
  QrelStore merged(config_.grades);
  for (const auto& path : config_.qrels) merged.merge(load_qrels(path, config_.grades));
  return merged;
}

StageStatus Pipeline::index(const std::optional<fs::path>& collection_path,
                            const std::optional<fs::path>& index_dir) {
  const auto src = collection_path.value_or(config_.collection);
  const auto dir = index_dir.value_or(config_.index_dir);
  const bool default_paths = !collection_path && !index_dir;
  if (default_paths && !options_.force && stage_done("index") && DocStore::exists(dir)) {
    log::info("index: already complete");
    return StageStatus::Skipped;
  }
  const auto collection = load_collection(src);
  DocStore::build(collection, dir);
  const auto idx = build_index(collection, config_.tokenizer);
  idx.save(dir);
  log::info("index: {} documents, {} terms -> {}", idx.doc_count(), idx.vocabulary_size(), dir.string());
  if (default_paths) mark_done("index");
  return StageStatus::Ran;
}

StageStatus Pipeline::retrieve(const std::optional<fs::path>& index_dir,
                               const std::optional<fs::path>& queries_path,
                               std::optional<std::size_t> k_max, const std::optional<fs::path>& out_run) {
  const bool default_paths = !index_dir && !queries_path && !k_max && !out_run;
  fs::path out;
  if (out_run) {
    out = *out_run;
  } else {
    // The first configured run not produced by rerank is the BM25 run.
    for (const auto& [name, path] : config_.runs) {
      if (!config_.rerank || config_.rerank->out != name) {
        out = path;
        break;
      }
    }
    if (out.empty()) throw UsageError("no output run path: pass --out or configure 'runs'");
  }
  if (default_paths && !options_.force && stage_done("retrieve") && fs::exists(out)) {
    log::info("retrieve: already complete");
    return StageStatus::Skipped;
  }
  const auto dir = index_dir.value_or(config_.index_dir);
  if (!fs::exists(dir / "index.bin")) {
    throw UsageError("no index in " + dir.string() + "; run `ragutil index` first");
  }
  const auto idx = InvertedIndex::load(dir);
  const auto queries = queries_path ? load_queries(*queries_path) : selected_queries();
  const auto run = batch_search(idx, config_.bm25, queries, k_max.value_or(config_.k_max));
  save_run(run, out, "bm25");
  log::info("retrieve: {} queries -> {}", run.size(), out.string());
  if (default_paths) mark_done("retrieve");
  return StageStatus::Ran;
}

StageStatus Pipeline::rerank() {
  if (!config_.rerank) throw UsageError("config has no 'rerank' section");
  const auto& rr = *config_.rerank;
  const auto out = config_.runs.at(rr.out);
  if (!options_.force && stage_done("rerank") && fs::exists(out)) {
    log::info("rerank: already complete");
    return StageStatus::Skipped;
  }
  const auto base_path = config_.runs.at(rr.base);
  if (!fs::exists(base_path)) throw UsageError("base run " + base_path.string() + " missing; run `ragutil retrieve` first");
  const auto base = load_run(base_path);
  const auto scores = load_rerank_scores(rr.scores);
  save_run(apply_rerank(base, scores, rr.depth), out, rr.out);
  mark_done("rerank");
  return StageStatus::Ran;
}

StageStatus Pipeline::generate() {
  if (!options_.force && stage_done("generate") && fs::exists(generations_path())) {
    log::info("generate: already complete");
    return StageStatus::Skipped;
  }
  if (!DocStore::exists(config_.index_dir)) {
    throw UsageError("no document store in " + config_.index_dir.string() + "; run `ragutil index` first");
  }
  const auto docs = DocStore::open(config_.index_dir);
  const auto qrels = load_all_qrels();
  const auto queries = selected_queries();

  std::map<std::string, RunStore> runs;
  for (const auto& s : config_.strategies) {
    if (s.run.empty() || runs.contains(s.run)) continue;
    const auto path = config_.runs.at(s.run);
    if (!fs::exists(path)) {
      throw UsageError("run '" + s.run + "' (" + path.string() + ") missing; run `ragutil retrieve` or `ragutil rerank` first");
    }
    runs.emplace(s.run, load_run(path));
  }

  std::vector<Cell> cells;
  cells.push_back(Cell{std::string(kZeroShot), Strategy::ZeroShot, "", 0});
  for (const auto& s : config_.strategies) {
    for (auto k : config_.k_values) cells.push_back(Cell{s.name, s.kind, s.run, k});
  }

  const auto tmpl = config_.prompt_template ? PromptTemplate::load(*config_.prompt_template)
                                            : PromptTemplate::default_template();
  const TextLookup lookup = [&docs](const std::string& id) { return docs.text(id); };

  struct Job {
    std::string query_id;
    const Cell* cell;
    std::vector<std::string> context_ids;
    PromptInstance prompt;
  };
  std::vector<Job> jobs;
  std::vector<std::string> excluded;
  for (const auto& q : queries) {
    std::vector<Job> query_jobs;
    try {
      for (const auto& cell : cells) {
        ContextSpec spec{cell.kind, cell.k, config_.seed, config_.rel_threshold, config_.nonrel_grades};
        const RunStore* run = cell.run.empty() ? nullptr : &runs.at(cell.run);
        auto ctx = build_context(spec, run, qrels, q.query_id, lookup);
        Job job{q.query_id, &cell, {}, {}};
        for (const auto& d : ctx.docs) job.context_ids.push_back(d.doc_id);
        job.prompt = assemble_prompt(q.text, ctx.docs, tmpl, config_.prompt_limits);
        query_jobs.push_back(std::move(job));
      }
    } catch (const DataError& e) {
      // Keep every report cell on a common query set.
      log::warn("excluding query '{}' from the experiment: {}", q.query_id, e.what());
      excluded.push_back(q.query_id);
      continue;
    }
    for (auto& j : query_jobs) jobs.push_back(std::move(j));
  }

  std::unique_ptr<GenerationBackend> owned;
  GenerationBackend* backend = backend_override_;
  if (backend == nullptr) {
    owned = make_backend(config_.generator);
    backend = owned.get();
  }
  GenCache cache(config_.work_dir / "gen_cache.jsonl");
  GenClient client(*backend, cache);

  std::vector<GenRequest> requests;
  requests.reserve(jobs.size() * static_cast<std::size_t>(config_.n_runs));
  for (const auto& job : jobs) {
    GenRequest base;
    base.prompt = job.prompt.text;
    base.max_new_tokens = config_.generator.max_tokens;
    base.temperature = config_.generator.temperature;
    base.seed = static_cast<std::int64_t>(config_.seed);
    for (int r = 0; r < config_.n_runs; ++r) {
      GenRequest req = base;
      req.run_index = r;
      req.seed = base.seed + r;
      requests.push_back(std::move(req));
    }
  }
  const auto records = client.generate_all(requests, config_.generator.concurrency);
  generation_calls_ += client.backend_calls();

  std::ostringstream out;
  std::size_t empty_answers = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (int r = 0; r < config_.n_runs; ++r) {
      const auto& rec = records[j * static_cast<std::size_t>(config_.n_runs) + static_cast<std::size_t>(r)];
      if (rec.empty_answer) ++empty_answers;
      json row = {{"query_id", jobs[j].query_id},
                  {"strategy", jobs[j].cell->strategy},
                  {"kind", to_string(jobs[j].cell->kind)},
                  {"k", jobs[j].cell->k},
                  {"run_index", r},
                  {"context_ids", jobs[j].context_ids},
                  {"prompt_tokens", jobs[j].prompt.token_estimate},
                  {"model_id", rec.model_id},
                  {"answer_text", rec.answer_text},
                  {"empty_answer", rec.empty_answer}};
      out << row.dump() << '\n';
    }
  }
  write_text_file(generations_path(), out.str());
  write_text_file(config_.work_dir / "excluded_queries.json", json(excluded).dump() + "\n");
  if (empty_answers > 0) log::warn("generate: {} empty answers (scored as 0)", empty_answers);
  log::info("generate: {} prompts x {} runs, {} endpoint calls", jobs.size(), config_.n_runs,
            client.backend_calls());
  mark_done("generate");
  return StageStatus::Ran;
}

StageStatus Pipeline::score() {
  require("generate", "score");
  if (!options_.force && stage_done("score") && fs::exists(scores_path())) {
    log::info("score: already complete");
    return StageStatus::Skipped;
  }
  const auto rows = read_jsonl(generations_path());
  const auto qrels = load_all_qrels();
  const auto docs = DocStore::open(config_.index_dir);

  std::unique_ptr<Embedder> owned;
  Embedder* base = embedder_override_;
  if (base == nullptr) {
    owned = make_embedder(config_.embedder);
    base = owned.get();
  }
  const fs::path cache_path = config_.embedder.type == "http" ? config_.work_dir / "embed_cache.jsonl" : fs::path{};
  CachingEmbedder embedder(*base, cache_path);

  // Unique texts, embedded once each.
  std::vector<TokenEmbeddings> answers;
  std::map<std::string, std::size_t> answer_slot;
  std::vector<std::size_t> row_answer(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto text = rows[i].at("answer_text").get<std::string>();
    auto [it, inserted] = answer_slot.emplace(text, answers.size());
    if (inserted) answers.push_back(embedder.embed(text));
    row_answer[i] = it->second;
  }
  std::vector<TokenEmbeddings> references;
  std::map<std::string, std::size_t> ref_slot;
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> truth;  // (threshold, qid) -> refs
  std::set<std::string> qids;
  for (const auto& row : rows) qids.insert(row.at("query_id").get<std::string>());
  for (int t : config_.thresholds) {
    for (const auto& qid : qids) {
      std::vector<std::size_t> slots;
      for (const auto& doc_id : relevant_docs(qrels, qid, t)) {
        auto [it, inserted] = ref_slot.emplace(doc_id, references.size());
        if (inserted) {
          auto text = docs.text(doc_id);
          if (!text) throw DataError("judged document '" + doc_id + "' not in collection");
          references.push_back(embedder.embed(*text));
        }
        slots.push_back(it->second);
      }
      if (slots.empty()) log::warn("query '{}' has no relevant documents at threshold {}; skipped", qid, t);
      truth[{t, qid}] = std::move(slots);
    }
  }

  IdfTable idf;
  ScoreOptions options = config_.scoring;
  if (config_.idf_weighting) {
    std::vector<std::vector<std::string>> token_lists;
    for (const auto& r : references) token_lists.push_back(r.tokens());
    idf = compute_idf(token_lists);
    options.idf = &idf;
  }

  // All (answer, reference) pairs that any (row, threshold) needs.
  std::vector<kernels::ScoringPair> pairs;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pair_slot;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto qid = rows[i].at("query_id").get<std::string>();
    for (int t : config_.thresholds) {
      for (auto ref : truth[{t, qid}]) {
        if (pair_slot.emplace(std::pair{row_answer[i], ref}, pairs.size()).second) {
          pairs.push_back(kernels::ScoringPair{row_answer[i], ref});
        }
      }
    }
  }
  const auto f1 = kernels::f1_batch(answers, references, pairs, options);

  std::ostringstream out;
  for (int t : config_.thresholds) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& row = rows[i];
      const auto qid = row.at("query_id").get<std::string>();
      const auto& refs = truth[{t, qid}];
      if (refs.empty()) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (auto ref : refs) best = std::max(best, f1[pair_slot.at({row_answer[i], ref})]);
      json s = {{"query_id", qid},
                {"strategy", row.at("strategy")},
                {"k", row.at("k")},
                {"run_index", row.at("run_index")},
                {"threshold", t},
                {"f_bert", best}};
      out << s.dump() << '\n';
    }
  }
  write_text_file(scores_path(), out.str());
  log::info("score: {} answers x {} references, {} pairs", answers.size(), references.size(), pairs.size());
  mark_done("score");
  return StageStatus::Ran;
}

StageStatus Pipeline::analyze() {
  require("score", "analyze");
  if (!options_.force && stage_done("analyze") && fs::exists(records_path())) {
    log::info("analyze: already complete");
    return StageStatus::Skipped;
  }
  const auto generations = read_jsonl(generations_path());
  const auto scores = read_jsonl(scores_path());
  const auto qrels = load_all_qrels();

  // Query order and context ids (identical across runs) from the generation log.
  std::vector<std::string> query_order;
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<std::string>> contexts;
  for (const auto& g : generations) {
    const auto qid = g.at("query_id").get<std::string>();
    if (std::find(query_order.begin(), query_order.end(), qid) == query_order.end()) query_order.push_back(qid);
    contexts[{qid, g.at("strategy").get<std::string>(), g.at("k").get<std::size_t>()}] =
        g.at("context_ids").get<std::vector<std::string>>();
  }

  // (threshold, qid, strategy, k) -> F_BERT per run
  std::map<std::tuple<int, std::string, std::string, std::size_t>, std::vector<double>> perf;
  for (const auto& s : scores) {
    perf[{s.at("threshold").get<int>(), s.at("query_id").get<std::string>(), s.at("strategy").get<std::string>(),
          s.at("k").get<std::size_t>()}]
        .push_back(s.at("f_bert").get<double>());
  }

  std::vector<UtilityRecord> records;
  for (int t : config_.thresholds) {
    for (const auto& strat : config_.strategies) {
      for (auto k : config_.k_values) {
        for (const auto& qid : query_order) {
          auto zero = perf.find({t, qid, std::string(kZeroShot), 0});
          auto cell = perf.find({t, qid, strat.name, k});
          if (zero == perf.end() || cell == perf.end()) continue;
          UtilityRecord r;
          r.query_id = qid;
          r.strategy = strat.name;
          r.k = k;
          r.threshold = t;
          r.p_zero = mean(zero->second);
          r.p_k = mean(cell->second);
          if (!(r.p_zero > 0.0)) {
            log::warn("query '{}' threshold {}: 0-shot performance {} <= 0; utility undefined, skipped", qid, t, r.p_zero);
            continue;
          }
          r.utility = utility(r.p_k, r.p_zero);
          if (const auto* judged = qrels.judgments(qid)) {
            r.ndcg = ndcg_at_k(contexts.at({qid, strat.name, k}), *judged, k, config_.gain);
          }
          records.push_back(std::move(r));
        }
      }
    }
  }
  std::ostringstream out;
  write_records_jsonl(records, out);
  write_text_file(records_path(), out.str());

  TableOptions topts{config_.baseline_oracle, config_.alpha, config_.reversal_pairs()};
  for (const auto& c : utility_table(records, topts)) {
    log::info("t={} {:>8} k={:>2}  U={:+.4f}{}{}{}", c.threshold, c.strategy, c.k, c.mean_utility,
              c.sig_vs_oracle ? " +" : "", c.sig_vs_reversal ? " ++" : "", c.column_max ? " *" : "");
  }
  mark_done("analyze");
  return StageStatus::Ran;
}

StageStatus Pipeline::report(const fs::path& out_dir) {
  require("analyze", "report");
  std::ifstream in(records_path());
  if (!in) throw DataError("cannot open " + records_path().string());
  const auto records = read_records_jsonl(in);

  TableOptions topts{config_.baseline_oracle, config_.alpha, config_.reversal_pairs()};
  std::ostringstream table, corr, rec;
  write_table_csv(utility_table(records, topts), table);
  write_correlation_csv(correlation_series(records), corr);
  write_records_jsonl(records, rec);
  write_text_file(out_dir / "utility_table.csv", table.str());
  write_text_file(out_dir / "correlation_vs_k.csv", corr.str());
  write_text_file(out_dir / "records.jsonl", rec.str());
  for (auto k : config_.scatter_k) {
    std::ostringstream scatter;
    write_scatter_csv(scatter_export(records, k), scatter);
    write_text_file(out_dir / fmt::format("scatter_k{}.csv", k), scatter.str());
  }

  std::string model_id = backend_override_ ? backend_override_->model_id() : make_backend(config_.generator)->model_id();
  std::string embedder_id = embedder_override_ ? embedder_override_->provider_id() : make_embedder(config_.embedder)->provider_id();
  json strategies = json::array();
  for (const auto& s : config_.strategies) {
    strategies.push_back({{"name", s.name}, {"kind", to_string(s.kind)}, {"run", s.run}});
  }
  json manifest = {
      {"config_hash", config_.hash()},
      {"config", config_.to_json()},
      {"dataset", {{"id", config_.dataset_id},
                   {"collection", config_.collection.string()},
                   {"queries", config_.queries.string()},
                   {"qrels", [&] {
                      json a = json::array();
                      for (const auto& q : config_.qrels) a.push_back(q.string());
                      return a;
                    }()}}},
      {"strategies", strategies},
      {"k_values", config_.k_values},
      {"thresholds", config_.thresholds},
      {"seeds", {{"base_seed", config_.seed}, {"n_runs", config_.n_runs}, {"per_run", "base_seed + run_index"}}},
      {"oracle", {{"rel_threshold", config_.rel_threshold}, {"nonrel_grades", config_.nonrel_grades}}},
      {"models", {{"generator", model_id}, {"embedder", embedder_id}}},
      {"retrieval", {{"k1", config_.bm25.k1}, {"b", config_.bm25.b}, {"stem", config_.tokenizer.stem},
                     {"stopwords", config_.tokenizer.remove_stopwords}}},
      {"metrics", {{"gain", config_.gain == Gain::Exponential ? "exponential" : "linear"},
                   {"alpha", config_.alpha},
                   {"baseline_oracle", config_.baseline_oracle},
                   {"idf_weighting", config_.idf_weighting},
                   {"baseline_rescaling", config_.scoring.baseline ? json(*config_.scoring.baseline) : json(nullptr)},
                   {"reference_window", config_.scoring.reference_window},
                   {"token_budget", config_.prompt_limits.token_budget},
                   {"token_inflation", config_.prompt_limits.estimator.inflation}}},
      {"only_queries", options_.only_queries},
      {"stages", read_json_file(config_.work_dir / "stages.json")},
      {"created_at", timestamp()}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  log::info("report: wrote {}", out_dir.string());
  return StageStatus::Ran;
}

void Pipeline::run_all(const fs::path& out_dir) {
  index();
  retrieve();
  if (config_.rerank) rerank();
  generate();
  score();
  analyze();
  report(out_dir);
}

}  // namespace ragutil
