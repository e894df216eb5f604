#include "ragutil/config.hpp"

#include <fstream>

#include "ragutil/error.hpp"
#include "ragutil/hash.hpp"

namespace ragutil {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base) {
  ExperimentConfig c;
  try {
    c.raw = j.dump();
    const auto& ds = j.at("dataset");
    read_opt(ds, "id", c.dataset_id);
    c.collection = resolve(base, ds.at("collection").get<std::string>());
    c.queries = resolve(base, ds.at("queries").get<std::string>());
    if (ds.at("qrels").is_string()) {
      c.qrels.push_back(resolve(base, ds["qrels"].get<std::string>()));
    } else {
      for (const auto& q : ds.at("qrels")) c.qrels.push_back(resolve(base, q.get<std::string>()));
    }
    if (ds.contains("grade_range")) {
      const auto& gr = ds["grade_range"];
      c.grades = GradeRange{gr.at(0).get<int>(), gr.at(1).get<int>()};
    }

    c.work_dir = resolve(base, j.value("work_dir", std::string("work")));
    c.index_dir = j.contains("index_dir") ? resolve(base, j["index_dir"].get<std::string>())
                                          : c.work_dir / "index";

    if (j.contains("retrieval")) {
      const auto& r = j["retrieval"];
      read_opt(r, "k1", c.bm25.k1);
      read_opt(r, "b", c.bm25.b);
      read_opt(r, "stem", c.tokenizer.stem);
      read_opt(r, "stopwords", c.tokenizer.remove_stopwords);
      read_opt(r, "k_max", c.k_max);
    }
    c.bm25.validate();

    if (j.contains("runs")) {
      for (const auto& [name, path] : j["runs"].items()) c.runs[name] = resolve(base, path.get<std::string>());
    }
    if (j.contains("rerank") && !j["rerank"].is_null()) {
      const auto& r = j["rerank"];
      ExperimentConfig::Rerank rr;
      rr.base = r.at("base").get<std::string>();
      rr.scores = resolve(base, r.at("scores").get<std::string>());
      read_opt(r, "depth", rr.depth);
      rr.out = r.at("out").get<std::string>();
      if (!c.runs.contains(rr.base) || !c.runs.contains(rr.out)) {
        throw UsageError("rerank base/out must name entries in 'runs'");
      }
      c.rerank = rr;
    }

    for (const auto& s : j.at("strategies")) {
      StrategyConfig sc;
      sc.name = s.at("name").get<std::string>();
      sc.kind = parse_strategy(s.at("kind").get<std::string>());
      if (sc.kind == Strategy::ZeroShot) throw UsageError("zero_shot is implicit; do not list it");
      if (sc.kind == Strategy::TopK || sc.kind == Strategy::TopKReversed) {
        sc.run = s.at("run").get<std::string>();
        if (!c.runs.contains(sc.run)) throw UsageError("strategy '" + sc.name + "' uses unknown run '" + sc.run + "'");
      }
      for (const auto& other : c.strategies) {
        if (other.name == sc.name) throw UsageError("duplicate strategy name '" + sc.name + "'");
      }
      c.strategies.push_back(std::move(sc));
    }
    read_opt(j, "k_values", c.k_values);
    read_opt(j, "thresholds", c.thresholds);
    if (j.contains("oracle")) {
      read_opt(j["oracle"], "rel_threshold", c.rel_threshold);
      read_opt(j["oracle"], "nonrel_grades", c.nonrel_grades);
    }
    read_opt(j, "seed", c.seed);
    read_opt(j, "n_runs", c.n_runs);

    if (j.contains("prompt")) {
      const auto& p = j["prompt"];
      if (p.contains("template") && !p["template"].is_null()) {
        c.prompt_template = resolve(base, p["template"].get<std::string>());
      }
      read_opt(p, "token_budget", c.prompt_limits.token_budget);
      read_opt(p, "max_context", c.prompt_limits.max_context);
      read_opt(p, "token_inflation", c.prompt_limits.estimator.inflation);
    }

    if (j.contains("generator")) {
      const auto& g = j["generator"];
      auto& gc = c.generator;
      read_opt(g, "type", gc.type);
      read_opt(g, "m", gc.mock_m);
      read_opt(g, "url", gc.url);
      read_opt(g, "path", gc.path);
      read_opt(g, "model_id", gc.model_id);
      read_opt(g, "auth_env", gc.auth_env);
      read_opt(g, "max_tokens", gc.max_tokens);
      if (g.contains("temperature") && !g["temperature"].is_null()) gc.temperature = g["temperature"].get<double>();
      read_opt(g, "concurrency", gc.concurrency);
      read_opt(g, "max_attempts", gc.max_attempts);
      read_opt(g, "initial_backoff_ms", gc.initial_backoff_ms);
      read_opt(g, "timeout_s", gc.timeout_s);
      if (gc.type != "mock_truncating" && gc.type != "http") throw UsageError("unknown generator type '" + gc.type + "'");
      if (gc.type == "http" && gc.url.empty()) throw UsageError("generator.url is required for http");
    }
    if (j.contains("embedder")) {
      const auto& e = j["embedder"];
      auto& ec = c.embedder;
      read_opt(e, "type", ec.type);
      read_opt(e, "dim", ec.dim);
      read_opt(e, "url", ec.url);
      read_opt(e, "path", ec.path);
      read_opt(e, "model_id", ec.model_id);
      read_opt(e, "timeout_s", ec.timeout_s);
      if (ec.type != "mock" && ec.type != "http") throw UsageError("unknown embedder type '" + ec.type + "'");
      if (ec.type == "http" && ec.url.empty()) throw UsageError("embedder.url is required for http");
    }
    if (j.contains("scoring")) {
      const auto& s = j["scoring"];
      read_opt(s, "idf", c.idf_weighting);
      if (s.contains("baseline") && !s["baseline"].is_null()) c.scoring.baseline = s["baseline"].get<double>();
      read_opt(s, "reference_window", c.scoring.reference_window);
    }
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      const auto gain = m.value("gain", std::string("exponential"));
      if (gain == "exponential") c.gain = Gain::Exponential;
      else if (gain == "linear") c.gain = Gain::Linear;
      else throw UsageError("metrics.gain must be exponential or linear");
      read_opt(m, "alpha", c.alpha);
      read_opt(m, "baseline_oracle", c.baseline_oracle);
    }
    if (j.contains("report")) read_opt(j["report"], "scatter_k", c.scatter_k);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }

  if (c.n_runs < 1) throw UsageError("n_runs must be >= 1");
  for (auto k : c.k_values) {
    if (k == 0 || k > c.prompt_limits.max_context) {
      throw UsageError("k values must lie in [1, " + std::to_string(c.prompt_limits.max_context) + "]");
    }
  }
  for (int t : c.thresholds) {
    if (t < 1) throw UsageError("relevance thresholds must be >= 1");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto c = parse_config(j, std::filesystem::absolute(path).parent_path());
  c.config_path = path;
  return c;
}

std::string ExperimentConfig::hash() const { return sha256_hex(raw); }

std::map<std::string, std::string> ExperimentConfig::reversal_pairs() const {
  std::map<std::string, std::string> out;
  for (const auto& rev : strategies) {
    if (rev.kind != Strategy::TopKReversed) continue;
    for (const auto& fwd : strategies) {
      if (fwd.kind == Strategy::TopK && fwd.run == rev.run) out[rev.name] = fwd.name;
    }
  }
  return out;
}

json ExperimentConfig::to_json() const { return json::parse(raw); }

}  // namespace ragutil
