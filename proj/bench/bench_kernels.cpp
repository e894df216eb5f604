// Serial reference kernels vs their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "ragutil/kernels.hpp"
#include "ragutil/retrieval.hpp"

using namespace ragutil;

namespace {

TokenEmbeddings random_embeddings(std::mt19937_64& gen, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> nd;
  std::vector<std::string> tokens(n, "t");
  std::vector<double> values(n * dim);
  for (auto& v : values) v = nd(gen);
  return TokenEmbeddings(tokens, dim, values);
}

std::string random_text(std::mt19937_64& gen, int vocab, int len) {
  std::string s;
  for (int i = 0; i < len; ++i) s += "w" + std::to_string(gen() % vocab) + " ";
  return s;
}

struct SearchFixture {
  InvertedIndex index;
  std::vector<Query> queries;
};

const SearchFixture& search_fixture() {
  static const SearchFixture f = [] {
    std::mt19937_64 gen(7);
    Collection c;
    for (int i = 0; i < 20000; ++i) c.add({"d" + std::to_string(i), random_text(gen, 5000, 60)});
    SearchFixture out{build_index(c), {}};
    for (int i = 0; i < 256; ++i) out.queries.push_back({"q" + std::to_string(i), random_text(gen, 5000, 6)});
    return out;
  }();
  return f;
}

// 512-token answer against a reference of the same size, 768-d like a BERT layer.
void BM_GreedyMatchSerial(benchmark::State& state) {
  std::mt19937_64 gen(1);
  auto a = random_embeddings(gen, state.range(0), 768);
  auto b = random_embeddings(gen, state.range(0), 768);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::greedy_match_serial(a, b));
}
void BM_GreedyMatch(benchmark::State& state) {
  std::mt19937_64 gen(1);
  auto a = random_embeddings(gen, state.range(0), 768);
  auto b = random_embeddings(gen, state.range(0), 768);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::greedy_match(a, b));
}

struct F1Fixture {
  std::vector<TokenEmbeddings> candidates, references;
  std::vector<kernels::ScoringPair> pairs;
};

const F1Fixture& f1_fixture() {
  static const F1Fixture f = [] {
    std::mt19937_64 gen(2);
    F1Fixture out;
    for (int i = 0; i < 64; ++i) out.candidates.push_back(random_embeddings(gen, 40 + gen() % 40, 256));
    for (int i = 0; i < 32; ++i) out.references.push_back(random_embeddings(gen, 60 + gen() % 60, 256));
    for (std::size_t c = 0; c < out.candidates.size(); ++c)
      for (std::size_t r = 0; r < out.references.size(); ++r) out.pairs.push_back({c, r});
    return out;
  }();
  return f;
}

void BM_F1BatchSerial(benchmark::State& state) {
  const auto& f = f1_fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::f1_batch_serial(f.candidates, f.references, f.pairs, {}));
}
void BM_F1Batch(benchmark::State& state) {
  const auto& f = f1_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::f1_batch(f.candidates, f.references, f.pairs, {}));
}

void BM_BatchSearchSerial(benchmark::State& state) {
  const auto& f = search_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(batch_search_serial(f.index, {}, f.queries, 100));
}
void BM_BatchSearch(benchmark::State& state) {
  const auto& f = search_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(batch_search(f.index, {}, f.queries, 100));
}

}  // namespace

BENCHMARK(BM_GreedyMatchSerial)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GreedyMatch)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_F1BatchSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_F1Batch)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BatchSearchSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BatchSearch)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
