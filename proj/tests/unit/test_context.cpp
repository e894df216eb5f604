#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ragutil/context.hpp"
#include "ragutil/error.hpp"
#include "ragutil/log.hpp"
#include "support.hpp"

using namespace ragutil;
using Ids = std::vector<std::string>;

namespace {

RunStore five_doc_run() {
  RunStore run;
  run.set("q1", {{"d1", 5}, {"d2", 4}, {"d3", 3}, {"d4", 2}, {"d5", 1}});
  return run;
}

QrelStore graded_qrels() {
  QrelStore q;
  q.add("q1", "r1", 3);
  q.add("q1", "r2", 2);
  q.add("q1", "r3", 2);
  q.add("q1", "m1", 1);
  for (int i = 0; i < 8; ++i) q.add("q1", "n" + std::to_string(i), 0);
  return q;
}

ContextSpec spec(Strategy s, std::size_t k, std::uint64_t seed = 42) {
  ContextSpec c;
  c.strategy = s;
  c.k = k;
  c.seed = seed;
  return c;
}

std::string words(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " w" : "w") + std::to_string(i % 97);
  return out;
}

}  // namespace

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {Strategy::ZeroShot, Strategy::TopK, Strategy::TopKReversed, Strategy::RelOracle,
                 Strategy::NRelOracle}) {
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_strategy("best"), UsageError);
}

TEST(ContextSpec, KZeroOnlyForZeroShot) {
  EXPECT_NO_THROW(spec(Strategy::ZeroShot, 0).validate());
  EXPECT_THROW(spec(Strategy::ZeroShot, 2).validate(), UsageError);
  EXPECT_THROW(spec(Strategy::TopK, 0).validate(), UsageError);
}

TEST(SelectContext, TopKAndReversed) {
  auto run = five_doc_run();
  QrelStore none;
  EXPECT_EQ(select_context_ids(spec(Strategy::TopK, 2), &run, none, "q1"), (Ids{"d1", "d2"}));
  EXPECT_EQ(select_context_ids(spec(Strategy::TopKReversed, 2), &run, none, "q1"), (Ids{"d2", "d1"}));
}

TEST(SelectContext, ReversedIsSameSetAndInvolution) {
  auto run = five_doc_run();
  QrelStore none;
  for (std::size_t k = 1; k <= 5; ++k) {
    auto fwd = select_context_ids(spec(Strategy::TopK, k), &run, none, "q1");
    auto rev = select_context_ids(spec(Strategy::TopKReversed, k), &run, none, "q1");
    std::reverse(rev.begin(), rev.end());
    EXPECT_EQ(fwd, rev);
  }
}

TEST(SelectContext, ShortRunUsesAllAndWarns) {
  auto run = five_doc_run();
  const auto before = log::warning_count();
  auto ids = select_context_ids(spec(Strategy::TopK, 10), &run, QrelStore{}, "q1");
  EXPECT_EQ(ids.size(), 5u);
  EXPECT_GT(log::warning_count(), before);
}

TEST(SelectContext, MissingRunIsDataError) {
  auto run = five_doc_run();
  EXPECT_THROW(select_context_ids(spec(Strategy::TopK, 2), &run, QrelStore{}, "q9"), DataError);
  EXPECT_THROW(select_context_ids(spec(Strategy::TopK, 2), nullptr, QrelStore{}, "q1"), DataError);
}

TEST(SelectContext, RelTakesAllWhenFewerThanK) {
  auto ids = select_context_ids(spec(Strategy::RelOracle, 5), nullptr, graded_qrels(), "q1");
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()),
            (std::set<std::string>{"r1", "r2", "r3"}));
}

TEST(SelectContext, OracleDeterministicPerSeed) {
  auto q = graded_qrels();
  auto a = select_context_ids(spec(Strategy::NRelOracle, 4, 7), nullptr, q, "q1");
  auto b = select_context_ids(spec(Strategy::NRelOracle, 4, 7), nullptr, q, "q1");
  EXPECT_EQ(a, b);
  // Different seeds should not all collapse onto one sample.
  std::set<Ids> seen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    seen.insert(select_context_ids(spec(Strategy::NRelOracle, 4, s), nullptr, q, "q1"));
  }
  EXPECT_GT(seen.size(), 1u);
}

TEST(SelectContext, OracleGradesRespectPools) {
  auto q = graded_qrels();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (std::size_t k : {1, 2, 3, 5, 8}) {
      auto rel = select_context_ids(spec(Strategy::RelOracle, k, seed), nullptr, q, "q1");
      EXPECT_LE(rel.size(), k);
      for (const auto& d : rel) EXPECT_GE(*q.grade("q1", d), 2);
      auto nrel = select_context_ids(spec(Strategy::NRelOracle, k, seed), nullptr, q, "q1");
      EXPECT_EQ(nrel.size(), k);
      EXPECT_EQ(std::set<std::string>(nrel.begin(), nrel.end()).size(), nrel.size());
      for (const auto& d : nrel) EXPECT_EQ(*q.grade("q1", d), 0);
    }
  }
}

TEST(SelectContext, NonRelGradesConfigurable) {
  auto s = spec(Strategy::NRelOracle, 12);
  s.nonrel_grades = {0, 1};
  auto ids = select_context_ids(s, nullptr, graded_qrels(), "q1");
  EXPECT_EQ(ids.size(), 9u);
  EXPECT_NE(std::find(ids.begin(), ids.end(), "m1"), ids.end());
}

TEST(SelectContext, EmptyPoolIsDataError) {
  QrelStore q;
  q.add("q1", "n1", 0);
  try {
    select_context_ids(spec(Strategy::RelOracle, 2), nullptr, q, "q1");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no judged documents in pool"), std::string::npos);
  }
  EXPECT_THROW(select_context_ids(spec(Strategy::RelOracle, 2), nullptr, q, "other"), DataError);
}

TEST(SelectContext, ZeroShotIsEmpty) {
  EXPECT_TRUE(select_context_ids(spec(Strategy::ZeroShot, 0), nullptr, QrelStore{}, "q1").empty());
}

TEST(BuildContext, FetchesText) {
  auto run = five_doc_run();
  TextLookup lookup = [](const std::string& id) -> std::optional<std::string> {
    if (id == "d5") return std::nullopt;
    return "text of " + id;
  };
  auto ctx = build_context(spec(Strategy::TopK, 2), &run, QrelStore{}, "q1", lookup);
  ASSERT_EQ(ctx.docs.size(), 2u);
  EXPECT_EQ(ctx.docs[1], (ContextDoc{"d2", "text of d2"}));
  EXPECT_THROW(build_context(spec(Strategy::TopK, 5), &run, QrelStore{}, "q1", lookup), DataError);
}

TEST(TokenEstimate, Examples) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens(words(100)), 135u);
  EXPECT_EQ(estimate_tokens(words(56)), 76u);
  EXPECT_EQ(estimate_tokens("one"), 2u);
}

TEST(Prompt, DefaultTemplateLayout) {
  std::vector<ContextDoc> ctx = {{"a", "alpha passage"}, {"b", "beta passage"}};
  auto p = assemble_prompt("what is alpha?", ctx, PromptTemplate::default_template());
  EXPECT_EQ(p.text,
            "You are an expert at answering questions based on your own knowledge and related "
            "context. Please answer this question based on the given context. End your answer "
            "with STOP.\n"
            "Context 1: alpha passage\n"
            "Context 2: beta passage\n"
            "Question: what is alpha?\n"
            "Now start your answer.\n"
            "Answer:");
  EXPECT_EQ(p.context_size, 2u);
  EXPECT_EQ(p.token_estimate, estimate_tokens(p.text));
  const auto c1 = p.text.find("Context 1:");
  const auto c2 = p.text.find("Context 2:");
  const auto q = p.text.find("Question:");
  EXPECT_LT(c1, c2);
  EXPECT_LT(c2, q);
}

TEST(Prompt, ZeroShotHasNoContextLine) {
  auto p = assemble_prompt("why?", {}, PromptTemplate::default_template());
  EXPECT_EQ(p.text.find("Context "), std::string::npos);
  EXPECT_EQ(p.context_size, 0u);
}

TEST(Prompt, BundledTemplateMatchesDefault) {
  auto t = PromptTemplate::load(testsupport::toy_dir() / "prompt_template.txt");
  EXPECT_EQ(assemble_prompt("q", {{"a", "x"}}, t).text,
            assemble_prompt("q", {{"a", "x"}}, PromptTemplate::default_template()).text);
}

TEST(Prompt, TemplateWithoutPlaceholdersRejected) {
  testsupport::TempDir dir;
  testsupport::write_file(dir / "t.txt", "Question: {question}\n");
  EXPECT_THROW(PromptTemplate::load(dir / "t.txt"), Error);
}

TEST(Prompt, PlaceholderTextInsideDocumentIsLiteral) {
  auto p = assemble_prompt("Q", {{"a", "{question}"}}, PromptTemplate::default_template());
  EXPECT_NE(p.text.find("Context 1: {question}\n"), std::string::npos);
}

TEST(Prompt, FifteenAverageDocsFitBudget) {
  std::vector<ContextDoc> ctx(15, ContextDoc{"d", words(56)});
  auto p = assemble_prompt("what is a sigmet", ctx, PromptTemplate::default_template());
  EXPECT_LT(p.token_estimate, 2048u);
}

TEST(Prompt, SixteenLongDocsExceedBudget) {
  std::vector<ContextDoc> ctx(16, ContextDoc{"d", words(100)});
  PromptLimits limits;
  limits.max_context = 16;
  try {
    assemble_prompt("what is a sigmet", ctx, PromptTemplate::default_template(), limits);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("prompt exceeds token budget"), std::string::npos);
  }
  // Under the default limits the context size cap is hit first.
  EXPECT_THROW(assemble_prompt("q", ctx, PromptTemplate::default_template()), UsageError);
}

TEST(Prompt, PermutingContextPermutesBodiesOnly) {
  std::vector<ContextDoc> ctx = {{"a", "first body"}, {"b", "second body"}, {"c", "third body"}};
  const auto tmpl = PromptTemplate::default_template();
  auto base = assemble_prompt("Q", ctx, tmpl).text;
  std::mt19937 gen(1);
  for (int i = 0; i < 10; ++i) {
    auto perm = ctx;
    std::shuffle(perm.begin(), perm.end(), gen);
    auto text = assemble_prompt("Q", perm, tmpl).text;
    // Substituting the bodies back in original order must give the base prompt.
    for (std::size_t j = 0; j < perm.size(); ++j) {
      const auto tag = "Context " + std::to_string(j + 1) + ": ";
      const auto pos = text.find(tag) + tag.size();
      text.replace(pos, perm[j].text.size(), ctx[j].text);
    }
    EXPECT_EQ(text, base);
  }
}
