#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tracecause/error.hpp"
#include "tracecause/knowledge_base.hpp"

using namespace tracecause;
using namespace tracecause::testing;

namespace {

struct RandomKb {
  std::vector<KbEntry> entries;
  std::vector<std::vector<double>> raw;
  KnowledgeBase kb;
};

// Small integer coordinates make exact and near-exact cosine ties common.
RandomKb random_kb(std::mt19937_64& rng, int n, int dim) {
  RandomKb out;
  std::uniform_int_distribution<int> coord(-2, 2);
  std::uniform_int_distribution<int> task(0, 3);
  std::vector<EmbeddingVector> vecs;
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    do {
      for (auto& x : v) x = coord(rng);
    } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0; }));
    char id[16];
    std::snprintf(id, sizeof id, "e%03d", n - i);
    out.entries.push_back({id, KbSource::gaia, "text " + std::string(id), "task" + std::to_string(task(rng))});
    out.raw.push_back(v);
    vecs.push_back({v});
  }
  out.kb = KnowledgeBase(out.entries, vecs);
  return out;
}

std::vector<std::string> ids(const RetrievalResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.entries) out.push_back(e.entry.entry_id);
  return out;
}

}  // namespace

TEST(Cosine, BasicProperties) {
  EXPECT_DOUBLE_EQ(cosine({{1, 0}}, {{2, 0}}), 1.0);
  EXPECT_DOUBLE_EQ(cosine({{1, 0}}, {{0, 3}}), 0.0);
  EXPECT_DOUBLE_EQ(cosine({{0, 0}}, {{0, 3}}), 0.0);
  EXPECT_THROW(cosine({{1}}, {{1, 2}}), Error);
  EXPECT_EQ(retrieval_score_key(0.5), retrieval_score_key(0.5 + 1e-15));
}

TEST(Retrieval, MatchesExhaustiveRankingOnRandomStores) {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 300; ++trial) {
    const int dim = 2 + static_cast<int>(rng() % 5);
    const int n = 1 + static_cast<int>(rng() % 25);
    const auto store = random_kb(rng, n, dim);
    std::vector<double> q(static_cast<std::size_t>(dim));
    std::uniform_int_distribution<int> coord(-2, 2);
    for (auto& x : q) x = coord(rng);
    const int k = 1 + static_cast<int>(rng() % 4);
    const std::string exclude = "task" + std::to_string(rng() % 5);
    const auto got = store.kb.retrieve(EmbeddingVector{q}, k, exclude);
    const auto want = brute_rank(store.entries, store.raw, q, k, exclude);
    ASSERT_EQ(ids(got), want) << "trial " << trial;
    EXPECT_EQ(got.short_result, static_cast<int>(want.size()) < k);
  }
}

TEST(Retrieval, TiesBreakByAscendingEntryId) {
  std::vector<KbEntry> entries{{"b", KbSource::gaia, "x", ""}, {"a", KbSource::gaia, "y", ""}, {"c", KbSource::gaia, "z", ""}};
  KnowledgeBase kb(entries, {{{1, 1}}, {{2, 2}}, {{1, 0}}});
  EXPECT_EQ(ids(kb.retrieve(EmbeddingVector{{1, 1}}, 2, "")), (std::vector<std::string>{"a", "b"}));
}

TEST(Retrieval, ExcludesTheCasesOwnTask) {
  LexicalEmbedder embedder;
  const auto kb = build_fixture_kb(embedder);
  const std::string q = "Which gym within a 5 minute walk of Tompkins Square Park offers classes before 7am?";
  const auto with = kb.retrieve(embedder, q, 2, "");
  ASSERT_FALSE(with.entries.empty());
  EXPECT_EQ(with.entries.front().entry.origin_task_id, "task-gym-0001");
  const auto without = kb.retrieve(embedder, q, 2, "task-gym-0001");
  for (const auto& e : without.entries) EXPECT_NE(e.entry.origin_task_id, "task-gym-0001");
  EXPECT_EQ(without.entries.size(), 2u);
}

TEST(Retrieval, ShortResultWhenStoreIsSmall) {
  KnowledgeBase kb({{"a", KbSource::gaia, "x", "t"}}, {{{1, 0}}});
  const auto r = kb.retrieve(EmbeddingVector{{1, 0}}, 2, "");
  EXPECT_TRUE(r.short_result);
  EXPECT_EQ(r.entries.size(), 1u);
  EXPECT_THROW(kb.retrieve(EmbeddingVector{{1, 0}}, 0, ""), ConfigError);
}

TEST(LexicalEmbedder, DeterministicAndNormalized) {
  LexicalEmbedder e(256);
  const auto a = e.embed("Find the gym near the park");
  EXPECT_EQ(a.values, e.embed("Find the gym near the park").values);
  double norm = 0;
  for (double x : a.values) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_GT(cosine(a, e.embed("gym near park")), cosine(a, e.embed("stock closing price")));
  EXPECT_THROW(e.embed("   "), Error);
  EXPECT_EQ(make_embedder(e.describe())->describe(), e.describe());
}

TEST(KnowledgeBaseBuild, CountsAndSkipsUnannotatedGaia) {
  LexicalEmbedder embedder;
  KbBuildReport report;
  const auto kb = build_kb({fixture_dir() / "kb/gaia.jsonl", fixture_dir() / "kb/assistantbench.jsonl",
                            fixture_dir() / "kb/selection.txt"},
                           embedder, &report);
  EXPECT_EQ(report.gaia_count, 5u);
  EXPECT_EQ(report.assistantbench_count, 3u);
  EXPECT_EQ(report.warnings.size(), 1u);
  EXPECT_EQ(kb.count(KbSource::gaia), 5u);
  EXPECT_EQ(kb.count(KbSource::assistantbench), 3u);
}

TEST(KnowledgeBaseBuild, SelectedIdMustExist) {
  const auto dir = scratch_dir("kb_selection");
  std::ofstream(dir / "sel.txt") << "ab-01\nab-99\n";
  LexicalEmbedder embedder;
  EXPECT_THROW(build_kb({fixture_dir() / "kb/gaia.jsonl", fixture_dir() / "kb/assistantbench.jsonl", dir / "sel.txt"},
                        embedder),
               Error);
}

TEST(KnowledgeBaseBuild, SaveLoadRoundTrip) {
  LexicalEmbedder embedder;
  const auto kb = build_fixture_kb(embedder);
  const auto dir = scratch_dir("kb_roundtrip");
  kb.save(dir);
  const auto back = KnowledgeBase::load(dir);
  ASSERT_EQ(back.size(), kb.size());
  for (std::size_t i = 0; i < kb.size(); ++i) {
    EXPECT_EQ(back.entries()[i].entry_id, kb.entries()[i].entry_id);
    EXPECT_EQ(back.vectors()[i].values, kb.vectors()[i].values);
  }
  EXPECT_EQ(back.embedder_description(), kb.embedder_description());
}

TEST(Exemplars, RenderedWithSourceNames) {
  LexicalEmbedder embedder;
  const auto kb = build_fixture_kb(embedder);
  const auto text = render_exemplars(kb.retrieve(embedder, "cheapest daily parking", 2, ""));
  EXPECT_NE(text.find("[Injected exemplar 1]"), std::string::npos);
  EXPECT_NE(text.find("[Injected exemplar 2]"), std::string::npos);
  EXPECT_NE(text.find("Source: "), std::string::npos);
}
