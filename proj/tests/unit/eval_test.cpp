#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "tracecause/error.hpp"
#include "tracecause/eval_harness.hpp"

using namespace tracecause;
using namespace tracecause::testing;

namespace {

// n cases of four steps acted by A, B, A, B; the mistake is B at step 1.
std::vector<FailureCase> cases(int n) {
  std::vector<FailureCase> out;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "c%02d", i);
    auto c = make_case({"A", "B", "A", "B"}, id);
    c.annotation = RootCauseAnnotation{"B", 1, ""};
    out.push_back(std::move(c));
  }
  return out;
}

PredictionRecord pred(const std::string& id, int run, std::optional<std::string> agent, std::optional<int> step) {
  PredictionRecord p;
  p.case_id = id;
  p.run_index = run;
  p.agent_name = std::move(agent);
  p.step_id = step;
  return p;
}

}  // namespace

TEST(Score, MeanOfPerRunProportions) {
  // 20 cases; runs get 14, 16 and 15 steps right: 0.70, 0.80, 0.75, mean 0.75.
  const auto cs = cases(20);
  const int right[3] = {14, 16, 15};
  std::vector<PredictionRecord> preds;
  for (int run = 0; run < 3; ++run) {
    for (int i = 0; i < 20; ++i) {
      const bool ok = i < right[run];
      preds.push_back(pred(cs[i].case_id, run, ok ? "b" : "A", ok ? 1 : 3));
    }
  }
  const auto r = score(preds, cs, 3);
  EXPECT_NEAR(r.per_run_step_accuracy[0], 0.70, 1e-12);
  EXPECT_NEAR(r.per_run_step_accuracy[1], 0.80, 1e-12);
  EXPECT_NEAR(r.per_run_step_accuracy[2], 0.75, 1e-12);
  EXPECT_NEAR(r.step_accuracy, 0.75, 1e-12);
  EXPECT_NEAR(r.agent_accuracy, 0.75, 1e-12);
  EXPECT_EQ(r.per_case.size(), 60u);
  EXPECT_EQ(r.per_case.front(), (CaseScore{"c00", 0, true, true}));
}

TEST(Score, AgentAndStepAreIndependent) {
  const auto cs = cases(2);
  const std::vector<PredictionRecord> preds{pred("c00", 0, " b ", 3), pred("c01", 0, "A", 1)};
  const auto r = score(preds, cs, 1);
  EXPECT_DOUBLE_EQ(r.agent_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.step_accuracy, 0.5);
}

TEST(Score, FailedPredictionsCountAsWrong) {
  const auto cs = cases(2);
  auto failed = pred("c01", 0, std::nullopt, std::nullopt);
  failed.error = "boom";
  const auto r = score({pred("c00", 0, "B", 1), failed}, cs, 1);
  EXPECT_DOUBLE_EQ(r.step_accuracy, 0.5);
}

TEST(Score, IntegrityViolations) {
  const auto cs = cases(2);
  const auto ok0 = pred("c00", 0, "B", 1);
  const auto ok1 = pred("c01", 0, "B", 1);
  EXPECT_NO_THROW(score({ok0, ok1}, cs, 1));
  EXPECT_THROW(score({ok0}, cs, 1), IntegrityError);
  EXPECT_THROW(score({ok0, ok1, ok1}, cs, 1), IntegrityError);
  EXPECT_THROW(score({ok0, ok1, pred("c00", 1, "B", 1)}, cs, 1), IntegrityError);
  EXPECT_THROW(score({ok0, ok1, pred("zz", 0, "B", 1)}, cs, 1), IntegrityError);
  auto unannotated = cs;
  unannotated[0].annotation.reset();
  EXPECT_THROW(score({ok0, ok1}, unannotated, 1), IntegrityError);
  EXPECT_THROW(score({ok0, ok1}, cs, 0), ConfigError);
}

TEST(UniformIndex, StaysInRangeAndIsRoughlyUniform) {
  std::mt19937_64 rng(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[uniform_index(rng, 7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_EQ(uniform_index(rng, 1), 0u);
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(uniform_index(a, 1000003), uniform_index(b, 1000003));
}

TEST(RandomBaseline, DeterministicPerSeedAndNearChance) {
  const auto c = cases(1).front();
  EXPECT_EQ(baseline_random(c, 9), baseline_random(c, 9));
  int agent_hits = 0, step_hits = 0;
  const int n = 40000;
  for (int seed = 0; seed < n; ++seed) {
    const auto a = baseline_random(c, static_cast<std::uint64_t>(seed));
    agent_hits += a.agent_name == "B";
    step_hits += a.step_id == 1;
    ASSERT_GE(a.step_id, 0);
    ASSERT_LT(a.step_id, 4);
  }
  EXPECT_NEAR(agent_hits / static_cast<double>(n), 0.5, 0.02);
  EXPECT_NEAR(step_hits / static_cast<double>(n), 0.25, 0.02);
}

TEST(CostReport, MeansPerCaseThenPerSubset) {
  auto cs = cases(3);
  cs[2].subset = Subset::hand_crafted;
  auto ledger = [](long long tokens) {
    CostLedger l;
    l.add("x", {"", tokens, 0});
    return l;
  };
  // c00: runs 100, 200 -> 150; c01: 300 -> 300; c02 (hand): 50, 70 -> 60.
  const std::vector<LedgerRecord> ledgers{{"c00", 0, ledger(100)}, {"c00", 1, ledger(200)}, {"c01", 0, ledger(300)},
                                          {"c02", 0, ledger(50)},  {"c02", 1, ledger(70)}};
  const auto r = cost_report(ledgers, cs);
  EXPECT_DOUBLE_EQ(r.per_case.at("c00"), 150.0);
  EXPECT_DOUBLE_EQ(r.per_subset.at("algorithm_generated").mean_tokens_per_case, 225.0);
  EXPECT_EQ(r.per_subset.at("algorithm_generated").n_cases, 2);
  EXPECT_DOUBLE_EQ(r.per_subset.at("hand_crafted").mean_tokens_per_case, 60.0);
  EXPECT_EQ(r.total_tokens, 720);
  EXPECT_EQ(r.per_tag_total.at("x"), 720);
}

TEST(Ablation, RowsCoverTheFourModuleSets) {
  const auto rows = ablation_rows(PipelineConfig{}, "exp");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].label, "Only M1");
  EXPECT_EQ(rows[0].config.modules, (std::set<Module>{Module::m1}));
  EXPECT_EQ(rows[1].config.modules, (std::set<Module>{Module::m1, Module::m2}));
  EXPECT_EQ(rows[2].config.modules, (std::set<Module>{Module::m1, Module::m3}));
  EXPECT_EQ(rows[3].config.modules, (std::set<Module>{Module::m1, Module::m2, Module::m3}));
  EXPECT_EQ(rows[3].config_id, "exp-full");
  for (const auto& r : rows) EXPECT_NO_THROW(r.config.validate());
}

TEST(PipelineConfig, ValidationAndVariants) {
  PipelineConfig c;
  EXPECT_EQ(c.variant(), "full");
  c.modules = {};
  EXPECT_EQ(c.variant(), "all_at_once");
  c.modules = {Module::m2};
  EXPECT_THROW(c.validate(), ConfigError);
  c.modules = {Module::m1};
  c.n_runs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.n_runs = 1;
  c.per_node_backtracking = true;
  EXPECT_THROW(c.validate(), ConfigError);
  const PipelineConfig d;
  EXPECT_EQ(to_json(pipeline_config_from_json(to_json(d))), to_json(d));
}

TEST(Predictions, JsonlRoundTrip) {
  const auto dir = scratch_dir("predictions");
  auto failed = pred("c01", 2, std::nullopt, std::nullopt);
  failed.error = "no";
  const std::vector<PredictionRecord> preds{pred("c00", 0, "B", 1), failed};
  {
    std::ofstream out(dir / "p.jsonl");
    for (const auto& p : preds) out << to_json(p).dump() << "\n";
  }
  EXPECT_EQ(read_predictions(dir / "p.jsonl"), preds);
}
