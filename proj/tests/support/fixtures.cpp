#include "fixtures.hpp"

#include <algorithm>

namespace tracecause::testing {

namespace fs = std::filesystem;

fs::path fixture_dir() { return fs::path(TRACECAUSE_SOURCE_DIR) / "tests" / "fixtures"; }

fs::path fixture_transcript() { return fixture_dir() / "transcript.jsonl"; }

std::vector<FailureCase> load_fixture_cases() {
  auto cases = load_dataset(fixture_dir() / "cases" / "algorithm_generated", Subset::algorithm_generated);
  for (auto& c : load_dataset(fixture_dir() / "cases" / "hand_crafted", Subset::hand_crafted)) cases.push_back(std::move(c));
  std::sort(cases.begin(), cases.end(), [](const FailureCase& a, const FailureCase& b) { return a.case_id < b.case_id; });
  return cases;
}

KnowledgeBase build_fixture_kb(Embedder& embedder) {
  const fs::path kb = fixture_dir() / "kb";
  return build_kb({kb / "gaia.jsonl", kb / "assistantbench.jsonl", kb / "selection.txt"}, embedder);
}

PipelineConfig fixture_config(std::set<Module> modules) {
  PipelineConfig c;
  c.modules = std::move(modules);
  c.model_id = "simulated-model";
  c.temperature = 0.0;
  c.n_runs = 3;
  c.with_ground_truth = true;
  c.mode = GatewayMode::replay;
  return c;
}

std::vector<AblationRow> fixture_rows() {
  std::vector<AblationRow> rows{{"All-at-once", std::string(kFixtureConfigPrefix) + "-all_at_once", fixture_config({})}};
  for (auto& r : ablation_rows(fixture_config({}), kFixtureConfigPrefix)) rows.push_back(std::move(r));
  return rows;
}

FailureCase make_case(const std::vector<std::string>& agents, const std::string& case_id,
                      std::vector<std::string> contents) {
  FailureCase c;
  c.case_id = case_id;
  c.task_id = case_id;
  c.question = "Synthetic question for " + case_id;
  c.ground_truth_answer = "42";
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string content = i < contents.size() ? contents[i] : "step " + std::to_string(i) + " by " + agents[i];
    c.steps.push_back({static_cast<int>(i), agents[i], "assistant", content});
  }
  c.annotation = RootCauseAnnotation{agents.empty() ? "" : agents.front(), 0, "synthetic"};
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tracecause-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace tracecause::testing
