#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tracecause/attributor.hpp"
#include "tracecause/backtracker.hpp"
#include "tracecause/graph_builder.hpp"
#include "tracecause/knowledge_base.hpp"
#include "tracecause/llm_gateway.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

enum class Module { m1, m2, m3 };
std::string_view to_string(Module m);
Module module_from_string(std::string_view name);

struct PipelineConfig {
  std::set<Module> modules{Module::m1, Module::m2, Module::m3};
  bool with_ground_truth = true;
  std::string model_id = "deepseek-chat";
  double temperature = 0.0;
  int max_output = 8192;
  int n_runs = 3;
  GatewayMode mode = GatewayMode::replay;
  int retrieval_k = kDefaultExemplarCount;
  int max_reflections = kDefaultMaxReflections;
  bool per_node_backtracking = false;

  bool has(Module m) const { return modules.count(m) != 0; }
  /// Throws ConfigError: M2 or M3 without M1, non-positive counts, reserved flags.
  void validate() const;
  /// all_at_once, only_m1, m1_m2, m1_m3 or full.
  std::string variant() const;
};

json to_json(const PipelineConfig& config);
/// Reads the keys present in `j` on top of `base`.
PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig base = {});

/// One line of predictions.jsonl. A failed case has no agent or step and carries `error`.
struct PredictionRecord {
  std::string case_id;
  std::optional<std::string> agent_name;
  std::optional<int> step_id;
  std::string reason;
  int run_index = 0;
  std::string config_id;
  long long token_cost = 0;
  std::optional<std::string> error;
  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

json to_json(const PredictionRecord& r);
PredictionRecord prediction_from_json(const json& j);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

struct CaseRunResult {
  PredictionRecord prediction;
  CostLedger ledger;
  int phases_from_cache = 0;
  std::vector<std::string> warnings;
};

/// Shared, thread-safe collaborators of a run.
struct PipelineServices {
  LlmGateway* gateway = nullptr;
  const KnowledgeBase* kb = nullptr;
  Embedder* embedder = nullptr;
  std::filesystem::path cache_dir;  // empty: no caching
  bool fresh = false;               // ignore cached phases
};

/// Runs the configured variant on one (case, run). Pipeline errors become a failed prediction;
/// tokens spent before the failure stay in the ledger.
CaseRunResult run_case(const PipelineConfig& config, const std::string& config_id, const FailureCase& c,
                       int run_index, PipelineServices& services);

/// cache/<config_id>/<case_id>/run_<r>
std::filesystem::path case_cache_dir(const std::filesystem::path& cache_root, const std::string& config_id,
                                     const std::string& case_id, int run_index);

/// Exemplar text for a case: top-k knowledge-base entries, the case's own task excluded.
std::string retrieve_exemplars(const PipelineServices& services, const FailureCase& c, int k);

}  // namespace tracecause
