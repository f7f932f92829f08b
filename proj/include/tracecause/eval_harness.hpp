#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tracecause/attributor.hpp"
#include "tracecause/pipeline.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

struct CaseScore {
  std::string case_id;
  int run = 0;
  bool agent_correct = false;
  bool step_correct = false;
  friend bool operator==(const CaseScore&, const CaseScore&) = default;
};

struct EvalResult {
  double agent_accuracy = 0.0;
  double step_accuracy = 0.0;
  int n_cases = 0;
  int n_runs = 0;
  std::vector<double> per_run_agent_accuracy;
  std::vector<double> per_run_step_accuracy;
  std::vector<CaseScore> per_case;  // ordered by (case_id, run)
};

/// Strict top-1 scoring. Every annotated case needs exactly one prediction per run index
/// 0..n_runs-1; accuracies are the mean over runs of the per-run proportions.
EvalResult score(const std::vector<PredictionRecord>& predictions, const std::vector<FailureCase>& cases, int n_runs);
json to_json(const EvalResult& r);

/// Uniform integer in [0, n) by rejection sampling, identical on every standard library.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

/// Agent uniform over the case's agents, step uniform over 0..T-1.
Attribution baseline_random(const FailureCase& c, std::uint64_t seed);

/// One direct prompt over question, optional ground truth and full history.
AttributionOutcome baseline_all_at_once(PhaseContext& ctx, const FailureCase& c);

struct SubsetCost {
  int n_cases = 0;
  double mean_tokens_per_case = 0.0;
};

struct CostReport {
  std::map<std::string, SubsetCost> per_subset;    // keyed by subset name
  std::map<std::string, double> per_case;          // mean over runs
  std::map<std::string, long long> per_tag_total;  // summed over every ledger
  long long total_tokens = 0;
};

struct LedgerRecord {
  std::string case_id;
  int run_index = 0;
  CostLedger ledger;
};

CostReport cost_report(const std::vector<LedgerRecord>& ledgers, const std::vector<FailureCase>& cases);
json to_json(const CostReport& r);

struct RunOptions {
  int workers = 4;
  const std::atomic<bool>* cancel = nullptr;  // set to stop scheduling new (case, run) jobs
};

struct RunOutput {
  std::vector<PredictionRecord> predictions;  // ordered by (case_id, run)
  std::vector<LedgerRecord> ledgers;          // same order
  std::optional<EvalResult> eval;             // absent when some case has no annotation
  CostReport costs;
  int failed = 0;
  int phases_from_cache = 0;
  bool cancelled = false;
};

/// Runs every (case, run) of the configuration on a bounded worker pool, then scores.
RunOutput run_config(const PipelineConfig& config, const std::string& config_id, const std::vector<FailureCase>& cases,
                     PipelineServices& services, const RunOptions& options = {});

/// predictions.jsonl, ledgers.jsonl, eval.json, costs.json and summary.txt under `dir`.
void write_run_outputs(const std::filesystem::path& dir, const RunOutput& output, const std::string& config_id);

std::string summary_table(const std::string& config_id, const RunOutput& output);

struct AblationRow {
  std::string label;
  std::string config_id;
  PipelineConfig config;
};

/// Only M1, M1+M2, M1+M3 and the full pipeline, built from `base`.
std::vector<AblationRow> ablation_rows(const PipelineConfig& base, const std::string& config_prefix);

struct AblationResult {
  AblationRow row;
  RunOutput output;
};

std::string ablation_table(const std::vector<AblationResult>& results);
json to_json(const std::vector<AblationResult>& results);

}  // namespace tracecause
