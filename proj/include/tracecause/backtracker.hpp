#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tracecause/graph.hpp"
#include "tracecause/phase.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

struct CandidateSet {
  std::vector<std::string> subtask_ids;
  std::vector<std::string> agent_names;
  std::vector<int> step_ids;
  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

struct CandidateOutcome {
  CandidateSet candidates;
  std::vector<int> uncontained_steps;  // candidate steps outside every candidate subtask's range
  std::vector<std::string> warnings;
  bool fallback = false;
};

struct BacktrackOptions {
  /// Per-node discrepancy calls instead of the single combined prompt. Reserved; unsupported.
  bool per_node_backtracking = false;
};

/// Reads the three `Candidate Error Subtasks/Agents/Steps: [...]` lines. Names are kept as
/// written; step items may read "16", "step 16" or "step_16". Non-numeric step items are
/// dropped with a warning.
CandidateSet parse_candidates(std::string_view response, std::vector<std::string>* warnings = nullptr);
std::string render_candidates(const CandidateSet& candidates);

/// Candidate text used when attribution runs without backtracking: every subtask, every agent,
/// all steps.
std::string render_all_steps_candidates(const FailureCase& c, const Hcg& g);

/// Resolves names against the graph and case, drops unknown or out-of-range ids, removes
/// duplicates, and flags uncontained steps. Idempotent on its `candidates` output.
CandidateOutcome sanitize_candidates(const CandidateSet& raw, const FailureCase& c, const Hcg& g);

/// With no candidate step left, falls back to the last subtask: its id, its steps and the agents
/// acting there.
void apply_fallback(CandidateOutcome& outcome, const FailureCase& c, const Hcg& g);

CandidateOutcome backtrack(PhaseContext& ctx, const FailureCase& c, const Hcg& g, const std::string& graph_text,
                           const BacktrackOptions& options = {});

json to_json(const CandidateOutcome& outcome);
CandidateOutcome candidates_from_json(const json& j);

}  // namespace tracecause
