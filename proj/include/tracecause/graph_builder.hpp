#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tracecause/graph.hpp"
#include "tracecause/phase.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

inline constexpr int kDefaultMaxReflections = 3;

// ---------------------------------------------------------------------------
// Subtask decomposition
// ---------------------------------------------------------------------------

struct PartitionViolation {
  std::string kind;  // empty_plan, inverted_range, out_of_range, order, overlap, gap
  std::string message;
};

/// The ranges must be listed in execution order, be contiguous, not overlap, and jointly
/// cover 0..step_count-1. An empty result means the plan is accepted.
std::vector<PartitionViolation> check_partition(const std::vector<SubtaskNode>& subtasks, int step_count);
std::string describe_violations(const std::vector<PartitionViolation>& violations);

/// Parses blocks of `Subtask ID / Name / Step Range / Description`. Ids must read S1..SK in
/// order and names must be unique.
std::vector<SubtaskNode> parse_decomposition(std::string_view response);
std::string render_decomposition(const std::vector<SubtaskNode>& subtasks);

struct DecompositionOutcome {
  std::vector<SubtaskNode> subtasks;
  int reflections = 0;
};

/// Asks for a decomposition and re-prompts with the violation report until the plan partitions
/// the trajectory or `max_reflections` repair rounds are spent (then DecompositionError).
DecompositionOutcome decompose(PhaseContext& ctx, const FailureCase& c, const std::string& rag_text,
                               int max_reflections = kDefaultMaxReflections);

/// Resolves a subtask label as echoed by a model: the exact name, the id, or "S2: name".
std::optional<std::size_t> match_subtask(std::string_view label, const std::vector<SubtaskNode>& subtasks);

// ---------------------------------------------------------------------------
// Agent nodes (Observation / Thought / Action / Result)
// ---------------------------------------------------------------------------

/// Every plan subtask needs one block with at least one agent; every agent needs all four
/// labeled fields and must act inside the subtask's step range. Violations throw GrammarError.
std::vector<AgentNode> parse_otar(std::string_view response, const std::vector<SubtaskNode>& subtasks,
                                  const FailureCase& c);
std::string render_otar(const std::vector<SubtaskNode>& subtasks, const std::vector<AgentNode>& agents);

// ---------------------------------------------------------------------------
// Edges. Invalid edges never abort: they are dropped and listed in `diag`.
// ---------------------------------------------------------------------------

struct SemanticEdges {
  std::vector<SubtaskEdge> subtask_edges;
  std::vector<AgentEdge> agent_edges;
};

SemanticEdges parse_semantic_edges(std::string_view response, const Hcg& partial, const FailureCase& c,
                                   Diagnostics& diag);
std::string render_semantic_edges(const Hcg& g);

std::vector<StepEdge> parse_step_edges(std::string_view response, const FailureCase& c, Diagnostics& diag);
std::string render_step_edges(const std::vector<StepEdge>& edges);

/// Agent-edge cycles per subtask (recorded, never rejected).
void note_agent_cycles(const std::vector<AgentEdge>& edges, Diagnostics& diag);

// ---------------------------------------------------------------------------
// Whole graph
// ---------------------------------------------------------------------------

struct GraphAnnotations {
  const std::vector<VirtualOracle>* oracles = nullptr;
  const std::vector<LoopGroup>* loop_groups = nullptr;
};

/// Deterministic text rendering used as graph evidence in later prompts. Each section reuses
/// the grammar its parser accepts.
std::string serialize_graph(const Hcg& g, GraphAnnotations annotations = {});

/// Subtasks and their agents' OTAR blocks, as shown to the edge-construction prompt.
std::string render_subtasks_with_agents(const Hcg& g);

struct GraphBuild {
  Hcg graph;
  Diagnostics diagnostics;
  int reflections = 0;
};

/// decompose -> OTAR -> subtask/agent edges -> step edges, strictly in that order.
GraphBuild build_graph(PhaseContext& ctx, const FailureCase& c, const std::string& rag_text,
                       int max_reflections = kDefaultMaxReflections);

}  // namespace tracecause
