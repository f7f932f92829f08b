#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tracecause/trajectory.hpp"

// Data model of the hierarchical causal graph and the artifacts later phases attach to it.
namespace tracecause {

using json = nlohmann::json;

inline constexpr int kGraphSchemaVersion = 1;

struct SubtaskNode {
  std::string id;  // "S1".."SK"
  std::string name;
  StepRange step_range;
  std::string description;
  friend bool operator==(const SubtaskNode&, const SubtaskNode&) = default;
};

struct OtarTuple {
  std::string observation;
  std::string thought;
  std::string action;
  std::string result;
  friend bool operator==(const OtarTuple&, const OtarTuple&) = default;
};

struct AgentNode {
  std::string agent_name;
  std::string subtask_id;
  OtarTuple otar;
  friend bool operator==(const AgentNode&, const AgentNode&) = default;
};

struct CounterfactualPattern {
  std::string bias;
  std::string anomaly;
  friend bool operator==(const CounterfactualPattern&, const CounterfactualPattern&) = default;
};

enum class SubtaskEdgeType { data_dependency, logical_prereq };
enum class AgentEdgeType {
  obs_dependency,
  reasoning_continuation,
  decision_dependency,
  environment_feedback,
  memory_ref,
  loop_control
};
enum class DataType { text, numeric, list, boolean };

std::string_view to_string(SubtaskEdgeType t);
std::string_view to_string(AgentEdgeType t);
std::string_view to_string(DataType t);
std::optional<SubtaskEdgeType> subtask_edge_type_from(std::string_view s);
std::optional<AgentEdgeType> agent_edge_type_from(std::string_view s);
std::optional<DataType> data_type_from(std::string_view s);

struct SubtaskEdge {
  std::string from_id;
  std::string to_id;
  SubtaskEdgeType type = SubtaskEdgeType::data_dependency;
  std::vector<CounterfactualPattern> patterns;
  friend bool operator==(const SubtaskEdge&, const SubtaskEdge&) = default;
};

struct AgentEdge {
  std::string subtask_id;
  std::string from_agent;
  std::string to_agent;
  AgentEdgeType type = AgentEdgeType::obs_dependency;
  std::vector<CounterfactualPattern> patterns;
  friend bool operator==(const AgentEdge&, const AgentEdge&) = default;
};

struct StepEndpoint {
  int step_id = 0;
  std::string agent_id;
  std::string data;  // output_data upstream, input_data downstream
  DataType data_type = DataType::text;
  friend bool operator==(const StepEndpoint&, const StepEndpoint&) = default;
};

struct StepEdge {
  StepEndpoint upstream;
  StepEndpoint downstream;
  friend bool operator==(const StepEdge&, const StepEdge&) = default;
};

struct Hcg {
  std::vector<SubtaskNode> subtasks;
  std::vector<AgentNode> agents;
  std::vector<SubtaskEdge> subtask_edges;
  std::vector<AgentEdge> agent_edges;
  std::vector<StepEdge> step_edges;

  const SubtaskNode* find_subtask(std::string_view id) const;
  std::optional<std::size_t> subtask_index(std::string_view id) const;
  const AgentNode* find_agent(std::string_view subtask_id, std::string_view agent_name) const;
  std::vector<const AgentNode*> agents_in(std::string_view subtask_id) const;
  friend bool operator==(const Hcg&, const Hcg&) = default;
};

/// Per-subtask verifier: goal, preconditions, key evidence, acceptance criteria.
struct VirtualOracle {
  std::string subtask_name;
  std::string goal;
  std::vector<std::string> preconditions;
  std::vector<std::string> key_evidence;
  std::vector<std::string> acceptance_criteria;
  friend bool operator==(const VirtualOracle&, const VirtualOracle&) = default;
};

struct StepSignature {
  std::string agent;
  std::string action_key;
  friend bool operator==(const StepSignature&, const StepSignature&) = default;
};

enum class LoopRole { entry, internal, exit };
std::string_view to_string(LoopRole r);

/// A maximal stretch of steps whose (agent, action) signatures repeat with a fixed period.
struct LoopGroup {
  std::vector<StepSignature> unit;  // repeating unit; size() is the period
  std::vector<int> member_step_ids;
  int occurrence_count = 0;
  std::map<int, LoopRole> roles;

  int period() const noexcept { return static_cast<int>(unit.size()); }
  friend bool operator==(const LoopGroup&, const LoopGroup&) = default;
};

/// Non-fatal findings from graph construction: rejected edges and notes.
struct Diagnostic {
  std::string phase;
  std::string rule;
  std::size_t line = 0;
  std::string message;
  bool rejected = true;  // false for notes (cycles, substituted agent ids, ignored lines)
};

struct Diagnostics {
  std::vector<Diagnostic> items;

  void reject(std::string phase, std::string rule, std::size_t line, std::string message) {
    items.push_back({std::move(phase), std::move(rule), line, std::move(message), true});
  }
  void note(std::string phase, std::string rule, std::size_t line, std::string message) {
    items.push_back({std::move(phase), std::move(rule), line, std::move(message), false});
  }
  std::size_t rejected_count() const;
  bool has_rule(std::string_view rule) const;
};

json to_json(const Hcg& g);
Hcg hcg_from_json(const json& j);
json to_json(const std::vector<VirtualOracle>& oracles);
std::vector<VirtualOracle> oracles_from_json(const json& j);
json to_json(const Diagnostics& d);
Diagnostics diagnostics_from_json(const json& j);
json to_json(const std::vector<LoopGroup>& groups);

}  // namespace tracecause
