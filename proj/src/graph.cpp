#include "tracecause/graph.hpp"

#include <array>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

namespace {

constexpr std::array<std::pair<SubtaskEdgeType, std::string_view>, 2> kSubtaskEdgeNames{{
    {SubtaskEdgeType::data_dependency, "data_dependency"},
    {SubtaskEdgeType::logical_prereq, "logical_prereq"},
}};

constexpr std::array<std::pair<AgentEdgeType, std::string_view>, 6> kAgentEdgeNames{{
    {AgentEdgeType::obs_dependency, "obs_dependency"},
    {AgentEdgeType::reasoning_continuation, "reasoning_continuation"},
    {AgentEdgeType::decision_dependency, "decision_dependency"},
    {AgentEdgeType::environment_feedback, "environment_feedback"},
    {AgentEdgeType::memory_ref, "memory_ref"},
    {AgentEdgeType::loop_control, "loop_control"},
}};

constexpr std::array<std::pair<DataType, std::string_view>, 4> kDataTypeNames{{
    {DataType::text, "text"},
    {DataType::numeric, "numeric"},
    {DataType::list, "list"},
    {DataType::boolean, "boolean"},
}};

template <typename Table, typename Enum>
std::string_view name_of(const Table& table, Enum value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "unknown";
}

template <typename Enum, typename Table>
std::optional<Enum> parse_enum(const Table& table, std::string_view s) {
  const std::string key = text::to_lower(text::unquote(s));
  for (const auto& [v, name] : table) {
    if (key == name) return v;
  }
  return std::nullopt;
}

json patterns_json(const std::vector<CounterfactualPattern>& ps) {
  json out = json::array();
  for (const auto& p : ps) out.push_back({{"bias", p.bias}, {"anomaly", p.anomaly}});
  return out;
}

std::vector<CounterfactualPattern> patterns_from(const json& j) {
  std::vector<CounterfactualPattern> out;
  for (const auto& p : j) out.push_back({p.at("bias").get<std::string>(), p.at("anomaly").get<std::string>()});
  return out;
}

json endpoint_json(const StepEndpoint& e) {
  return {{"step_id", e.step_id}, {"agent_id", e.agent_id}, {"data", e.data}, {"data_type", to_string(e.data_type)}};
}

StepEndpoint endpoint_from(const json& j) {
  auto dt = data_type_from(j.at("data_type").get<std::string>());
  if (!dt) throw SchemaError("data_type");
  return {j.at("step_id").get<int>(), j.at("agent_id").get<std::string>(), j.at("data").get<std::string>(), *dt};
}

}  // namespace

std::string_view to_string(SubtaskEdgeType t) { return name_of(kSubtaskEdgeNames, t); }
std::string_view to_string(AgentEdgeType t) { return name_of(kAgentEdgeNames, t); }
std::string_view to_string(DataType t) { return name_of(kDataTypeNames, t); }

std::optional<SubtaskEdgeType> subtask_edge_type_from(std::string_view s) {
  return parse_enum<SubtaskEdgeType>(kSubtaskEdgeNames, s);
}
std::optional<AgentEdgeType> agent_edge_type_from(std::string_view s) {
  return parse_enum<AgentEdgeType>(kAgentEdgeNames, s);
}
std::optional<DataType> data_type_from(std::string_view s) { return parse_enum<DataType>(kDataTypeNames, s); }

std::string_view to_string(LoopRole r) {
  switch (r) {
    case LoopRole::entry: return "entry";
    case LoopRole::internal: return "internal";
    case LoopRole::exit: return "exit";
  }
  return "internal";
}

const SubtaskNode* Hcg::find_subtask(std::string_view id) const {
  for (const auto& s : subtasks) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

std::optional<std::size_t> Hcg::subtask_index(std::string_view id) const {
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    if (subtasks[i].id == id) return i;
  }
  return std::nullopt;
}

const AgentNode* Hcg::find_agent(std::string_view subtask_id, std::string_view agent_name) const {
  for (const auto& a : agents) {
    if (a.subtask_id == subtask_id && a.agent_name == agent_name) return &a;
  }
  return nullptr;
}

std::vector<const AgentNode*> Hcg::agents_in(std::string_view subtask_id) const {
  std::vector<const AgentNode*> out;
  for (const auto& a : agents) {
    if (a.subtask_id == subtask_id) out.push_back(&a);
  }
  return out;
}

std::size_t Diagnostics::rejected_count() const {
  std::size_t n = 0;
  for (const auto& d : items) n += d.rejected ? 1 : 0;
  return n;
}

bool Diagnostics::has_rule(std::string_view rule) const {
  for (const auto& d : items) {
    if (d.rule == rule) return true;
  }
  return false;
}

json to_json(const Hcg& g) {
  json subtasks = json::array();
  for (const auto& s : g.subtasks) {
    subtasks.push_back({{"id", s.id},
                        {"name", s.name},
                        {"step_range", {s.step_range.first, s.step_range.last}},
                        {"description", s.description}});
  }
  json agents = json::array();
  for (const auto& a : g.agents) {
    agents.push_back({{"agent_name", a.agent_name},
                      {"subtask_id", a.subtask_id},
                      {"otar",
                       {{"observation", a.otar.observation},
                        {"thought", a.otar.thought},
                        {"action", a.otar.action},
                        {"result", a.otar.result}}}});
  }
  json sub_edges = json::array();
  for (const auto& e : g.subtask_edges) {
    sub_edges.push_back(
        {{"from", e.from_id}, {"to", e.to_id}, {"type", to_string(e.type)}, {"patterns", patterns_json(e.patterns)}});
  }
  json agent_edges = json::array();
  for (const auto& e : g.agent_edges) {
    agent_edges.push_back({{"subtask_id", e.subtask_id},
                           {"from", e.from_agent},
                           {"to", e.to_agent},
                           {"type", to_string(e.type)},
                           {"patterns", patterns_json(e.patterns)}});
  }
  json step_edges = json::array();
  for (const auto& e : g.step_edges) {
    step_edges.push_back({{"upstream", endpoint_json(e.upstream)}, {"downstream", endpoint_json(e.downstream)}});
  }
  return {{"schema_version", kGraphSchemaVersion},
          {"subtasks", std::move(subtasks)},
          {"agents", std::move(agents)},
          {"subtask_edges", std::move(sub_edges)},
          {"agent_edges", std::move(agent_edges)},
          {"step_edges", std::move(step_edges)}};
}

Hcg hcg_from_json(const json& j) {
  if (j.value("schema_version", 0) != kGraphSchemaVersion) throw SchemaError("schema_version", "unsupported graph version");
  Hcg g;
  for (const auto& s : j.at("subtasks")) {
    g.subtasks.push_back({s.at("id").get<std::string>(), s.at("name").get<std::string>(),
                          {s.at("step_range").at(0).get<int>(), s.at("step_range").at(1).get<int>()},
                          s.value("description", std::string{})});
  }
  for (const auto& a : j.at("agents")) {
    const json& o = a.at("otar");
    g.agents.push_back({a.at("agent_name").get<std::string>(), a.at("subtask_id").get<std::string>(),
                        {o.at("observation").get<std::string>(), o.at("thought").get<std::string>(),
                         o.at("action").get<std::string>(), o.at("result").get<std::string>()}});
  }
  for (const auto& e : j.at("subtask_edges")) {
    auto t = subtask_edge_type_from(e.at("type").get<std::string>());
    if (!t) throw SchemaError("subtask_edges.type");
    g.subtask_edges.push_back(
        {e.at("from").get<std::string>(), e.at("to").get<std::string>(), *t, patterns_from(e.at("patterns"))});
  }
  for (const auto& e : j.at("agent_edges")) {
    auto t = agent_edge_type_from(e.at("type").get<std::string>());
    if (!t) throw SchemaError("agent_edges.type");
    g.agent_edges.push_back({e.at("subtask_id").get<std::string>(), e.at("from").get<std::string>(),
                             e.at("to").get<std::string>(), *t, patterns_from(e.at("patterns"))});
  }
  for (const auto& e : j.at("step_edges")) {
    g.step_edges.push_back({endpoint_from(e.at("upstream")), endpoint_from(e.at("downstream"))});
  }
  return g;
}

json to_json(const std::vector<VirtualOracle>& oracles) {
  json out = json::array();
  for (const auto& o : oracles) {
    out.push_back({{"subtask_name", o.subtask_name},
                   {"goal", o.goal},
                   {"preconditions", o.preconditions},
                   {"key_evidence", o.key_evidence},
                   {"acceptance_criteria", o.acceptance_criteria}});
  }
  return out;
}

std::vector<VirtualOracle> oracles_from_json(const json& j) {
  std::vector<VirtualOracle> out;
  for (const auto& o : j) {
    out.push_back({o.at("subtask_name").get<std::string>(), o.at("goal").get<std::string>(),
                   o.at("preconditions").get<std::vector<std::string>>(),
                   o.at("key_evidence").get<std::vector<std::string>>(),
                   o.at("acceptance_criteria").get<std::vector<std::string>>()});
  }
  return out;
}

json to_json(const Diagnostics& d) {
  json out = json::array();
  for (const auto& i : d.items) {
    out.push_back({{"phase", i.phase}, {"rule", i.rule}, {"line", i.line}, {"message", i.message}, {"rejected", i.rejected}});
  }
  return out;
}

Diagnostics diagnostics_from_json(const json& j) {
  Diagnostics d;
  for (const auto& i : j) {
    d.items.push_back({i.at("phase").get<std::string>(), i.at("rule").get<std::string>(), i.value("line", std::size_t{0}),
                       i.value("message", std::string{}), i.value("rejected", true)});
  }
  return d;
}

json to_json(const std::vector<LoopGroup>& groups) {
  json out = json::array();
  for (const auto& g : groups) {
    json unit = json::array();
    for (const auto& s : g.unit) unit.push_back({{"agent", s.agent}, {"action_key", s.action_key}});
    json roles = json::object();
    for (const auto& [step, role] : g.roles) roles[std::to_string(step)] = to_string(role);
    out.push_back({{"unit", std::move(unit)},
                   {"member_step_ids", g.member_step_ids},
                   {"occurrence_count", g.occurrence_count},
                   {"roles", std::move(roles)}});
  }
  return out;
}

}  // namespace tracecause
