#include "tracecause/graph_builder.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <set>

#include "tracecause/attributor.hpp"
#include "tracecause/error.hpp"
#include "tracecause/oracle_synth.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

namespace {

// Strips markdown, then leading list markers ("-", "--", "*", "•").
std::string bare(std::string_view line) {
  std::string s = text::strip_markdown(line);
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '-' || s[i] == '*' || s[i] == ' ' || s[i] == '\t') {
      ++i;
    } else if (s.compare(i, 3, "\xE2\x80\xA2") == 0) {  // U+2022 bullet
      i += 3;
    } else {
      break;
    }
  }
  return text::strip_markdown(std::string_view(s).substr(i));
}

std::vector<long long> all_ints(std::string_view s) {
  std::vector<long long> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      std::size_t j = i;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      out.push_back(*text::parse_int(s.substr(i, j - i)));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

void append_line(std::string& target, std::string_view line) {
  const std::string t = text::trim(line);
  if (t.empty()) return;
  if (!target.empty()) target += '\n';
  target += t;
}

bool is_none(std::string_view v) {
  const std::string k = text::to_lower(text::trim(v));
  return k.empty() || k == "none" || k == "[]" || k == "n/a";
}

std::string render_patterns(const std::vector<CounterfactualPattern>& patterns) {
  std::string out = "Counterfactual_Patterns:";
  for (const auto& p : patterns) out += "\n- Bias: " + p.bias + "\n  Anomaly: " + p.anomaly;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Decomposition
// ---------------------------------------------------------------------------

std::vector<PartitionViolation> check_partition(const std::vector<SubtaskNode>& subtasks, int step_count) {
  std::vector<PartitionViolation> out;
  if (subtasks.empty()) {
    out.push_back({"empty_plan", "the plan has no subtasks; subtasks must cover all steps 0.." +
                                     std::to_string(step_count - 1)});
    return out;
  }
  auto range_text = [](const SubtaskNode& s) {
    return s.id + " [" + std::to_string(s.step_range.first) + ", " + std::to_string(s.step_range.last) + "]";
  };
  int next = 0;  // first step not yet covered by the subtasks seen so far
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    const SubtaskNode& s = subtasks[i];
    const auto [a, b] = std::pair{s.step_range.first, s.step_range.last};
    if (a > b) {
      out.push_back({"inverted_range", range_text(s) + " ends before it starts"});
      continue;
    }
    if (a < 0 || b > step_count - 1) {
      out.push_back({"out_of_range", range_text(s) + " falls outside steps 0.." + std::to_string(step_count - 1)});
    }
    if (i > 0 && a < subtasks[i - 1].step_range.first) {
      out.push_back({"order", range_text(s) + " starts before the preceding subtask " + range_text(subtasks[i - 1]) +
                                  "; subtasks must follow the execution order"});
    } else if (a < next) {
      out.push_back({"overlap", range_text(s) + " overlaps steps up to " + std::to_string(next - 1) +
                                    " already covered; step ranges must not overlap"});
    } else if (a > next) {
      out.push_back({"gap", "steps " + std::to_string(next) + ".." + std::to_string(a - 1) +
                                " are not covered before " + range_text(s) + "; step ranges must cover all steps"});
    }
    next = std::max(next, b + 1);
  }
  if (next < step_count) {
    out.push_back({"gap", "steps " + std::to_string(next) + ".." + std::to_string(step_count - 1) +
                              " are not covered; step ranges must cover all steps"});
  }
  return out;
}

std::string describe_violations(const std::vector<PartitionViolation>& violations) {
  std::string out;
  for (const auto& v : violations) out += "- [" + v.kind + "] " + v.message + "\n";
  if (!out.empty()) out.pop_back();
  return out;
}

std::vector<SubtaskNode> parse_decomposition(std::string_view response) {
  struct Pending {
    SubtaskNode node;
    std::string raw_id;
    std::size_t line = 0;
    bool has_name = false, has_range = false, has_description = false;
  };
  std::vector<Pending> blocks;
  std::string* cont = nullptr;
  const auto lines = text::split_lines(response);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    const std::string b = bare(lines[i]);
    if (b.empty()) continue;
    if (auto v = text::label_value(b, "Subtask ID")) {
      blocks.push_back({});
      blocks.back().raw_id = *v;
      blocks.back().line = ln;
      cont = nullptr;
      continue;
    }
    if (blocks.empty()) continue;  // preamble before the first block
    Pending& p = blocks.back();
    auto once = [&](bool& flag, const char* field) {
      if (flag) throw GrammarError("duplicate_field", std::string("field '") + field + "' repeated", ln, p.raw_id);
      flag = true;
    };
    if (auto v = text::label_value(b, "Name")) {
      once(p.has_name, "Name");
      p.node.name = *v;
      cont = &p.node.name;
    } else if (auto v = text::label_value(b, "Step Range")) {
      once(p.has_range, "Step Range");
      const auto nums = all_ints(*v);
      if (nums.empty() || nums.size() > 2)
        throw GrammarError("step_range", "cannot read a step interval from '" + *v + "'", ln, p.raw_id);
      p.node.step_range = {static_cast<int>(nums.front()), static_cast<int>(nums.back())};
      cont = nullptr;
    } else if (auto v = text::label_value(b, "Description")) {
      once(p.has_description, "Description");
      p.node.description = *v;
      cont = &p.node.description;
    } else if (cont) {
      append_line(*cont, lines[i]);
    } else {
      throw GrammarError("unexpected_line", "unrecognized line '" + text::trim(lines[i]) + "'", ln, p.raw_id);
    }
  }

  if (blocks.empty()) throw GrammarError("no_subtasks", "response contains no 'Subtask ID:' block");
  std::vector<SubtaskNode> out;
  std::set<std::string> names;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    Pending& p = blocks[k];
    const std::string expected = "S" + std::to_string(k + 1);
    if (text::to_lower(text::trim(p.raw_id)) != text::to_lower(expected)) {
      throw GrammarError("subtask_id", "expected id " + expected + ", found '" + p.raw_id + "'", p.line, p.raw_id);
    }
    if (!p.has_name || text::trim(p.node.name).empty())
      throw GrammarError("missing_field", "subtask has no Name", p.line, expected);
    if (!p.has_range) throw GrammarError("missing_field", "subtask has no Step Range", p.line, expected);
    if (!p.has_description) throw GrammarError("missing_field", "subtask has no Description", p.line, expected);
    p.node.id = expected;
    p.node.name = text::collapse_ws(p.node.name);
    if (!names.insert(text::name_key(p.node.name)).second)
      throw GrammarError("duplicate_name", "subtask name '" + p.node.name + "' used twice", p.line, expected);
    out.push_back(std::move(p.node));
  }
  return out;
}

std::string render_decomposition(const std::vector<SubtaskNode>& subtasks) {
  std::string out;
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    const auto& s = subtasks[i];
    if (i) out += "\n\n";
    out += "Subtask ID: " + s.id + "\nName: " + s.name + "\nStep Range: [" + std::to_string(s.step_range.first) +
           ", " + std::to_string(s.step_range.last) + "]\nDescription: " + s.description;
  }
  return out;
}

DecompositionOutcome decompose(PhaseContext& ctx, const FailureCase& c, const std::string& rag_text,
                               int max_reflections) {
  prompts::Vars vars = case_vars(c);
  vars["rag_text"] = rag_text;
  const std::string prompt = prompts::render(prompts::asset("decompose"), vars, use_ground_truth(ctx, c));

  ChatResponse response = ctx.ask(prompt, "decompose");
  for (int round = 0;; ++round) {
    std::string report;
    try {
      auto subtasks = parse_decomposition(response.text);
      const auto violations = check_partition(subtasks, c.step_count());
      if (violations.empty()) return {std::move(subtasks), round};
      report = describe_violations(violations);
    } catch (const GrammarError& e) {
      report = std::string("- [format] ") + e.what();
    }
    if (round >= max_reflections) {
      throw DecompositionError("decomposition for case '" + c.case_id + "' still invalid after " +
                                   std::to_string(max_reflections) + " reflection rounds",
                               report);
    }
    const std::string reflect = prompts::render(
        prompts::asset("decompose_reflect"),
        {{"previous_response", response.text}, {"violations", report}, {"last_step", std::to_string(c.step_count() - 1)}});
    response = ctx.ask(prompt + "\n\n" + reflect, "decompose_reflect");
  }
}

std::optional<std::size_t> match_subtask(std::string_view label, const std::vector<SubtaskNode>& subtasks) {
  const std::string key = text::name_key(text::unquote(label));
  if (key.empty()) return std::nullopt;
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    if (text::name_key(subtasks[i].name) == key) return i;
  }
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    const std::string id = text::to_lower(subtasks[i].id);
    const std::string name = text::name_key(subtasks[i].name);
    if (key == id || key == id + ": " + name || key == id + " - " + name || key == id + " (" + name + ")" ||
        key == id + " " + name)
      return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// OTAR
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<const char*, 4> kOtarLabels{"Observation", "Thought", "Action", "Result"};

struct AgentDraft {
  std::string name;
  std::size_t line = 0;
  std::array<std::optional<std::string>, 4> fields;
};

struct SubtaskDraft {
  std::size_t index = 0;
  std::size_t line = 0;
  std::vector<AgentDraft> agents;
};

}  // namespace

std::vector<AgentNode> parse_otar(std::string_view response, const std::vector<SubtaskNode>& subtasks,
                                  const FailureCase& c) {
  std::vector<SubtaskDraft> blocks;
  std::set<std::size_t> seen;
  std::string* cont = nullptr;
  const auto lines = text::split_lines(response);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    const std::string b = bare(lines[i]);
    if (b.empty()) continue;

    auto subtask_label = text::label_value(b, "The Subtask Name");
    if (!subtask_label) subtask_label = text::label_value(b, "Subtask Name");
    if (subtask_label) {
      auto idx = match_subtask(*subtask_label, subtasks);
      if (!idx) throw GrammarError("unknown_subtask", "'" + *subtask_label + "' matches no planned subtask", ln, *subtask_label);
      if (!seen.insert(*idx).second)
        throw GrammarError("duplicate_subtask", "subtask listed twice", ln, subtasks[*idx].name);
      blocks.push_back({*idx, ln, {}});
      cont = nullptr;
      continue;
    }
    if (blocks.empty()) continue;  // preamble
    SubtaskDraft& sub = blocks.back();
    const std::string& sub_name = subtasks[sub.index].name;

    if (text::label_value(b, "Agents")) {
      cont = nullptr;
      continue;
    }
    if (auto v = text::label_value(b, "Agent")) {
      sub.agents.push_back({*v, ln, {}});
      cont = nullptr;
      continue;
    }
    bool matched = false;
    for (std::size_t f = 0; f < kOtarLabels.size(); ++f) {
      if (auto v = text::label_value(b, kOtarLabels[f])) {
        if (sub.agents.empty())
          throw GrammarError("field_outside_agent", std::string(kOtarLabels[f]) + " appears before any '- Agent:' line",
                             ln, sub_name);
        AgentDraft& a = sub.agents.back();
        if (a.fields[f])
          throw GrammarError("duplicate_field", std::string(kOtarLabels[f]) + " repeated", ln, sub_name + "/" + a.name);
        a.fields[f] = *v;
        cont = &*a.fields[f];
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (cont) {
      append_line(*cont, lines[i]);
      continue;
    }
    throw GrammarError("unexpected_line", "unrecognized line '" + text::trim(lines[i]) + "'", ln, sub_name);
  }

  for (std::size_t k = 0; k < subtasks.size(); ++k) {
    if (!seen.count(k)) throw GrammarError("missing_subtask", "no OTAR block for subtask", 0, subtasks[k].name);
  }
  std::sort(blocks.begin(), blocks.end(), [](const SubtaskDraft& a, const SubtaskDraft& b) { return a.index < b.index; });

  std::vector<AgentNode> out;
  for (const auto& sub : blocks) {
    const SubtaskNode& node = subtasks[sub.index];
    if (sub.agents.empty()) throw GrammarError("no_agents", "subtask lists no agents", sub.line, node.name);
    std::set<std::string> names;
    for (const auto& a : sub.agents) {
      const std::string block = node.name + "/" + a.name;
      for (std::size_t f = 0; f < kOtarLabels.size(); ++f) {
        if (!a.fields[f])
          throw GrammarError("missing_otar_field", std::string("agent block lacks ") + kOtarLabels[f], a.line, block);
      }
      auto resolved = resolve_agent(c, a.name);
      if (!resolved) throw GrammarError("unknown_agent", "agent '" + a.name + "' never acts in the log", a.line, block);
      if (!agent_acts_in(c, *resolved, node.step_range)) {
        throw GrammarError("agent_out_of_range", "agent '" + *resolved + "' does not act within steps " +
                                                     std::to_string(node.step_range.first) + ".." +
                                                     std::to_string(node.step_range.last),
                           a.line, block);
      }
      if (!names.insert(*resolved).second)
        throw GrammarError("duplicate_agent", "agent listed twice in one subtask", a.line, block);
      out.push_back({*resolved, node.id, {*a.fields[0], *a.fields[1], *a.fields[2], *a.fields[3]}});
    }
  }
  return out;
}

std::string render_otar(const std::vector<SubtaskNode>& subtasks, const std::vector<AgentNode>& agents) {
  std::string out;
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    if (i) out += "\n\n";
    out += "The Subtask Name: " + subtasks[i].name + "\nAgents:";
    for (const auto& a : agents) {
      if (a.subtask_id != subtasks[i].id) continue;
      out += "\n- Agent: " + a.agent_name + "\n-- Action: " + a.otar.action + "\n-- Observation: " +
             a.otar.observation + "\n-- Thought: " + a.otar.thought + "\n-- Result: " + a.otar.result;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subtask and agent edges
// ---------------------------------------------------------------------------

namespace {

struct EdgeDraft {
  std::size_t line = 0;
  std::string from;
  std::optional<std::string> to;
  std::optional<std::string> type;
  std::vector<CounterfactualPattern> patterns;
  std::optional<CounterfactualPattern> pending;
  std::optional<std::string> context;  // subtask id from the latest "Subtask:" line
  bool has_patterns = false;
  bool duplicate_field = false;
};

bool is_edge_field(const std::string& b) {
  for (const char* label : {"To", "Type", "Counterfactual_Patterns", "Failure Modes", "Bias", "Anomaly"}) {
    if (text::label_value(b, label)) return true;
  }
  return false;
}

std::optional<std::string> subtask_context(const std::string& b, const std::vector<SubtaskNode>& subtasks,
                                           bool& is_context_line) {
  is_context_line = false;
  std::optional<std::string> value = text::label_value(b, "Subtask");
  if (!value && text::starts_with_ci(b, "subtask ")) {
    // "Subtask S2:" / "Subtask S2 agent edges"
    std::string rest = text::trim(std::string_view(b).substr(8));
    auto end = rest.find_first_of(" :(");
    value = rest.substr(0, end);
  }
  if (!value) return std::nullopt;
  is_context_line = true;
  if (auto idx = match_subtask(*value, subtasks)) return subtasks[*idx].id;
  return std::nullopt;
}

}  // namespace

SemanticEdges parse_semantic_edges(std::string_view response, const Hcg& partial, const FailureCase& c,
                                   Diagnostics& diag) {
  static constexpr const char* kPhase = "semantic_edges";
  SemanticEdges out;
  std::optional<EdgeDraft> cur;
  std::optional<std::string> context;
  std::string* cont = nullptr;

  auto flush_pattern = [&](EdgeDraft& e) {
    if (!e.pending) return;
    if (text::trim(e.pending->bias).empty() || text::trim(e.pending->anomaly).empty()) {
      diag.reject(kPhase, "incomplete_pattern", e.line, "counterfactual pattern needs both Bias and Anomaly; dropped");
    } else {
      e.patterns.push_back(*e.pending);
    }
    e.pending.reset();
  };

  auto finish = [&]() {
    if (!cur) return;
    EdgeDraft e = std::move(*cur);
    cur.reset();
    cont = nullptr;
    flush_pattern(e);
    const std::string where = "edge from '" + e.from + "'";
    if (e.duplicate_field) {
      diag.reject(kPhase, "duplicate_field", e.line, where + " repeats a field");
      return;
    }
    if (!e.to || !e.type || !e.has_patterns) {
      const char* field = !e.to ? "To" : (!e.type ? "Type" : "Counterfactual_Patterns");
      diag.reject(kPhase, "missing_field", e.line, where + " lacks " + std::string(field));
      return;
    }
    auto from_sub = match_subtask(e.from, partial.subtasks);
    auto to_sub = match_subtask(*e.to, partial.subtasks);
    if (from_sub && to_sub) {
      auto type = subtask_edge_type_from(*e.type);
      if (!type) {
        diag.reject(kPhase, "unknown_edge_type", e.line, "'" + *e.type + "' is not a subtask edge type");
        return;
      }
      if (*to_sub != *from_sub + 1) {
        diag.reject(kPhase, "non_consecutive", e.line,
                    partial.subtasks[*from_sub].id + " -> " + partial.subtasks[*to_sub].id +
                        " links non-consecutive subtasks");
        return;
      }
      out.subtask_edges.push_back(
          {partial.subtasks[*from_sub].id, partial.subtasks[*to_sub].id, *type, std::move(e.patterns)});
      return;
    }
    if (from_sub || to_sub) {
      diag.reject(kPhase, "mixed_endpoints", e.line, where + " mixes a subtask and an agent endpoint");
      return;
    }
    auto from_agent = resolve_agent(c, e.from);
    auto to_agent = resolve_agent(c, *e.to);
    if (!from_agent || !to_agent) {
      diag.reject(kPhase, "dangling_endpoint", e.line,
                  "endpoint '" + (!from_agent ? e.from : *e.to) + "' is neither a subtask nor an agent");
      return;
    }
    auto type = agent_edge_type_from(*e.type);
    if (!type) {
      diag.reject(kPhase, "unknown_edge_type", e.line, "'" + *e.type + "' is not an agent edge type");
      return;
    }
    std::string subtask_id;
    if (e.context) {
      if (!partial.find_agent(*e.context, *from_agent) || !partial.find_agent(*e.context, *to_agent)) {
        diag.reject(kPhase, "cross_subtask", e.line,
                    *from_agent + " -> " + *to_agent + " are not both agent nodes of " + *e.context);
        return;
      }
      subtask_id = *e.context;
    } else {
      std::vector<std::string> shared;
      for (const auto& s : partial.subtasks) {
        if (partial.find_agent(s.id, *from_agent) && partial.find_agent(s.id, *to_agent)) shared.push_back(s.id);
      }
      if (shared.empty()) {
        diag.reject(kPhase, "cross_subtask", e.line, *from_agent + " -> " + *to_agent + " share no subtask");
        return;
      }
      if (shared.size() > 1)
        diag.note(kPhase, "ambiguous_subtask", e.line, "edge placed in " + shared.front() + " (no Subtask: line)");
      subtask_id = shared.front();
    }
    out.agent_edges.push_back({subtask_id, *from_agent, *to_agent, *type, std::move(e.patterns)});
  };

  const auto lines = text::split_lines(response);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    const std::string b = bare(lines[i]);
    if (b.empty()) continue;

    bool is_context = false;
    auto ctx_id = subtask_context(b, partial.subtasks, is_context);
    if (is_context) {
      finish();
      context = ctx_id;
      if (!ctx_id) diag.note(kPhase, "unknown_context", ln, "'" + b + "' names no planned subtask");
      continue;
    }
    if (auto v = text::label_value(b, "From")) {
      finish();
      cur = EdgeDraft{};
      cur->line = ln;
      cur->from = text::unquote(*v);
      cur->context = context;
      continue;
    }
    if (!cur) {
      if (is_edge_field(b)) {
        diag.reject(kPhase, "orphan_field", ln, "edge field before any 'From:' line: '" + b + "'");
      } else {
        diag.note(kPhase, "ignored_line", ln, "outside any edge block: '" + b + "'");
      }
      continue;
    }
    if (auto v = text::label_value(b, "To")) {
      if (cur->to) cur->duplicate_field = true;
      cur->to = text::unquote(*v);
      cont = nullptr;
    } else if (auto v = text::label_value(b, "Type")) {
      if (cur->type) cur->duplicate_field = true;
      cur->type = text::unquote(*v);
      cont = nullptr;
    } else if (auto v = text::label_value(b, "Counterfactual_Patterns"); v || text::label_value(b, "Failure Modes")) {
      if (cur->has_patterns) cur->duplicate_field = true;
      cur->has_patterns = true;
      if (v && !is_none(*v)) diag.note(kPhase, "ignored_line", ln, "inline pattern text ignored: '" + *v + "'");
      cont = nullptr;
    } else if (auto v = text::label_value(b, "Bias")) {
      if (!cur->has_patterns) {
        diag.reject(kPhase, "pattern_outside_section", ln, "Bias before the Counterfactual_Patterns label");
      }
      flush_pattern(*cur);
      cur->pending = CounterfactualPattern{*v, ""};
      cont = &cur->pending->bias;
    } else if (auto v = text::label_value(b, "Anomaly")) {
      if (!cur->pending || !cur->pending->anomaly.empty()) {
        flush_pattern(*cur);
        diag.reject(kPhase, "incomplete_pattern", ln, "Anomaly without a preceding Bias; dropped");
        cont = nullptr;
      } else {
        cur->pending->anomaly = *v;
        cont = &cur->pending->anomaly;
      }
    } else if (cont) {
      append_line(*cont, lines[i]);
    } else {
      diag.note(kPhase, "ignored_line", ln, "unrecognized line in edge block: '" + b + "'");
    }
  }
  finish();
  note_agent_cycles(out.agent_edges, diag);
  return out;
}

std::string render_semantic_edges(const Hcg& g) {
  std::vector<std::string> blocks;
  for (const auto& e : g.subtask_edges) {
    blocks.push_back("From: " + e.from_id + "\nTo: " + e.to_id + "\nType: " + std::string(to_string(e.type)) + "\n" +
                     render_patterns(e.patterns));
  }
  for (const auto& s : g.subtasks) {
    bool header = false;
    for (const auto& e : g.agent_edges) {
      if (e.subtask_id != s.id) continue;
      std::string block;
      if (!header) block = "Subtask: " + s.id + "\n";
      header = true;
      block += "From: " + e.from_agent + "\nTo: " + e.to_agent + "\nType: " + std::string(to_string(e.type)) + "\n" +
               render_patterns(e.patterns);
      blocks.push_back(std::move(block));
    }
  }
  return text::join(blocks, "\n\n");
}

void note_agent_cycles(const std::vector<AgentEdge>& edges, Diagnostics& diag) {
  std::map<std::string, std::map<std::string, std::vector<std::string>>> adj;
  for (const auto& e : edges) adj[e.subtask_id][e.from_agent].push_back(e.to_agent);
  for (const auto& [subtask, graph] : adj) {
    std::map<std::string, int> state;  // 0 unvisited, 1 on stack, 2 done
    bool cyclic = false;
    std::function<void(const std::string&)> visit = [&](const std::string& n) {
      state[n] = 1;
      auto it = graph.find(n);
      if (it != graph.end()) {
        for (const auto& m : it->second) {
          if (state[m] == 1) cyclic = true;
          if (state[m] == 0) visit(m);
        }
      }
      state[n] = 2;
    };
    for (const auto& [n, _] : graph) {
      if (state[n] == 0) visit(n);
    }
    if (cyclic) diag.note("semantic_edges", "agent_cycle", 0, "agent edges of " + subtask + " contain a cycle");
  }
}

// ---------------------------------------------------------------------------
// Step edges
// ---------------------------------------------------------------------------

namespace {

struct EndpointDraft {
  bool upstream = true;
  std::size_t line = 0;
  std::optional<long long> head;
  std::optional<long long> step_id;
  std::optional<std::string> data;
  std::optional<std::string> wrong_data;  // input_data on an upstream block or the reverse
  std::optional<std::string> data_type;
  std::optional<std::string> agent;
  bool bad_number = false;
  bool duplicate_field = false;
};

template <typename T>
void set_once(EndpointDraft& d, std::optional<T>& slot, T value) {
  if (slot) d.duplicate_field = true;
  slot = std::move(value);
}

}  // namespace

std::vector<StepEdge> parse_step_edges(std::string_view response, const FailureCase& c, Diagnostics& diag) {
  static constexpr const char* kPhase = "step_edges";
  std::vector<StepEdge> out;
  std::optional<EndpointDraft> up;
  std::optional<EndpointDraft> cur;

  auto resolve = [&](const EndpointDraft& d, StepEndpoint& e) -> bool {
    const char* side = d.upstream ? "Upstream" : "Downstream";
    if (d.duplicate_field) {
      diag.reject(kPhase, "duplicate_field", d.line, std::string(side) + " repeats a field");
      return false;
    }
    if (d.bad_number) {
      diag.reject(kPhase, "step_not_integer", d.line, std::string(side) + " step id is not an integer");
      return false;
    }
    if (!d.head || !d.step_id) {
      diag.reject(kPhase, "missing_field", d.line, std::string(side) + (d.head ? " lacks step_id" : " has no step number"));
      return false;
    }
    if (d.head && d.step_id && *d.head != *d.step_id) {
      diag.reject(kPhase, "step_id_mismatch", d.line, std::string(side) + " header and step_id disagree");
      return false;
    }
    const long long step = d.head ? *d.head : *d.step_id;
    if (step < 0 || step >= c.step_count()) {
      diag.reject(kPhase, "step_out_of_range", d.line, std::string(side) + " step " + std::to_string(step) +
                                                           " outside 0.." + std::to_string(c.step_count() - 1));
      return false;
    }
    if (!d.data) {
      diag.reject(kPhase, "missing_field", d.line,
                  std::string(side) + " lacks " + (d.upstream ? "output_data" : "input_data"));
      return false;
    }
    if (!d.data_type) {
      diag.reject(kPhase, "missing_field", d.line, std::string(side) + " lacks data_type");
      return false;
    }
    auto dt = data_type_from(*d.data_type);
    if (!dt) {
      diag.reject(kPhase, "unknown_data_type", d.line, "'" + *d.data_type + "' is not text/numeric/list/boolean");
      return false;
    }
    e.step_id = static_cast<int>(step);
    e.data = *d.data;
    e.data_type = *dt;
    if (!d.agent || text::trim(*d.agent).empty()) {
      diag.reject(kPhase, "missing_field", d.line, std::string(side) + " lacks agent_id");
      return false;
    }
    const std::string& actual = c.steps[static_cast<std::size_t>(step)].agent_name;
    auto named = resolve_agent(c, text::unquote(*d.agent));
    if (!named) {
      diag.reject(kPhase, "unknown_agent", d.line, std::string(side) + " agent_id '" + *d.agent + "' never acts in the log");
      return false;
    }
    if (*named != actual) {
      diag.note(kPhase, "agent_substituted", d.line,
                "agent_id '" + *d.agent + "' replaced by step " + std::to_string(step) + "'s agent " + actual);
    }
    e.agent_id = actual;
    return true;
  };

  auto close = [&]() {
    if (!cur) return;
    EndpointDraft d = std::move(*cur);
    cur.reset();
    if (d.upstream) {
      if (up) diag.reject(kPhase, "unpaired_upstream", up->line, "Upstream block without a Downstream block");
      up = std::move(d);
      return;
    }
    if (!up) {
      diag.reject(kPhase, "unpaired_downstream", d.line, "Downstream block without a preceding Upstream block");
      return;
    }
    EndpointDraft u = std::move(*up);
    up.reset();
    StepEdge edge;
    if (!resolve(u, edge.upstream) || !resolve(d, edge.downstream)) return;
    if (edge.downstream.step_id <= edge.upstream.step_id) {
      diag.reject(kPhase, "non_increasing_steps", d.line,
                  "downstream step " + std::to_string(edge.downstream.step_id) + " does not follow upstream step " +
                      std::to_string(edge.upstream.step_id));
      return;
    }
    out.push_back(std::move(edge));
  };

  const auto lines = text::split_lines(response);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    const std::string b = bare(lines[i]);
    if (b.empty()) continue;
    auto head_up = text::label_value(b, "Upstream");
    auto head_down = head_up ? std::nullopt : text::label_value(b, "Downstream");
    if (head_up || head_down) {
      close();
      cur = EndpointDraft{};
      cur->upstream = head_up.has_value();
      cur->line = ln;
      const std::string& v = head_up ? *head_up : *head_down;
      if (!text::trim(v).empty()) {
        if (auto n = text::parse_int(text::unquote(v))) {
          cur->head = *n;
        } else {
          cur->bad_number = true;
        }
      }
      continue;
    }
    if (!cur) {
      bool field = false;
      for (const char* label : {"output_data", "input_data", "data_type", "step_id", "agent_id"}) {
        if (text::label_value(b, label)) field = true;
      }
      if (field) {
        diag.reject(kPhase, "orphan_field", ln, "step edge field before any Upstream/Downstream line: '" + b + "'");
      } else {
        diag.note(kPhase, "ignored_line", ln, "outside any step edge block: '" + b + "'");
      }
      continue;
    }
    if (auto v = text::label_value(b, "output_data")) {
      set_once(*cur, cur->upstream ? cur->data : cur->wrong_data, text::unquote(*v));
    } else if (auto v = text::label_value(b, "input_data")) {
      set_once(*cur, cur->upstream ? cur->wrong_data : cur->data, text::unquote(*v));
    } else if (auto v = text::label_value(b, "data_type")) {
      set_once(*cur, cur->data_type, text::unquote(*v));
    } else if (auto v = text::label_value(b, "step_id")) {
      if (auto n = text::parse_int(text::unquote(*v))) {
        set_once(*cur, cur->step_id, *n);
      } else {
        cur->bad_number = true;
      }
    } else if (auto v = text::label_value(b, "agent_id")) {
      set_once(*cur, cur->agent, text::unquote(*v));
    } else {
      diag.note(kPhase, "ignored_line", ln, "unrecognized line in step edge block: '" + b + "'");
    }
  }
  close();
  if (up) diag.reject(kPhase, "unpaired_upstream", up->line, "Upstream block without a Downstream block");
  return out;
}

std::string render_step_edges(const std::vector<StepEdge>& edges) {
  std::vector<std::string> blocks;
  for (const auto& e : edges) {
    blocks.push_back("- Upstream: " + std::to_string(e.upstream.step_id) + "\n  output_data: \"" + e.upstream.data +
                     "\"\n  data_type: \"" + std::string(to_string(e.upstream.data_type)) +
                     "\"\n  step_id: " + std::to_string(e.upstream.step_id) + "\n  agent_id: " + e.upstream.agent_id +
                     "\n- Downstream: " + std::to_string(e.downstream.step_id) + "\n  input_data: \"" +
                     e.downstream.data + "\"\n  data_type: \"" + std::string(to_string(e.downstream.data_type)) +
                     "\"\n  step_id: " + std::to_string(e.downstream.step_id) +
                     "\n  agent_id: " + e.downstream.agent_id);
  }
  return text::join(blocks, "\n");
}

// ---------------------------------------------------------------------------
// Whole graph
// ---------------------------------------------------------------------------

std::string render_subtasks_with_agents(const Hcg& g) {
  std::vector<std::string> blocks;
  for (const auto& s : g.subtasks) {
    std::string block = render_decomposition({s}) + "\nAgents:";
    for (const auto* a : g.agents_in(s.id)) {
      block += "\n- Agent: " + a->agent_name + "\n-- Action: " + a->otar.action + "\n-- Observation: " +
               a->otar.observation + "\n-- Thought: " + a->otar.thought + "\n-- Result: " + a->otar.result;
    }
    blocks.push_back(std::move(block));
  }
  return text::join(blocks, "\n\n");
}

std::string serialize_graph(const Hcg& g, GraphAnnotations annotations) {
  auto section = [](const std::string& title, const std::string& body) {
    return "[" + title + "]\n" + (body.empty() ? std::string("(none)") : body);
  };
  Hcg subtask_only;
  subtask_only.subtasks = g.subtasks;
  subtask_only.subtask_edges = g.subtask_edges;
  Hcg agent_only;
  agent_only.subtasks = g.subtasks;
  agent_only.agent_edges = g.agent_edges;

  std::vector<std::string> sections{
      section("Subtask Nodes", render_decomposition(g.subtasks)),
      section("Agent Nodes", render_otar(g.subtasks, g.agents)),
      section("Subtask Edges", render_semantic_edges(subtask_only)),
      section("Agent Edges", render_semantic_edges(agent_only)),
      section("Step Edges", render_step_edges(g.step_edges)),
  };
  if (annotations.oracles) sections.push_back(section("Virtual Oracles", render_oracles(*annotations.oracles)));
  if (annotations.loop_groups) sections.push_back(section("Loop Groups", render_loop_groups(*annotations.loop_groups)));
  return text::join(sections, "\n\n");
}

GraphBuild build_graph(PhaseContext& ctx, const FailureCase& c, const std::string& rag_text, int max_reflections) {
  GraphBuild build;
  auto decomposition = decompose(ctx, c, rag_text, max_reflections);
  build.reflections = decomposition.reflections;
  build.graph.subtasks = std::move(decomposition.subtasks);

  const bool gt = use_ground_truth(ctx, c);
  prompts::Vars vars = case_vars(c);
  vars["subtasks_text"] = render_decomposition(build.graph.subtasks);

  const std::string otar_prompt = prompts::render(prompts::asset("otar"), vars, gt);
  build.graph.agents = ask_with_repair(ctx, otar_prompt, "otar", [&](const std::string& text) {
    return parse_otar(text, build.graph.subtasks, c);
  });

  vars["subtasks_agents_text"] = render_subtasks_with_agents(build.graph);
  const ChatResponse sem = ctx.ask(prompts::render(prompts::asset("semantic_edges"), vars, gt), "semantic_edges");
  auto edges = parse_semantic_edges(sem.text, build.graph, c, build.diagnostics);
  build.graph.subtask_edges = std::move(edges.subtask_edges);
  build.graph.agent_edges = std::move(edges.agent_edges);

  const ChatResponse steps = ctx.ask(prompts::render(prompts::asset("step_edges"), vars, gt), "step_edges");
  build.graph.step_edges = parse_step_edges(steps.text, c, build.diagnostics);
  return build;
}

}  // namespace tracecause
