#include "tracecause/backtracker.hpp"

#include <algorithm>
#include <set>

#include "tracecause/error.hpp"
#include "tracecause/graph_builder.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

namespace {

std::vector<std::string> list_items(std::string_view value) {
  std::string s = text::trim(value);
  if (!s.empty() && s.front() == '[') s.erase(0, 1);
  if (!s.empty() && s.back() == ']') s.pop_back();
  std::vector<std::string> out;
  for (const auto& part : text::split(s, ',')) {
    std::string item = text::collapse_ws(text::unquote(text::trim(part)));
    const std::string k = text::to_lower(item);
    if (item.empty() || k == "none" || k == "n/a") continue;
    out.push_back(std::move(item));
  }
  return out;
}

std::optional<int> step_item(const std::string& item) {
  std::string s = text::to_lower(item);
  if (text::starts_with_ci(s, "step")) {
    s.erase(0, 4);
    while (!s.empty() && (s.front() == '_' || s.front() == ' ' || s.front() == '#' || s.front() == '-')) s.erase(0, 1);
  }
  auto n = text::parse_int(s);
  if (!n || *n < INT32_MIN || *n > INT32_MAX) return std::nullopt;
  return static_cast<int>(*n);
}

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

std::string render_list(const std::vector<std::string>& items) { return "[" + text::join(items, ", ") + "]"; }

}  // namespace

CandidateSet parse_candidates(std::string_view response, std::vector<std::string>* warnings) {
  std::optional<std::string> subtasks, agents, steps;
  for (const auto& line : text::split_lines(response)) {
    std::string b = text::strip_markdown(line);
    while (!b.empty() && (b.front() == '-' || b.front() == '*')) b = text::trim(std::string_view(b).substr(1));
    if (auto v = text::label_value(b, "Candidate Error Subtasks"); v && !subtasks) subtasks = *v;
    else if (auto v = text::label_value(b, "Candidate Error Agents"); v && !agents) agents = *v;
    else if (auto v = text::label_value(b, "Candidate Error Steps"); v && !steps) steps = *v;
  }
  if (!subtasks) throw GrammarError("missing_line", "no 'Candidate Error Subtasks:' line");
  if (!agents) throw GrammarError("missing_line", "no 'Candidate Error Agents:' line");
  if (!steps) throw GrammarError("missing_line", "no 'Candidate Error Steps:' line");

  CandidateSet out;
  out.subtask_ids = list_items(*subtasks);
  out.agent_names = list_items(*agents);
  for (const auto& item : list_items(*steps)) {
    if (auto n = step_item(item)) {
      out.step_ids.push_back(*n);
    } else if (warnings) {
      warnings->push_back("candidate step '" + item + "' is not a step number; dropped");
    }
  }
  return out;
}

std::string render_candidates(const CandidateSet& candidates) {
  std::vector<std::string> steps;
  for (int s : candidates.step_ids) steps.push_back(std::to_string(s));
  return "Candidate Error Subtasks: " + render_list(candidates.subtask_ids) +
         "\nCandidate Error Agents: " + render_list(candidates.agent_names) +
         "\nCandidate Error Steps: " + render_list(steps);
}

std::string render_all_steps_candidates(const FailureCase& c, const Hcg& g) {
  std::vector<std::string> ids;
  for (const auto& s : g.subtasks) ids.push_back(s.id);
  return "Candidate Error Subtasks: " + render_list(ids) + "\nCandidate Error Agents: " + render_list(agents_of(c)) +
         "\nCandidate Error Steps: all steps (0 to " + std::to_string(c.step_count() - 1) + ")";
}

CandidateOutcome sanitize_candidates(const CandidateSet& raw, const FailureCase& c, const Hcg& g) {
  CandidateOutcome out;
  for (const auto& s : raw.subtask_ids) {
    if (auto idx = match_subtask(s, g.subtasks)) {
      push_unique(out.candidates.subtask_ids, g.subtasks[*idx].id);
    } else {
      out.warnings.push_back("unknown candidate subtask '" + s + "' dropped");
    }
  }
  for (const auto& a : raw.agent_names) {
    if (auto name = resolve_agent(c, a)) {
      push_unique(out.candidates.agent_names, *name);
    } else {
      out.warnings.push_back("unknown candidate agent '" + a + "' dropped");
    }
  }
  for (int step : raw.step_ids) {
    if (step < 0 || step >= c.step_count()) {
      out.warnings.push_back("candidate step " + std::to_string(step) + " outside 0.." +
                             std::to_string(c.step_count() - 1) + " dropped");
      continue;
    }
    push_unique(out.candidates.step_ids, step);
  }
  for (int step : out.candidates.step_ids) {
    bool contained = false;
    for (const auto& id : out.candidates.subtask_ids) {
      if (const auto* s = g.find_subtask(id); s && s->step_range.contains(step)) contained = true;
    }
    if (!contained) out.uncontained_steps.push_back(step);
  }
  return out;
}

void apply_fallback(CandidateOutcome& outcome, const FailureCase& c, const Hcg& g) {
  if (!outcome.candidates.step_ids.empty() || g.subtasks.empty()) return;
  const SubtaskNode& last = g.subtasks.back();
  outcome.fallback = true;
  outcome.warnings.push_back("no candidate steps; falling back to the steps of " + last.id);
  push_unique(outcome.candidates.subtask_ids, last.id);
  for (int s = std::max(0, last.step_range.first); s <= std::min(last.step_range.last, c.step_count() - 1); ++s) {
    outcome.candidates.step_ids.push_back(s);
    push_unique(outcome.candidates.agent_names, c.steps[static_cast<std::size_t>(s)].agent_name);
  }
  outcome.uncontained_steps.clear();
}

CandidateOutcome backtrack(PhaseContext& ctx, const FailureCase& c, const Hcg& g, const std::string& graph_text,
                           const BacktrackOptions& options) {
  if (options.per_node_backtracking) throw ConfigError("per-node backtracking is reserved and not supported");
  prompts::Vars vars = case_vars(c);
  vars["graph"] = graph_text;
  const std::string prompt = prompts::render(prompts::asset("backtrack"), vars, use_ground_truth(ctx, c));
  std::vector<std::string> parse_warnings;
  CandidateSet raw = ask_with_repair(ctx, prompt, "backtrack", [&](const std::string& response) {
    parse_warnings.clear();
    return parse_candidates(response, &parse_warnings);
  });
  CandidateOutcome outcome = sanitize_candidates(raw, c, g);
  outcome.warnings.insert(outcome.warnings.begin(), parse_warnings.begin(), parse_warnings.end());
  apply_fallback(outcome, c, g);
  return outcome;
}

json to_json(const CandidateOutcome& o) {
  return {{"subtask_ids", o.candidates.subtask_ids},
          {"agent_names", o.candidates.agent_names},
          {"step_ids", o.candidates.step_ids},
          {"uncontained_steps", o.uncontained_steps},
          {"warnings", o.warnings},
          {"fallback", o.fallback}};
}

CandidateOutcome candidates_from_json(const json& j) {
  CandidateOutcome o;
  o.candidates.subtask_ids = j.at("subtask_ids").get<std::vector<std::string>>();
  o.candidates.agent_names = j.at("agent_names").get<std::vector<std::string>>();
  o.candidates.step_ids = j.at("step_ids").get<std::vector<int>>();
  o.uncontained_steps = j.value("uncontained_steps", std::vector<int>{});
  o.warnings = j.value("warnings", std::vector<std::string>{});
  o.fallback = j.value("fallback", false);
  return o;
}

}  // namespace tracecause
