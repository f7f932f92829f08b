#include "tracecause/attributor.hpp"

#include <cctype>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

std::string normalize_action(std::string_view content) {
  std::string first;
  for (const auto& line : text::split_lines(content)) {
    if (!text::trim(line).empty()) {
      first = text::to_lower(line);
      break;
    }
  }
  std::string out;
  for (std::size_t i = 0; i < first.size();) {
    if (first.compare(i, 7, "http://") == 0 || first.compare(i, 8, "https://") == 0 ||
        first.compare(i, 4, "www.") == 0) {
      while (i < first.size() && !std::isspace(static_cast<unsigned char>(first[i]))) ++i;
      out += ' ';
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(first[i]))) {
      while (i < first.size() && std::isdigit(static_cast<unsigned char>(first[i]))) ++i;
      continue;
    }
    out += first[i++];
  }
  out = text::collapse_ws(out);
  if (out.size() > kActionKeyLength) out = text::trim(std::string_view(out).substr(0, kActionKeyLength));
  return out;
}

std::vector<StepSignature> step_signatures(const FailureCase& c) {
  std::vector<StepSignature> out;
  out.reserve(c.steps.size());
  for (const auto& s : c.steps) out.push_back({s.agent_name, normalize_action(s.content)});
  return out;
}

std::vector<LoopGroup> detect_loop_groups(std::span<const StepSignature> s, int max_period) {
  const int n = static_cast<int>(s.size());
  // run[p][j]: number of consecutive positions from j on where s[x] == s[x + p].
  std::vector<std::vector<int>> run(static_cast<std::size_t>(max_period) + 1, std::vector<int>(n + 1, 0));
  for (int p = 1; p <= max_period; ++p) {
    for (int j = n - p - 1; j >= 0; --j) {
      run[p][j] = s[j] == s[j + p] ? run[p][j + 1] + 1 : 0;
    }
  }
  std::vector<LoopGroup> out;
  int i = 0;
  while (i < n) {
    int best_p = 0, best_c = 0;
    for (int p = 1; p <= max_period; ++p) {
      const int c = 1 + run[p][i] / p;
      if (c >= 2 && c * p > best_c * best_p) {
        best_p = p;
        best_c = c;
      }
    }
    if (best_p == 0) {
      ++i;
      continue;
    }
    LoopGroup g;
    g.unit.assign(s.begin() + i, s.begin() + i + best_p);
    g.occurrence_count = best_c;
    const int end = i + best_c * best_p;
    for (int j = i; j < end; ++j) {
      g.member_step_ids.push_back(j);
      g.roles[j] = j == i ? LoopRole::entry : (j == end - 1 ? LoopRole::exit : LoopRole::internal);
    }
    out.push_back(std::move(g));
    i = end;
  }
  return out;
}

std::vector<LoopGroup> detect_loop_groups(const FailureCase& c) {
  const auto sigs = step_signatures(c);
  return detect_loop_groups(sigs);
}

std::string render_loop_groups(const std::vector<LoopGroup>& groups) {
  std::vector<std::string> blocks;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    std::vector<std::string> unit;
    for (const auto& sig : g.unit) unit.push_back("(" + sig.agent + ", " + sig.action_key + ")");
    std::vector<std::string> internal;
    int entry = -1, exit = -1;
    for (const auto& [step, role] : g.roles) {
      if (role == LoopRole::entry) entry = step;
      else if (role == LoopRole::exit) exit = step;
      else internal.push_back(std::to_string(step));
    }
    blocks.push_back("Loop Group " + std::to_string(k + 1) + ": period " + std::to_string(g.period()) + ", " +
                     std::to_string(g.occurrence_count) + " occurrences, steps " +
                     std::to_string(g.member_step_ids.front()) + "-" + std::to_string(g.member_step_ids.back()) +
                     "\n  unit: " + text::join(unit, " -> ") + "\n  entry: " + std::to_string(entry) +
                     "; exit: " + std::to_string(exit) +
                     "; internal: " + (internal.empty() ? std::string("none") : text::join(internal, ", ")));
  }
  return text::join(blocks, "\n");
}

AttributionOutcome parse_attribution(std::string_view response, const FailureCase& c) {
  std::optional<std::string> agent, step, reason;
  const auto lines = text::split_lines(response);
  std::size_t reason_line = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string b = text::strip_markdown(lines[i]);
    while (!b.empty() && (b.front() == '-' || b.front() == '*')) b = text::trim(std::string_view(b).substr(1));
    if (auto v = text::label_value(b, "Agent Name"); v && !agent) agent = *v;
    else if (auto v = text::label_value(b, "Step Number"); v && !step) step = *v;
    else if (auto v = text::label_value(b, "Reason for Mistake"); v && !reason) {
      reason = *v;
      reason_line = i;
    }
  }
  if (!agent) throw GrammarError("missing_line", "no 'Agent Name:' line");
  if (!step) throw GrammarError("missing_line", "no 'Step Number:' line");
  if (!reason) throw GrammarError("missing_line", "no 'Reason for Mistake:' line");
  if (reason->empty()) {
    // reason given on the line after the label
    for (std::size_t i = reason_line + 1; i < lines.size(); ++i) {
      if (!text::trim(lines[i]).empty()) {
        reason = text::trim(lines[i]);
        break;
      }
    }
  }
  if (reason->empty()) throw GrammarError("missing_reason", "'Reason for Mistake:' is empty");

  AttributionOutcome out;
  std::vector<long long> numbers;
  const std::string sv = text::unquote(*step);
  if (auto n = text::parse_int(sv)) {
    numbers.push_back(*n);
  } else {
    for (std::size_t i = 0; i < sv.size();) {
      if (std::isdigit(static_cast<unsigned char>(sv[i]))) {
        std::size_t j = i;
        while (j < sv.size() && std::isdigit(static_cast<unsigned char>(sv[j]))) ++j;
        numbers.push_back(*text::parse_int(sv.substr(i, j - i)));
        i = j;
      } else {
        ++i;
      }
    }
  }
  if (numbers.empty()) throw GrammarError("step_not_integer", "'Step Number: " + sv + "' is not an integer");
  if (numbers.size() > 1) out.warnings.push_back("several steps named in '" + sv + "'; the first is taken");
  const long long step_id = numbers.front();
  if (step_id < 0 || step_id >= c.step_count()) {
    throw GrammarError("step_out_of_range", "step " + std::to_string(step_id) + " outside 0.." +
                                                std::to_string(c.step_count() - 1));
  }
  auto name = resolve_agent(c, text::unquote(*agent));
  if (!name) throw GrammarError("unknown_agent", "agent '" + *agent + "' never acts in the log");

  out.attribution = {*name, static_cast<int>(step_id), text::collapse_ws(*reason)};
  if (c.steps[static_cast<std::size_t>(step_id)].agent_name != *name) {
    out.warnings.push_back(*name + " does not act at step " + std::to_string(step_id));
  }
  return out;
}

AttributionOutcome ask_attribution(PhaseContext& ctx, const FailureCase& c, const std::string& prompt,
                                   const std::string& tag) {
  return ask_with_repair(ctx, prompt, tag, [&](const std::string& response) { return parse_attribution(response, c); });
}

AttributionOutcome attribute(PhaseContext& ctx, const FailureCase& c, const std::string& candidate_text,
                             const std::string& graph_text) {
  prompts::Vars vars = case_vars(c);
  vars["candidate_set"] = candidate_text;
  vars["dag_graph"] = graph_text;
  return ask_attribution(ctx, c, prompts::render(prompts::asset("attribute"), vars, use_ground_truth(ctx, c)),
                         "attribute");
}

json to_json(const AttributionOutcome& o) {
  return {{"agent_name", o.attribution.agent_name},
          {"step_id", o.attribution.step_id},
          {"reason", o.attribution.reason},
          {"warnings", o.warnings}};
}

AttributionOutcome attribution_from_json(const json& j) {
  AttributionOutcome o;
  o.attribution = {j.at("agent_name").get<std::string>(), j.at("step_id").get<int>(), j.value("reason", std::string{})};
  o.warnings = j.value("warnings", std::vector<std::string>{});
  return o;
}

}  // namespace tracecause
