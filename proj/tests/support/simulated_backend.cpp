#include "simulated_backend.hpp"

#include <algorithm>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause::testing {

namespace {

std::string first_line(const std::string& content) {
  for (const auto& line : text::split_lines(content)) {
    std::string t = text::collapse_ws(line);
    if (!t.empty()) return t.size() > 60 ? t.substr(0, 60) : t;
  }
  return "(empty)";
}

std::vector<std::string> agents_in(const FailureCase& c, int a, int b) {
  std::vector<std::string> out;
  for (int i = a; i <= b; ++i) {
    const auto& name = c.steps[static_cast<std::size_t>(i)].agent_name;
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

std::string attribution(const FailureCase& c, int step, const std::string& reason) {
  step = std::clamp(step, 0, c.step_count() - 1);
  return "Agent Name: " + c.steps[static_cast<std::size_t>(step)].agent_name + "\nStep Number: " +
         std::to_string(step) + "\nReason for Mistake: " + reason;
}

}  // namespace

SimulatedBackend::SimulatedBackend(std::vector<FailureCase> cases, std::string overlap_case, std::string repair_case)
    : cases_(std::move(cases)), overlap_case_(std::move(overlap_case)), repair_case_(std::move(repair_case)) {}

std::vector<std::pair<int, int>> SimulatedBackend::plan(const FailureCase& c) {
  const int t = c.step_count();
  const int k = std::min(3, t);
  std::vector<std::pair<int, int>> out;
  int start = 0;
  for (int i = 0; i < k; ++i) {
    const int size = t / k + (i < t % k ? 1 : 0);
    out.emplace_back(start, start + size - 1);
    start += size;
  }
  return out;
}

std::string SimulatedBackend::subtask_name(std::size_t k) {
  static const std::vector<std::string> names{"Gather candidate information", "Verify the evidence",
                                              "Compose the final answer"};
  return k < names.size() ? names[k] : "Subtask " + std::to_string(k + 1);
}

const FailureCase& SimulatedBackend::identify(const std::string& prompt) const {
  for (const auto& line : text::split_lines(prompt)) {
    if (auto v = text::label_value(line, "The problem is")) {
      for (const auto& c : cases_) {
        if (c.question == *v) return c;
      }
    }
  }
  throw GatewayError("simulated backend: prompt names no known case");
}

ChatResponse SimulatedBackend::send(const ChatRequest& request) {
  ++calls_;
  const FailureCase& c = identify(request.prompt);
  ChatResponse r;
  r.text = answer(request, c);
  r.prompt_tokens = static_cast<long long>((request.prompt.size() + 3) / 4);
  r.completion_tokens = static_cast<long long>((r.text.size() + 3) / 4);
  return r;
}

std::string SimulatedBackend::answer(const ChatRequest& request, const FailureCase& c) const {
  const auto ranges = plan(c);
  const std::string& tag = request.tag;
  const int mistake = c.annotation ? c.annotation->mistake_step : c.step_count() - 1;
  std::vector<std::string> blocks;

  if (tag == "decompose" || tag == "decompose_reflect") {
    const bool overlap = tag == "decompose" && c.case_id == overlap_case_ && ranges.size() >= 2;
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      int a = ranges[k].first;
      if (overlap && k == 1) a = std::max(0, a - 1);
      blocks.push_back("Subtask ID: S" + std::to_string(k + 1) + "\nName: " + subtask_name(k) + "\nStep Range: [" +
                       std::to_string(a) + ", " + std::to_string(ranges[k].second) +
                       "]\nDescription: Steps " + std::to_string(a) + " to " + std::to_string(ranges[k].second) +
                       " of the conversation.");
    }
    return text::join(blocks, "\n\n");
  }
  if (tag == "otar" || tag == "otar_repair") {
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      std::string b = "The Subtask Name: " + subtask_name(k) + "\nAgents:";
      for (const auto& agent : agents_in(c, ranges[k].first, ranges[k].second)) {
        int first = ranges[k].first;
        while (c.steps[static_cast<std::size_t>(first)].agent_name != agent) ++first;
        const std::string line = first_line(c.steps[static_cast<std::size_t>(first)].content);
        b += "\n- Agent: " + agent + "\n-- Action: " + line + "\n-- Observation: context available at step " +
             std::to_string(first) + "\n-- Thought: act on the current subtask goal\n-- Result: " + line;
      }
      blocks.push_back(std::move(b));
    }
    return text::join(blocks, "\n\n");
  }
  if (tag == "semantic_edges") {
    for (std::size_t k = 0; k + 1 < ranges.size(); ++k) {
      blocks.push_back("From: S" + std::to_string(k + 1) + "\nTo: S" + std::to_string(k + 2) +
                       "\nType: data_dependency\nCounterfactual_Patterns:\n- Bias: the output of S" +
                       std::to_string(k + 1) + " is incomplete\n  Anomaly: S" + std::to_string(k + 2) +
                       " works on a wrong candidate set");
    }
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      const auto agents = agents_in(c, ranges[k].first, ranges[k].second);
      for (std::size_t i = 0; i + 1 < agents.size(); ++i) {
        std::string b = i == 0 ? "Subtask: S" + std::to_string(k + 1) + "\n" : "";
        b += "From: " + agents[i] + "\nTo: " + agents[i + 1] +
             "\nType: obs_dependency\nCounterfactual_Patterns:\n- Bias: " + agents[i] +
             " reports a wrong fact\n  Anomaly: " + agents[i + 1] + " builds on the wrong fact";
        blocks.push_back(std::move(b));
      }
    }
    return blocks.empty() ? "No edges." : text::join(blocks, "\n\n");
  }
  if (tag == "step_edges") {
    for (std::size_t k = 0; k + 1 < ranges.size(); ++k) {
      const int u = ranges[k].second, d = ranges[k + 1].first;
      const std::string data = first_line(c.steps[static_cast<std::size_t>(u)].content);
      blocks.push_back("- Upstream: " + std::to_string(u) + "\n  output_data: \"" + data +
                       "\"\n  data_type: \"text\"\n  step_id: " + std::to_string(u) +
                       "\n  agent_id: " + c.steps[static_cast<std::size_t>(u)].agent_name + "\n- Downstream: " +
                       std::to_string(d) + "\n  input_data: \"" + data + "\"\n  data_type: \"text\"\n  step_id: " +
                       std::to_string(d) + "\n  agent_id: " + c.steps[static_cast<std::size_t>(d)].agent_name);
    }
    return text::join(blocks, "\n");
  }
  if (tag == "oracle" || tag == "oracle_repair") {
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      blocks.push_back("-Subtask Name: " + subtask_name(k) + "\n-Oracle:\n Goal: complete " + subtask_name(k) +
                       " for the question\n Precondition: " +
                       (k == 0 ? std::string("none") : "output of S" + std::to_string(k) + " is available") +
                       "\n Key Evidence:\n - facts cited in steps " + std::to_string(ranges[k].first) + " to " +
                       std::to_string(ranges[k].second) +
                       "\n Acceptance Criteria:\n - the result is consistent with the question constraints");
    }
    return text::join(blocks, "\n\n");
  }
  if (tag == "backtrack" || tag == "backtrack_repair") {
    std::size_t k = ranges.size() - 1;
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      if (mistake >= ranges[i].first && mistake <= ranges[i].second) k = i;
    }
    std::string steps = std::to_string(mistake);
    if (mistake + 1 < c.step_count()) steps += ", step " + std::to_string(mistake + 1);
    if (c.case_id == "alg_001") steps += ", 999";  // out of range, dropped by sanitization
    return "Candidate Error Subtasks: [S" + std::to_string(k + 1) + "]\nCandidate Error Agents: [" +
           c.steps[static_cast<std::size_t>(mistake)].agent_name + "]\nCandidate Error Steps: [" + steps + "]";
  }
  if (tag == "attribute") {
    const bool all_steps = request.prompt.find("all steps (0 to") != std::string::npos;
    if (!all_steps && c.case_id == repair_case_) {
      return "Agent Name: " + c.steps[static_cast<std::size_t>(mistake)].agent_name +
             "\nStep Number: the second step\nReason for Mistake: see above";
    }
    if (all_steps) return attribution(c, mistake - 1, "Earliest deviation judged without oracle supervision.");
    return attribution(c, mistake, "Local origin of the deviation; later steps only propagate it.");
  }
  if (tag == "attribute_repair") return attribution(c, mistake, "Local origin of the deviation after repair.");
  if (tag == "select" || tag == "select_repair") return attribution(c, mistake + 1, "First candidate judged wrong.");
  if (tag == "direct_graph" || tag == "direct_graph_repair")
    return attribution(c, ranges.back().first, "The final subtask produced the wrong answer.");
  if (tag == "all_at_once" || tag == "all_at_once_repair")
    return attribution(c, c.step_count() - 1, "The final answer is wrong.\nExtra commentary that is ignored.");
  throw GatewayError("simulated backend: unknown tag '" + tag + "'");
}

}  // namespace tracecause::testing
