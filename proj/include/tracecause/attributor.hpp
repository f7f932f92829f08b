#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tracecause/graph.hpp"
#include "tracecause/phase.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

inline constexpr int kMaxLoopPeriod = 4;
inline constexpr std::size_t kActionKeyLength = 120;

/// Action key of a step: its first non-empty content line, lowercased, with URLs and digit runs
/// removed and whitespace collapsed, cut to kActionKeyLength bytes.
std::string normalize_action(std::string_view content);
std::vector<StepSignature> step_signatures(const FailureCase& c);

/// Greedy left-to-right scan. At each position the period p <= max_period whose repetition
/// covers the most steps wins (ties to the smaller p), needing at least two copies; the scan
/// resumes after the group. Step ids are sequence positions.
std::vector<LoopGroup> detect_loop_groups(std::span<const StepSignature> signatures, int max_period = kMaxLoopPeriod);
std::vector<LoopGroup> detect_loop_groups(const FailureCase& c);

std::string render_loop_groups(const std::vector<LoopGroup>& groups);

struct Attribution {
  std::string agent_name;
  int step_id = 0;
  std::string reason;
  friend bool operator==(const Attribution&, const Attribution&) = default;
};

struct AttributionOutcome {
  Attribution attribution;
  std::vector<std::string> warnings;
};

/// Reads `Agent Name / Step Number / Reason for Mistake` and validates the pair against the
/// case. Text after the three labels is ignored.
AttributionOutcome parse_attribution(std::string_view response, const FailureCase& c);

/// Sends a prompt answered in the three-line format, with one repair round.
AttributionOutcome ask_attribution(PhaseContext& ctx, const FailureCase& c, const std::string& prompt,
                                   const std::string& tag);

/// Counterfactual attribution over the candidate set and the annotated graph.
AttributionOutcome attribute(PhaseContext& ctx, const FailureCase& c, const std::string& candidate_text,
                             const std::string& graph_text);

json to_json(const AttributionOutcome& outcome);
AttributionOutcome attribution_from_json(const json& j);

}  // namespace tracecause
