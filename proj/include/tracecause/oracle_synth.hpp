#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tracecause/graph.hpp"
#include "tracecause/phase.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

/// Reads K blocks of `-Subtask Name / -Oracle / Goal / Precondition / Key Evidence /
/// Acceptance Criteria`. Block i must name plan subtask i; Goal and Acceptance Criteria must not
/// be empty. List sections take the inline text plus following lines, bullets stripped.
std::vector<VirtualOracle> parse_oracles(std::string_view response, const std::vector<SubtaskNode>& subtasks);
std::string render_oracles(const std::vector<VirtualOracle>& oracles);

/// One prompt for all K oracles, one repair round on a grammar failure.
std::vector<VirtualOracle> synthesize_oracles(PhaseContext& ctx, const FailureCase& c,
                                              const std::vector<SubtaskNode>& subtasks, const std::string& rag_text);

}  // namespace tracecause
