#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tracecause/eval_harness.hpp"
#include "tracecause/knowledge_base.hpp"
#include "tracecause/pipeline.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause::testing {

std::filesystem::path fixture_dir();
std::filesystem::path fixture_transcript();

/// Every fixture case, both subsets, ordered by case id.
std::vector<FailureCase> load_fixture_cases();

/// Knowledge base over the fixture GAIA / AssistantBench sources.
KnowledgeBase build_fixture_kb(Embedder& embedder);

/// Settings the checked-in transcript was recorded with.
PipelineConfig fixture_config(std::set<Module> modules);
inline constexpr const char* kFixtureConfigPrefix = "fixture";

/// Every configuration recorded into the fixture transcript: the all-at-once baseline and the
/// four ablation rows.
std::vector<AblationRow> fixture_rows();

/// A synthetic case whose step i is acted by agents[i].
FailureCase make_case(const std::vector<std::string>& agents, const std::string& case_id = "synthetic",
                      std::vector<std::string> contents = {});

/// Fresh scratch directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace tracecause::testing
