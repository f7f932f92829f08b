#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tracecause/http_backend.hpp"
#include "tracecause/knowledge_base.hpp"
#include "tracecause/pipeline.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

struct DatasetRef {
  std::filesystem::path path;
  Subset subset = Subset::algorithm_generated;
};

/// Declarative run description. Relative paths are resolved against the manifest's directory.
struct RunManifest {
  std::string config_id = "default";
  std::vector<DatasetRef> datasets;
  PipelineConfig pipeline;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path transcript = "transcript.jsonl";
  std::filesystem::path output_dir = "out";
  std::filesystem::path kb_dir = "kb";
  KbSources kb_sources;
  json embedder = {{"kind", "lexical"}, {"dim", 1024}};
  ProviderConfig provider;
  int workers = 4;
  int max_in_flight = 4;
};

/// Throws ConfigError on malformed documents and on anything that looks like an inline
/// credential: keys are only ever named by environment variable.
RunManifest manifest_from_json(const json& doc, const std::filesystem::path& base_dir);
RunManifest load_manifest(const std::filesystem::path& path);

/// Throws ConfigError when a referenced input does not exist.
void check_inputs(const RunManifest& m);

std::vector<FailureCase> load_manifest_cases(const RunManifest& m);

}  // namespace tracecause
