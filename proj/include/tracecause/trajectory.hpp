#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tracecause {

using json = nlohmann::json;

/// Version of the canonical case JSON written by `to_canonical_json`.
inline constexpr int kCaseSchemaVersion = 1;

enum class Subset { hand_crafted, algorithm_generated };

std::string_view to_string(Subset subset);
Subset subset_from_string(std::string_view name);

/// Inclusive interval of step ids.
struct StepRange {
  int first = 0;
  int last = 0;

  bool contains(int step) const noexcept { return step >= first && step <= last; }
  int size() const noexcept { return last - first + 1; }
  friend bool operator==(const StepRange&, const StepRange&) = default;
};

struct TrajectoryStep {
  int index = 0;
  std::string agent_name;
  std::string role;
  std::string content;
};

struct RootCauseAnnotation {
  std::string mistake_agent;
  int mistake_step = 0;  // 0-based after loading
  std::string mistake_reason;
};

/// One benchmark instance. Every loaded case is a failed run; the annotation is optional so
/// unannotated logs can still be diagnosed.
struct FailureCase {
  std::string case_id;
  std::string task_id;  // id of the originating benchmark task, used for retrieval exclusion
  std::string question;
  std::optional<std::string> ground_truth_answer;
  std::vector<TrajectoryStep> steps;
  std::optional<RootCauseAnnotation> annotation;
  Subset subset = Subset::algorithm_generated;

  int step_count() const noexcept { return static_cast<int>(steps.size()); }
  StepRange full_range() const noexcept { return {0, step_count() - 1}; }
};

/// Maps a benchmark's field spellings onto the canonical model. One table per subset; each
/// `*_keys` list is tried in order and the first present key wins.
struct AdapterTable {
  std::vector<std::string> case_id_keys;
  std::vector<std::string> task_id_keys;
  std::vector<std::string> question_keys;
  std::vector<std::string> ground_truth_keys;
  std::vector<std::string> history_keys;
  std::vector<std::string> step_agent_keys;
  std::vector<std::string> step_role_keys;
  std::vector<std::string> step_content_keys;
  std::vector<std::string> step_index_keys;
  std::vector<std::string> mistake_agent_keys;
  std::vector<std::string> mistake_step_keys;
  std::vector<std::string> mistake_reason_keys;
  /// Base of `mistake_step` (and explicit step indices) in the source files: 0 or 1.
  int index_base = 0;
  /// Hand-crafted logs spell speakers as "Orchestrator (thought)"; drop the parenthetical.
  bool strip_role_suffix = false;

  static const AdapterTable& for_subset(Subset subset);
};

/// Reads one case file. Files carrying `schema_version` are read as canonical case JSON,
/// everything else goes through the subset's adapter table.
FailureCase load_case(const std::filesystem::path& path, Subset subset);

/// Parses case JSON text; `default_id` is used when the document carries no id.
FailureCase parse_case(std::string_view json_text, Subset subset, const std::string& default_id);
FailureCase case_from_json(const json& doc, Subset subset, const AdapterTable& adapter,
                           const std::string& default_id);

/// Loads a single file or every `*.json` file of a directory, ordered by case id.
std::vector<FailureCase> load_dataset(const std::filesystem::path& path, Subset subset);

/// Throws IntegrityError when step ids are not 0..T-1 or the annotation does not point at the
/// trajectory.
void validate_case(const FailureCase& c);

json to_canonical_json(const FailureCase& c);

/// Deterministic JSON array of {index, agent, content} records, one record per line.
std::string serialize_history(const FailureCase& c, std::optional<StepRange> range = std::nullopt);

struct HistoryRecord {
  int index = 0;
  std::string agent;
  std::string content;
  friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};
std::vector<HistoryRecord> parse_history(std::string_view text);

/// Unique agent names in first-appearance order.
std::vector<std::string> agents_of(const FailureCase& c);

/// Canonical spelling of `name` if an agent of that name (ignoring case and extra whitespace)
/// acts somewhere in the case.
std::optional<std::string> resolve_agent(const FailureCase& c, std::string_view name);

/// True when `agent` acts at least once inside `range`.
bool agent_acts_in(const FailureCase& c, std::string_view agent, StepRange range);

}  // namespace tracecause
