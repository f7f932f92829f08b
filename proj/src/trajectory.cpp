#include "tracecause/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

std::string_view to_string(Subset subset) {
  return subset == Subset::hand_crafted ? "hand_crafted" : "algorithm_generated";
}

Subset subset_from_string(std::string_view name) {
  std::string key = text::to_lower(text::trim(name));
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "hand_crafted" || key == "handcrafted" || key == "hand") return Subset::hand_crafted;
  if (key == "algorithm_generated" || key == "algorithm" || key == "alg") return Subset::algorithm_generated;
  throw ConfigError("unknown subset '" + std::string(name) + "'");
}

const AdapterTable& AdapterTable::for_subset(Subset subset) {
  static const AdapterTable hand = [] {
    AdapterTable t;
    t.case_id_keys = {"case_id", "id"};
    t.task_id_keys = {"question_ID", "question_id", "task_id"};
    t.question_keys = {"question"};
    t.ground_truth_keys = {"ground_truth", "groundtruth"};
    t.history_keys = {"history"};
    t.step_agent_keys = {"name", "role"};
    t.step_role_keys = {"role"};
    t.step_content_keys = {"content"};
    t.step_index_keys = {"index"};
    t.mistake_agent_keys = {"mistake_agent"};
    t.mistake_step_keys = {"mistake_step"};
    t.mistake_reason_keys = {"mistake_reason"};
    t.index_base = 0;
    t.strip_role_suffix = true;
    return t;
  }();
  static const AdapterTable algorithm = [] {
    AdapterTable t = hand;
    t.strip_role_suffix = false;
    return t;
  }();
  return subset == Subset::hand_crafted ? hand : algorithm;
}

namespace {

const json* find_key(const json& obj, const std::vector<std::string>& keys) {
  for (const auto& k : keys) {
    auto it = obj.find(k);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

std::string as_text(const json& v, const std::string& field) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw SchemaError(field, "expected a string");
}

int as_step(const json& v, const std::string& field) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_string()) {
    if (auto n = text::parse_int(v.get<std::string>())) return static_cast<int>(*n);
  }
  throw SchemaError(field, "expected an integer step id");
}

std::string strip_suffix(std::string name) {
  std::string t = text::trim(name);
  if (!t.empty() && t.back() == ')') {
    auto open = t.rfind(" (");
    if (open != std::string::npos && open > 0) return text::trim(t.substr(0, open));
  }
  return t;
}

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  }
}

FailureCase canonical_from_json(const json& doc, const std::string& default_id) {
  auto req = [&](const char* key) -> const json& {
    auto it = doc.find(key);
    if (it == doc.end()) throw SchemaError(key);
    return *it;
  };
  if (req("schema_version").get<int>() != kCaseSchemaVersion) {
    throw SchemaError("schema_version", "unsupported version " + req("schema_version").dump());
  }
  FailureCase c;
  c.case_id = doc.value("case_id", default_id);
  c.task_id = doc.value("task_id", c.case_id);
  c.question = as_text(req("question"), "question");
  if (auto it = doc.find("ground_truth_answer"); it != doc.end() && !it->is_null())
    c.ground_truth_answer = as_text(*it, "ground_truth_answer");
  c.subset = subset_from_string(as_text(req("subset"), "subset"));
  const json& steps = req("steps");
  if (!steps.is_array()) throw SchemaError("steps", "expected an array");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string where = "steps[" + std::to_string(i) + "]";
    const json& s = steps[i];
    if (!s.contains("index")) throw SchemaError(where + ".index");
    if (!s.contains("agent_name")) throw SchemaError(where + ".agent_name");
    if (!s.contains("content")) throw SchemaError(where + ".content");
    c.steps.push_back({as_step(s["index"], where + ".index"), as_text(s["agent_name"], where + ".agent_name"),
                       s.value("role", std::string{}), as_text(s["content"], where + ".content")});
  }
  if (auto it = doc.find("annotation"); it != doc.end() && !it->is_null()) {
    const json& a = *it;
    if (!a.contains("mistake_agent")) throw SchemaError("annotation.mistake_agent");
    if (!a.contains("mistake_step")) throw SchemaError("annotation.mistake_step");
    c.annotation = RootCauseAnnotation{as_text(a["mistake_agent"], "annotation.mistake_agent"),
                                       as_step(a["mistake_step"], "annotation.mistake_step"),
                                       a.value("mistake_reason", std::string{})};
  }
  return c;
}

void order_and_check_steps(FailureCase& c) {
  std::stable_sort(c.steps.begin(), c.steps.end(),
                   [](const TrajectoryStep& a, const TrajectoryStep& b) { return a.index < b.index; });
}

}  // namespace

FailureCase case_from_json(const json& doc, Subset subset, const AdapterTable& adapter,
                           const std::string& default_id) {
  if (!doc.is_object()) throw SchemaError("<root>", "expected a JSON object");
  if (doc.contains("schema_version")) {
    FailureCase c = canonical_from_json(doc, default_id);
    order_and_check_steps(c);
    validate_case(c);
    return c;
  }

  FailureCase c;
  c.subset = subset;
  const json* id = find_key(doc, adapter.case_id_keys);
  c.case_id = id ? as_text(*id, adapter.case_id_keys.front()) : default_id;
  const json* task = find_key(doc, adapter.task_id_keys);
  c.task_id = task ? as_text(*task, adapter.task_id_keys.front()) : c.case_id;

  const json* question = find_key(doc, adapter.question_keys);
  if (!question) throw SchemaError(adapter.question_keys.front());
  c.question = as_text(*question, adapter.question_keys.front());
  if (const json* gt = find_key(doc, adapter.ground_truth_keys))
    c.ground_truth_answer = as_text(*gt, adapter.ground_truth_keys.front());

  const json* history = find_key(doc, adapter.history_keys);
  if (!history) throw SchemaError(adapter.history_keys.front());
  if (!history->is_array()) throw SchemaError(adapter.history_keys.front(), "expected an array");

  for (std::size_t i = 0; i < history->size(); ++i) {
    const std::string where = adapter.history_keys.front() + "[" + std::to_string(i) + "]";
    const json& entry = (*history)[i];
    if (!entry.is_object()) throw SchemaError(where, "expected an object");
    TrajectoryStep step;
    step.index = static_cast<int>(i);
    if (const json* idx = find_key(entry, adapter.step_index_keys))
      step.index = as_step(*idx, where + "." + adapter.step_index_keys.front()) - adapter.index_base;
    const json* agent = find_key(entry, adapter.step_agent_keys);
    if (!agent) throw SchemaError(where + "." + adapter.step_agent_keys.front());
    step.agent_name = text::trim(as_text(*agent, where + "." + adapter.step_agent_keys.front()));
    if (adapter.strip_role_suffix) step.agent_name = strip_suffix(step.agent_name);
    if (step.agent_name.empty()) throw SchemaError(where + "." + adapter.step_agent_keys.front(), "empty agent name");
    if (const json* role = find_key(entry, adapter.step_role_keys)) step.role = as_text(*role, where + ".role");
    const json* content = find_key(entry, adapter.step_content_keys);
    if (!content) throw SchemaError(where + "." + adapter.step_content_keys.front());
    step.content = as_text(*content, where + "." + adapter.step_content_keys.front());
    c.steps.push_back(std::move(step));
  }

  if (const json* agent = find_key(doc, adapter.mistake_agent_keys)) {
    const json* step = find_key(doc, adapter.mistake_step_keys);
    if (!step) throw SchemaError(adapter.mistake_step_keys.front());
    RootCauseAnnotation a;
    a.mistake_agent = text::trim(as_text(*agent, adapter.mistake_agent_keys.front()));
    if (adapter.strip_role_suffix) a.mistake_agent = strip_suffix(a.mistake_agent);
    a.mistake_step = as_step(*step, adapter.mistake_step_keys.front()) - adapter.index_base;
    if (const json* reason = find_key(doc, adapter.mistake_reason_keys))
      a.mistake_reason = as_text(*reason, adapter.mistake_reason_keys.front());
    c.annotation = std::move(a);
  }

  order_and_check_steps(c);
  validate_case(c);
  return c;
}

FailureCase parse_case(std::string_view json_text, Subset subset, const std::string& default_id) {
  return case_from_json(parse_json_text(json_text), subset, AdapterTable::for_subset(subset), default_id);
}

FailureCase load_case(const std::filesystem::path& path, Subset subset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open case file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_case(buf.str(), subset, path.stem().string());
}

std::vector<FailureCase> load_dataset(const std::filesystem::path& path, Subset subset) {
  std::vector<FailureCase> cases;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) cases.push_back(load_case(f, subset));
  } else {
    cases.push_back(load_case(path, subset));
  }
  std::stable_sort(cases.begin(), cases.end(),
                   [](const FailureCase& a, const FailureCase& b) { return a.case_id < b.case_id; });
  for (std::size_t i = 1; i < cases.size(); ++i) {
    if (cases[i].case_id == cases[i - 1].case_id)
      throw IntegrityError("duplicate case id '" + cases[i].case_id + "' in " + path.string());
  }
  return cases;
}

void validate_case(const FailureCase& c) {
  if (c.steps.empty()) throw IntegrityError("case '" + c.case_id + "' has no steps");
  for (std::size_t i = 0; i < c.steps.size(); ++i) {
    if (c.steps[i].index != static_cast<int>(i)) {
      throw IntegrityError("case '" + c.case_id + "': step indices are not contiguous from 0 (expected " +
                           std::to_string(i) + ", found " + std::to_string(c.steps[i].index) + ")");
    }
    if (c.steps[i].agent_name.empty())
      throw IntegrityError("case '" + c.case_id + "': step " + std::to_string(i) + " has no agent");
  }
  if (c.annotation) {
    const auto& a = *c.annotation;
    if (a.mistake_step < 0 || a.mistake_step >= c.step_count()) {
      throw IntegrityError("case '" + c.case_id + "': mistake_step " + std::to_string(a.mistake_step) +
                           " outside [0, " + std::to_string(c.step_count() - 1) + "]");
    }
    if (!resolve_agent(c, a.mistake_agent)) {
      throw IntegrityError("case '" + c.case_id + "': mistake_agent '" + a.mistake_agent +
                           "' never acts in the trajectory");
    }
  }
}

json to_canonical_json(const FailureCase& c) {
  json steps = json::array();
  for (const auto& s : c.steps) {
    steps.push_back({{"index", s.index}, {"agent_name", s.agent_name}, {"role", s.role}, {"content", s.content}});
  }
  json doc = {{"schema_version", kCaseSchemaVersion},
              {"case_id", c.case_id},
              {"task_id", c.task_id},
              {"question", c.question},
              {"ground_truth_answer", c.ground_truth_answer ? json(*c.ground_truth_answer) : json(nullptr)},
              {"subset", std::string(to_string(c.subset))},
              {"steps", std::move(steps)}};
  if (c.annotation) {
    doc["annotation"] = {{"mistake_agent", c.annotation->mistake_agent},
                         {"mistake_step", c.annotation->mistake_step},
                         {"mistake_reason", c.annotation->mistake_reason}};
  } else {
    doc["annotation"] = nullptr;
  }
  return doc;
}

std::string serialize_history(const FailureCase& c, std::optional<StepRange> range) {
  StepRange r = range.value_or(c.full_range());
  if (r.first > r.last) throw Error("serialize_history: empty step range");
  if (r.first < 0 || r.last >= c.step_count()) {
    throw Error("serialize_history: range [" + std::to_string(r.first) + ", " + std::to_string(r.last) +
                "] outside the trajectory");
  }
  std::string out = "[\n";
  for (int i = r.first; i <= r.last; ++i) {
    const auto& s = c.steps[static_cast<std::size_t>(i)];
    // Keys emitted in a fixed order rather than json's sorted order to read naturally.
    out += "{\"index\": " + std::to_string(s.index) + ", \"agent\": " + json(s.agent_name).dump() +
           ", \"content\": " + json(s.content).dump() + "}";
    out += i == r.last ? "\n" : ",\n";
  }
  out += "]";
  return out;
}

std::vector<HistoryRecord> parse_history(std::string_view text) {
  json doc = parse_json_text(text);
  if (!doc.is_array()) throw SchemaError("<root>", "expected an array of history records");
  std::vector<HistoryRecord> out;
  for (const auto& r : doc) {
    out.push_back({r.at("index").get<int>(), r.at("agent").get<std::string>(), r.at("content").get<std::string>()});
  }
  return out;
}

std::vector<std::string> agents_of(const FailureCase& c) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& s : c.steps) {
    if (seen.insert(s.agent_name).second) out.push_back(s.agent_name);
  }
  return out;
}

std::optional<std::string> resolve_agent(const FailureCase& c, std::string_view name) {
  const std::string key = text::name_key(name);
  if (key.empty()) return std::nullopt;
  for (const auto& s : c.steps) {
    if (s.agent_name == name) return s.agent_name;
  }
  for (const auto& s : c.steps) {
    if (text::name_key(s.agent_name) == key) return s.agent_name;
  }
  return std::nullopt;
}

bool agent_acts_in(const FailureCase& c, std::string_view agent, StepRange range) {
  const std::string key = text::name_key(agent);
  for (int i = std::max(range.first, 0); i <= range.last && i < c.step_count(); ++i) {
    if (text::name_key(c.steps[static_cast<std::size_t>(i)].agent_name) == key) return true;
  }
  return false;
}

}  // namespace tracecause
