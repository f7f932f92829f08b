#include "tracecause/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

namespace fs = std::filesystem;

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void reject_inline_credentials(const json& j, const std::string& where) {
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      const std::string k = text::to_lower(key);
      const bool names_env = ends_with(k, "_env");
      if (!names_env && (k.find("api_key") != std::string::npos || k.find("apikey") != std::string::npos ||
                         k.find("secret") != std::string::npos || k.find("password") != std::string::npos ||
                         k.find("access_key") != std::string::npos || k.find("private_key") != std::string::npos ||
                         k == "token" || ends_with(k, "_token") || k == "authorization" || k == "bearer")) {
        throw ConfigError("credential field '" + where + key +
                          "' is not allowed in configuration; name an environment variable instead");
      }
      reject_inline_credentials(value, where + key + ".");
    }
  } else if (j.is_array()) {
    for (const auto& v : j) reject_inline_credentials(v, where);
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

}  // namespace

RunManifest manifest_from_json(const json& doc, const fs::path& base) {
  if (!doc.is_object()) throw ConfigError("manifest must be a JSON object");
  reject_inline_credentials(doc, "");
  static const std::set<std::string> kKnown{"config_id", "datasets",  "pipeline", "cache_dir",  "transcript",
                                            "output_dir", "kb_dir",   "kb_sources", "embedder", "provider",
                                            "workers",   "max_in_flight"};
  for (const auto& [key, _] : doc.items()) {
    if (!kKnown.count(key)) throw ConfigError("unknown manifest key '" + key + "'");
  }
  RunManifest m;
  try {
    m.config_id = doc.value("config_id", m.config_id);
    if (m.config_id.empty() || m.config_id.find_first_of("/\\") != std::string::npos)
      throw ConfigError("config_id must be a non-empty name without path separators");
    for (const auto& d : doc.value("datasets", json::array())) {
      m.datasets.push_back({resolve(base, d.at("path").get<std::string>()),
                            subset_from_string(d.value("subset", std::string("algorithm_generated")))});
    }
    if (doc.contains("pipeline")) {
      static const std::set<std::string> kPipelineKeys{"modules",   "with_ground_truth", "model_id",
                                                       "temperature", "max_output",      "n_runs",
                                                       "mode",      "retrieval_k",       "max_reflections",
                                                       "per_node_backtracking"};
      for (const auto& [key, _] : doc.at("pipeline").items()) {
        if (!kPipelineKeys.count(key)) throw ConfigError("unknown pipeline key '" + key + "'");
      }
      m.pipeline = pipeline_config_from_json(doc.at("pipeline"));
    }
    m.cache_dir = resolve(base, doc.value("cache_dir", m.cache_dir.string()));
    m.transcript = resolve(base, doc.value("transcript", m.transcript.string()));
    m.output_dir = resolve(base, doc.value("output_dir", m.output_dir.string()));
    m.kb_dir = resolve(base, doc.value("kb_dir", m.kb_dir.string()));
    if (doc.contains("kb_sources")) {
      const json& s = doc.at("kb_sources");
      m.kb_sources.gaia = resolve(base, s.value("gaia", std::string{}));
      m.kb_sources.assistantbench = resolve(base, s.value("assistantbench", std::string{}));
      m.kb_sources.selection = resolve(base, s.value("selection", std::string{}));
    }
    if (doc.contains("embedder")) m.embedder = doc.at("embedder");
    if (doc.contains("provider")) {
      const json& p = doc.at("provider");
      m.provider.endpoint = p.value("endpoint", m.provider.endpoint);
      m.provider.api_key_env = p.value("api_key_env", m.provider.api_key_env);
      m.provider.timeout = std::chrono::seconds(p.value("timeout_s", static_cast<long long>(m.provider.timeout.count())));
      if (p.contains("adapter")) {
        const json& a = p.at("adapter");
        auto& ad = m.provider.adapter;
        ad.model_field = a.value("model_field", ad.model_field);
        ad.messages_field = a.value("messages_field", ad.messages_field);
        ad.temperature_field = a.value("temperature_field", ad.temperature_field);
        ad.max_tokens_field = a.value("max_tokens_field", ad.max_tokens_field);
        ad.content_pointer = a.value("content_pointer", ad.content_pointer);
        ad.prompt_tokens_pointer = a.value("prompt_tokens_pointer", ad.prompt_tokens_pointer);
        ad.completion_tokens_pointer = a.value("completion_tokens_pointer", ad.completion_tokens_pointer);
      }
    }
    m.workers = doc.value("workers", m.workers);
    m.max_in_flight = doc.value("max_in_flight", m.max_in_flight);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  if (m.workers < 1) throw ConfigError("workers must be at least 1");
  if (m.max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
  m.pipeline.validate();
  return m;
}

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc = json::parse(ss.str(), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("manifest " + path.string() + " is not valid JSON");
  return manifest_from_json(doc, fs::absolute(path).parent_path());
}

void check_inputs(const RunManifest& m) {
  if (m.datasets.empty()) throw ConfigError("manifest lists no datasets");
  for (const auto& d : m.datasets) {
    if (!fs::exists(d.path)) throw ConfigError("dataset path does not exist: " + d.path.string());
  }
  if (m.pipeline.has(Module::m1) && m.pipeline.retrieval_k > 0 && !fs::exists(m.kb_dir / "entries.json"))
    throw ConfigError("knowledge base not found at " + m.kb_dir.string() + " (run `kb build` first)");
  if (m.pipeline.mode == GatewayMode::replay && !fs::exists(m.transcript))
    throw ConfigError("replay mode needs an existing transcript: " + m.transcript.string());
}

std::vector<FailureCase> load_manifest_cases(const RunManifest& m) {
  std::vector<FailureCase> out;
  std::set<std::string> ids;
  for (const auto& d : m.datasets) {
    for (auto& c : load_dataset(d.path, d.subset)) {
      if (!ids.insert(c.case_id).second) throw IntegrityError("duplicate case id '" + c.case_id + "' across datasets");
      out.push_back(std::move(c));
    }
  }
  std::sort(out.begin(), out.end(), [](const FailureCase& a, const FailureCase& b) { return a.case_id < b.case_id; });
  return out;
}

}  // namespace tracecause
