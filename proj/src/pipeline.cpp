#include "tracecause/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "tracecause/error.hpp"
#include "tracecause/oracle_synth.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

namespace fs = std::filesystem;

std::string_view to_string(Module m) {
  switch (m) {
    case Module::m1: return "M1";
    case Module::m2: return "M2";
    case Module::m3: return "M3";
  }
  return "M1";
}

Module module_from_string(std::string_view name) {
  const std::string k = text::to_lower(text::trim(name));
  if (k == "m1") return Module::m1;
  if (k == "m2") return Module::m2;
  if (k == "m3") return Module::m3;
  throw ConfigError("unknown module '" + std::string(name) + "' (expected M1, M2 or M3)");
}

void PipelineConfig::validate() const {
  if ((has(Module::m2) || has(Module::m3)) && !has(Module::m1)) throw ConfigError("M2 and M3 require M1");
  if (n_runs < 1) throw ConfigError("n_runs must be at least 1");
  if (retrieval_k < 0) throw ConfigError("retrieval_k must not be negative");
  if (max_reflections < 0) throw ConfigError("max_reflections must not be negative");
  if (max_output < 1) throw ConfigError("max_output must be positive");
  if (temperature < 0.0) throw ConfigError("temperature must not be negative");
  if (model_id.empty()) throw ConfigError("model_id is empty");
  if (per_node_backtracking) throw ConfigError("per_node_backtracking is reserved and not supported");
}

std::string PipelineConfig::variant() const {
  if (modules.empty()) return "all_at_once";
  const bool m2 = has(Module::m2), m3 = has(Module::m3);
  if (m2 && m3) return "full";
  if (m2) return "m1_m2";
  if (m3) return "m1_m3";
  return "only_m1";
}

json to_json(const PipelineConfig& c) {
  json modules = json::array();
  for (Module m : c.modules) modules.push_back(to_string(m));
  return {{"modules", modules},
          {"with_ground_truth", c.with_ground_truth},
          {"model_id", c.model_id},
          {"temperature", c.temperature},
          {"max_output", c.max_output},
          {"n_runs", c.n_runs},
          {"mode", to_string(c.mode)},
          {"retrieval_k", c.retrieval_k},
          {"max_reflections", c.max_reflections},
          {"per_node_backtracking", c.per_node_backtracking}};
}

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig c) {
  try {
    if (j.contains("modules")) {
      c.modules.clear();
      for (const auto& m : j.at("modules")) c.modules.insert(module_from_string(m.get<std::string>()));
    }
    c.with_ground_truth = j.value("with_ground_truth", c.with_ground_truth);
    c.model_id = j.value("model_id", c.model_id);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output = j.value("max_output", c.max_output);
    c.n_runs = j.value("n_runs", c.n_runs);
    if (j.contains("mode")) c.mode = gateway_mode_from_string(j.at("mode").get<std::string>());
    c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
    c.max_reflections = j.value("max_reflections", c.max_reflections);
    c.per_node_backtracking = j.value("per_node_backtracking", c.per_node_backtracking);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  return c;
}

json to_json(const PredictionRecord& r) {
  json j{{"case_id", r.case_id},
         {"agent_name", r.agent_name ? json(*r.agent_name) : json(nullptr)},
         {"step_id", r.step_id ? json(*r.step_id) : json(nullptr)},
         {"reason", r.reason},
         {"run_index", r.run_index},
         {"config_id", r.config_id},
         {"token_cost", r.token_cost}};
  if (r.error) j["error"] = *r.error;
  return j;
}

PredictionRecord prediction_from_json(const json& j) {
  try {
    PredictionRecord r;
    r.case_id = j.at("case_id").get<std::string>();
    if (!j.at("agent_name").is_null()) r.agent_name = j.at("agent_name").get<std::string>();
    if (!j.at("step_id").is_null()) r.step_id = j.at("step_id").get<int>();
    r.reason = j.value("reason", std::string{});
    r.run_index = j.at("run_index").get<int>();
    r.config_id = j.value("config_id", std::string{});
    r.token_cost = j.value("token_cost", 0LL);
    if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw SchemaError("prediction", e.what());
  }
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read predictions file " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) {
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) throw ParseError("malformed prediction line in " + path.string(), offset);
      out.push_back(prediction_from_json(j));
    }
    offset += line.size() + 1;
  }
  return out;
}

fs::path case_cache_dir(const fs::path& cache_root, const std::string& config_id, const std::string& case_id,
                        int run_index) {
  return cache_root / config_id / case_id / ("run_" + std::to_string(run_index));
}

std::string retrieve_exemplars(const PipelineServices& services, const FailureCase& c, int k) {
  if (k == 0) return "none";
  if (!services.kb || !services.embedder) throw ConfigError("M1 needs a knowledge base");
  return render_exemplars(services.kb->retrieve(*services.embedder, c.question, k, c.task_id));
}

namespace {

constexpr int kCacheSchemaVersion = 1;

// One cached phase artifact plus the token usage it cost when it was produced.
class PhaseCache {
 public:
  PhaseCache(fs::path dir, bool enabled, bool fresh) : dir_(std::move(dir)), enabled_(enabled), fresh_(fresh) {}

  std::optional<json> load(const std::string& phase, CostLedger& ledger, int& hits) const {
    if (!enabled_ || fresh_) return std::nullopt;
    std::ifstream in(dir_ / (phase + ".json"));
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    json doc = json::parse(ss.str(), nullptr, false);
    if (doc.is_discarded() || doc.value("schema_version", 0) != kCacheSchemaVersion || !doc.contains("artifact"))
      return std::nullopt;
    ledger.merge(CostLedger::from_json(doc.value("ledger", json::object())));
    ++hits;
    return doc.at("artifact");
  }

  void store(const std::string& phase, const json& artifact, const CostLedger& phase_ledger) const {
    if (!enabled_) return;
    fs::create_directories(dir_);
    const fs::path tmp = dir_ / (phase + ".json.tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << json{{"schema_version", kCacheSchemaVersion}, {"artifact", artifact}, {"ledger", phase_ledger.to_json()}}
                 .dump(2)
          << '\n';
    }
    fs::rename(tmp, dir_ / (phase + ".json"));
  }

 private:
  fs::path dir_;
  bool enabled_;
  bool fresh_;
};

// Runs `produce` against a private ledger so the phase's own usage can be cached with it.
template <typename Produce, typename ToJson, typename FromJson>
auto cached_phase(const PhaseCache& cache, const std::string& phase, PhaseContext& ctx, int& hits,
                  Produce&& produce, ToJson&& to, FromJson&& from) {
  if (auto doc = cache.load(phase, ctx.ledger, hits)) return from(*doc);
  CostLedger phase_ledger;
  PhaseContext local{ctx.gateway,     phase_ledger,  ctx.model_id,          ctx.temperature,
                     ctx.max_output,  ctx.run_index, ctx.with_ground_truth};
  try {
    auto value = produce(local);
    ctx.ledger.merge(phase_ledger);
    cache.store(phase, to(value), phase_ledger);
    return value;
  } catch (...) {
    ctx.ledger.merge(phase_ledger);
    throw;
  }
}

json graph_json(const GraphBuild& g) {
  return {{"graph", to_json(g.graph)}, {"diagnostics", to_json(g.diagnostics)}, {"reflections", g.reflections}};
}

GraphBuild graph_from(const json& j) {
  return {hcg_from_json(j.at("graph")), diagnostics_from_json(j.at("diagnostics")), j.value("reflections", 0)};
}

}  // namespace

CaseRunResult run_case(const PipelineConfig& config, const std::string& config_id, const FailureCase& c,
                       int run_index, PipelineServices& services) {
  if (!services.gateway) throw ConfigError("pipeline needs a gateway");
  config.validate();
  CaseRunResult result;
  result.prediction.case_id = c.case_id;
  result.prediction.run_index = run_index;
  result.prediction.config_id = config_id;

  PhaseContext ctx{*services.gateway, result.ledger,     config.model_id,         config.temperature,
                   config.max_output, run_index,         config.with_ground_truth};
  const PhaseCache cache(services.cache_dir.empty() ? fs::path{}
                                                    : case_cache_dir(services.cache_dir, config_id, c.case_id, run_index),
                         !services.cache_dir.empty(), services.fresh);
  int& hits = result.phases_from_cache;

  try {
    AttributionOutcome outcome;
    auto to_attr = [](const AttributionOutcome& o) { return to_json(o); };
    auto from_attr = [](const json& j) { return attribution_from_json(j); };

    if (!config.has(Module::m1)) {
      outcome = cached_phase(
          cache, "prediction", ctx, hits,
          [&](PhaseContext& p) {
            return ask_attribution(
                p, c, prompts::render(prompts::asset("all_at_once"), case_vars(c), use_ground_truth(p, c)),
                "all_at_once");
          },
          to_attr, from_attr);
    } else {
      const std::string rag = retrieve_exemplars(services, c, config.retrieval_k);
      const GraphBuild build = cached_phase(
          cache, "graph", ctx, hits,
          [&](PhaseContext& p) { return build_graph(p, c, rag, config.max_reflections); }, graph_json, graph_from);
      const Hcg& g = build.graph;
      const bool m2 = config.has(Module::m2), m3 = config.has(Module::m3);

      std::vector<LoopGroup> loops;
      if (m2 || m3) loops = detect_loop_groups(c);

      std::optional<std::vector<VirtualOracle>> oracles;
      std::optional<CandidateOutcome> candidates;
      if (m2) {
        oracles = cached_phase(
            cache, "oracles", ctx, hits,
            [&](PhaseContext& p) { return synthesize_oracles(p, c, g.subtasks, rag); },
            [](const std::vector<VirtualOracle>& o) { return to_json(o); },
            [](const json& j) { return oracles_from_json(j); });
      }
      const std::string graph_text =
          serialize_graph(g, {oracles ? &*oracles : nullptr, (m2 || m3) ? &loops : nullptr});
      if (m2) {
        BacktrackOptions options{config.per_node_backtracking};
        candidates = cached_phase(
            cache, "candidates", ctx, hits, [&](PhaseContext& p) { return backtrack(p, c, g, graph_text, options); },
            [](const CandidateOutcome& o) { return to_json(o); }, [](const json& j) { return candidates_from_json(j); });
        result.warnings.insert(result.warnings.end(), candidates->warnings.begin(), candidates->warnings.end());
      }

      outcome = cached_phase(
          cache, "prediction", ctx, hits,
          [&](PhaseContext& p) {
            prompts::Vars vars = case_vars(c);
            const bool gt = use_ground_truth(p, c);
            if (m3) {
              const std::string cand = m2 ? render_candidates(candidates->candidates) : render_all_steps_candidates(c, g);
              return attribute(p, c, cand, graph_text);
            }
            if (m2) {
              vars["graph"] = graph_text;
              vars["candidate_set"] = render_candidates(candidates->candidates);
              return ask_attribution(p, c, prompts::render(prompts::asset("select_candidate"), vars, gt), "select");
            }
            vars["graph"] = graph_text;
            return ask_attribution(p, c, prompts::render(prompts::asset("direct_graph"), vars, gt), "direct_graph");
          },
          to_attr, from_attr);
    }
    result.prediction.agent_name = outcome.attribution.agent_name;
    result.prediction.step_id = outcome.attribution.step_id;
    result.prediction.reason = outcome.attribution.reason;
    result.warnings.insert(result.warnings.end(), outcome.warnings.begin(), outcome.warnings.end());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    result.prediction.error = e.what();
  } catch (const json::exception& e) {
    result.prediction.error = std::string("json: ") + e.what();
  }
  result.prediction.token_cost = result.ledger.total();
  return result;
}

}  // namespace tracecause
