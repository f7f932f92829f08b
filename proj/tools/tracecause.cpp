// tracecause: failure attribution for multi-agent conversation logs.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "tracecause/error.hpp"
#include "tracecause/eval_harness.hpp"
#include "tracecause/manifest.hpp"

namespace fs = std::filesystem;
using namespace tracecause;

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_interrupt(int) { g_cancel.store(true); }

struct Overrides {
  std::string config_id;
  std::string mode;
  std::string modules;
  int runs = 0;
  int workers = 0;
  bool without_ground_truth = false;
  bool fresh = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config-id", o.config_id, "Override the manifest config_id");
  cmd->add_option("--mode", o.mode, "Gateway mode: live, record or replay")->check(CLI::IsMember({"live", "record", "replay"}));
  cmd->add_option("--modules", o.modules, "Comma-separated modules, e.g. M1,M2,M3 (empty for all-at-once)");
  cmd->add_option("--runs", o.runs, "Independent runs per case")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", o.workers, "Concurrent cases")->check(CLI::PositiveNumber);
  cmd->add_flag("--without-ground-truth", o.without_ground_truth, "Drop the ground-truth line from every prompt");
}

RunManifest manifest_with(const std::string& path, const Overrides& o) {
  RunManifest m = load_manifest(path);
  if (!o.config_id.empty()) m.config_id = o.config_id;
  if (!o.mode.empty()) m.pipeline.mode = gateway_mode_from_string(o.mode);
  if (o.runs > 0) m.pipeline.n_runs = o.runs;
  if (o.workers > 0) m.workers = o.workers;
  if (o.without_ground_truth) m.pipeline.with_ground_truth = false;
  if (!o.modules.empty()) {
    m.pipeline.modules.clear();
    if (o.modules != "none") {
      for (const auto& part : CLI::detail::split(o.modules, ',')) {
        if (!part.empty()) m.pipeline.modules.insert(module_from_string(part));
      }
    }
  }
  m.pipeline.validate();
  return m;
}

struct Runtime {
  std::shared_ptr<LlmGateway> gateway;
  std::unique_ptr<Embedder> embedder;
  KnowledgeBase kb;
  PipelineServices services;
};

std::unique_ptr<Runtime> make_runtime(const RunManifest& m, bool fresh) {
  auto rt = std::make_unique<Runtime>();
  std::shared_ptr<Transcript> transcript;
  if (m.pipeline.mode != GatewayMode::live) {
    if (fresh && m.pipeline.mode == GatewayMode::record && fs::exists(m.transcript)) fs::remove(m.transcript);
    if (!m.transcript.parent_path().empty()) fs::create_directories(m.transcript.parent_path());
    transcript = std::make_shared<Transcript>(m.transcript);
    if (transcript->skipped_lines() > 0)
      std::cerr << "warning: skipped " << transcript->skipped_lines() << " malformed transcript lines\n";
  }
  std::shared_ptr<ChatBackend> backend;
  if (m.pipeline.mode != GatewayMode::replay) backend = std::make_shared<HttpChatBackend>(m.provider);
  rt->gateway = std::make_shared<LlmGateway>(m.pipeline.mode, transcript, backend, RetryPolicy{}, m.max_in_flight);
  if (m.pipeline.has(Module::m1) && m.pipeline.retrieval_k > 0) {
    rt->kb = KnowledgeBase::load(m.kb_dir);
    rt->embedder = make_embedder(rt->kb.embedder_description());
  }
  rt->services.gateway = rt->gateway.get();
  rt->services.kb = &rt->kb;
  rt->services.embedder = rt->embedder.get();
  rt->services.cache_dir = m.cache_dir;
  rt->services.fresh = fresh;
  return rt;
}

RunOutput execute(const RunManifest& m, const std::string& config_id, const PipelineConfig& config,
                  const std::vector<FailureCase>& cases, bool fresh) {
  RunManifest local = m;
  local.pipeline = config;
  auto rt = make_runtime(local, fresh);
  RunOutput out = run_config(config, config_id, cases, rt->services, {m.workers, &g_cancel});
  write_run_outputs(m.output_dir / config_id, out, config_id);
  std::cerr << config_id << ": " << out.predictions.size() << " predictions, " << out.failed << " failed, "
            << out.phases_from_cache << " phases from cache, " << rt->gateway->network_calls() << " network calls\n";
  for (const auto& p : out.predictions) {
    if (p.error) std::cerr << "  " << p.case_id << " run " << p.run_index << ": " << *p.error << "\n";
  }
  return out;
}

std::vector<LedgerRecord> read_ledgers(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<LedgerRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    out.push_back({j.at("case_id").get<std::string>(), j.at("run_index").get<int>(), CostLedger::from_json(j.at("ledger"))});
  }
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure attribution for multi-agent conversation logs"};
  app.require_subcommand(1);
  std::string manifest_path = "tracecause.json";
  app.add_option("-c,--config", manifest_path, "Run manifest (JSON)");

  // kb build
  auto* kb = app.add_subcommand("kb", "Knowledge-base commands");
  kb->require_subcommand(1);
  auto* kb_build = kb->add_subcommand("build", "Build the exemplar knowledge base");
  std::string gaia, assistantbench, selection, kb_out;
  bool force = false;
  kb_build->add_option("--gaia", gaia, "GAIA metadata file");
  kb_build->add_option("--assistantbench", assistantbench, "AssistantBench task file");
  kb_build->add_option("--selection", selection, "AssistantBench ids to include, one per line");
  kb_build->add_option("--out", kb_out, "Knowledge-base directory");
  kb_build->add_flag("--force", force, "Overwrite an existing knowledge base");

  Overrides run_o, ablate_o, eval_o, costs_o;
  auto* run = app.add_subcommand("run", "Run the configured pipeline over the dataset");
  add_overrides(run, run_o);
  run->add_flag("--fresh", run_o.fresh, "Ignore cached phases and re-record the transcript");

  auto* ablate = app.add_subcommand("ablate", "Run the four module ablations and tabulate them");
  add_overrides(ablate, ablate_o);
  ablate->add_flag("--fresh", ablate_o.fresh, "Ignore cached phases and re-record the transcript");

  auto* eval = app.add_subcommand("eval", "Score stored predictions");
  add_overrides(eval, eval_o);
  std::string predictions_path;
  eval->add_option("--predictions", predictions_path, "Predictions JSONL (default: <output_dir>/<config_id>)");

  auto* costs = app.add_subcommand("costs", "Report token costs of stored runs");
  add_overrides(costs, costs_o);

  auto* cache = app.add_subcommand("cache", "Cache management");
  cache->require_subcommand(1);
  auto* cache_clear = cache->add_subcommand("clear", "Delete cached phase artifacts");
  std::string clear_id;
  cache_clear->add_option("--config-id", clear_id, "Only this configuration");

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);

  try {
    if (*kb_build) {
      RunManifest m;
      if (fs::exists(manifest_path)) m = load_manifest(manifest_path);
      KbSources sources = m.kb_sources;
      if (!gaia.empty()) sources.gaia = gaia;
      if (!assistantbench.empty()) sources.assistantbench = assistantbench;
      if (!selection.empty()) sources.selection = selection;
      const fs::path out = kb_out.empty() ? m.kb_dir : fs::path(kb_out);
      for (const auto& [name, p] : {std::pair{"--gaia", sources.gaia}, {"--assistantbench", sources.assistantbench},
                                    {"--selection", sources.selection}}) {
        if (p.empty() || !fs::exists(p)) {
          std::cerr << "error: source " << name << " missing or not found: '" << p.string() << "'\n";
          return 2;
        }
      }
      if (fs::exists(out / "entries.json") && !force) {
        std::cerr << "error: knowledge base already exists at " << out << "; pass --force to rebuild\n";
        return 3;
      }
      auto embedder = make_embedder(m.embedder);
      KbBuildReport report;
      KnowledgeBase built = build_kb(sources, *embedder, &report);
      built.save(out);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "gaia=" << report.gaia_count << " assistantbench=" << report.assistantbench_count
                << " total=" << built.size() << "\n";
      return 0;
    }

    if (*cache_clear) {
      RunManifest m = load_manifest(manifest_path);
      const fs::path target = clear_id.empty() ? m.cache_dir : m.cache_dir / clear_id;
      const auto removed = fs::exists(target) ? fs::remove_all(target) : 0;
      std::cout << "removed " << removed << " cache entries under " << target.string() << "\n";
      return 0;
    }

    if (*run) {
      RunManifest m = manifest_with(manifest_path, run_o);
      check_inputs(m);
      const auto cases = load_manifest_cases(m);
      RunOutput out = execute(m, m.config_id, m.pipeline, cases, run_o.fresh);
      std::cout << summary_table(m.config_id, out);
      return out.cancelled ? 130 : 0;
    }

    if (*ablate) {
      RunManifest m = manifest_with(manifest_path, ablate_o);
      PipelineConfig probe = m.pipeline;
      probe.modules = {Module::m1};
      RunManifest checked = m;
      checked.pipeline = probe;
      check_inputs(checked);
      const auto cases = load_manifest_cases(m);
      std::vector<AblationResult> results;
      for (const auto& row : ablation_rows(m.pipeline, m.config_id)) {
        results.push_back({row, execute(m, row.config_id, row.config, cases, ablate_o.fresh)});
        if (g_cancel.load()) return 130;
      }
      fs::create_directories(m.output_dir);
      write_file(m.output_dir / (m.config_id + "-ablation.json"), to_json(results).dump(2) + "\n");
      const std::string table = ablation_table(results);
      write_file(m.output_dir / (m.config_id + "-ablation.txt"), table);
      std::cout << table;
      return 0;
    }

    if (*eval) {
      RunManifest m = manifest_with(manifest_path, eval_o);
      const fs::path dir = m.output_dir / m.config_id;
      const fs::path preds = predictions_path.empty() ? dir / "predictions.jsonl" : fs::path(predictions_path);
      if (!fs::exists(preds)) {
        std::cerr << "error: no predictions at " << preds << "\n";
        return 4;
      }
      const auto cases = load_manifest_cases(m);
      const EvalResult r = score(read_predictions(preds), cases, m.pipeline.n_runs);
      fs::create_directories(dir);
      write_file(dir / "eval.json", to_json(r).dump(2) + "\n");
      std::cout << to_json(r).dump(2) << "\n";
      return 0;
    }

    if (*costs) {
      RunManifest m = manifest_with(manifest_path, costs_o);
      const fs::path path = m.output_dir / m.config_id / "ledgers.jsonl";
      if (!fs::exists(path)) {
        std::cerr << "error: no ledgers at " << path << "\n";
        return 4;
      }
      const CostReport r = cost_report(read_ledgers(path), load_manifest_cases(m));
      write_file(m.output_dir / m.config_id / "costs.json", to_json(r).dump(2) + "\n");
      std::cout << "Mean tokens per case\n";
      for (const auto& [subset, c] : r.per_subset)
        std::cout << "  " << subset << ": " << c.mean_tokens_per_case << " (" << c.n_cases << " cases)\n";
      std::cout << "total tokens: " << r.total_tokens << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
