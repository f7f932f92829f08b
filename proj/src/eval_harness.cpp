#include "tracecause/eval_harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

namespace fs = std::filesystem;

EvalResult score(const std::vector<PredictionRecord>& predictions, const std::vector<FailureCase>& cases, int n_runs) {
  if (n_runs < 1) throw ConfigError("n_runs must be at least 1");
  std::map<std::pair<std::string, int>, const PredictionRecord*> by_key;
  for (const auto& p : predictions) {
    if (p.run_index < 0 || p.run_index >= n_runs)
      throw IntegrityError("prediction for '" + p.case_id + "' has run index " + std::to_string(p.run_index));
    if (!by_key.emplace(std::pair{p.case_id, p.run_index}, &p).second)
      throw IntegrityError("duplicate prediction for '" + p.case_id + "' run " + std::to_string(p.run_index));
  }
  std::vector<const FailureCase*> sorted;
  for (const auto& c : cases) {
    if (!c.annotation) throw IntegrityError("case '" + c.case_id + "' has no annotation");
    sorted.push_back(&c);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->case_id < b->case_id; });

  EvalResult r;
  r.n_cases = static_cast<int>(sorted.size());
  r.n_runs = n_runs;
  if (sorted.empty()) throw IntegrityError("no cases to score");
  r.per_run_agent_accuracy.assign(n_runs, 0.0);
  r.per_run_step_accuracy.assign(n_runs, 0.0);
  std::vector<int> agent_hits(n_runs, 0), step_hits(n_runs, 0);
  for (const auto* c : sorted) {
    for (int run = 0; run < n_runs; ++run) {
      auto it = by_key.find({c->case_id, run});
      if (it == by_key.end())
        throw IntegrityError("missing prediction for '" + c->case_id + "' run " + std::to_string(run));
      const PredictionRecord& p = *it->second;
      CaseScore s{c->case_id, run, false, false};
      s.agent_correct = p.agent_name && text::name_key(*p.agent_name) == text::name_key(c->annotation->mistake_agent);
      s.step_correct = p.step_id && *p.step_id == c->annotation->mistake_step;
      agent_hits[run] += s.agent_correct;
      step_hits[run] += s.step_correct;
      r.per_case.push_back(s);
    }
  }
  if (by_key.size() != r.per_case.size()) throw IntegrityError("predictions reference cases outside the dataset");
  double agent_sum = 0.0, step_sum = 0.0;
  for (int run = 0; run < n_runs; ++run) {
    r.per_run_agent_accuracy[run] = static_cast<double>(agent_hits[run]) / r.n_cases;
    r.per_run_step_accuracy[run] = static_cast<double>(step_hits[run]) / r.n_cases;
    agent_sum += r.per_run_agent_accuracy[run];
    step_sum += r.per_run_step_accuracy[run];
  }
  r.agent_accuracy = agent_sum / n_runs;
  r.step_accuracy = step_sum / n_runs;
  return r;
}

json to_json(const EvalResult& r) {
  json per_case = json::array();
  for (const auto& s : r.per_case) {
    per_case.push_back(
        {{"case_id", s.case_id}, {"run", s.run}, {"agent_correct", s.agent_correct}, {"step_correct", s.step_correct}});
  }
  return {{"agent_accuracy", r.agent_accuracy},
          {"step_accuracy", r.step_accuracy},
          {"n_cases", r.n_cases},
          {"n_runs", r.n_runs},
          {"per_run_agent_accuracy", r.per_run_agent_accuracy},
          {"per_run_step_accuracy", r.per_run_step_accuracy},
          {"per_case", per_case}};
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

Attribution baseline_random(const FailureCase& c, std::uint64_t seed) {
  if (c.steps.empty()) throw IntegrityError("case '" + c.case_id + "' has no steps");
  std::mt19937_64 rng(seed);
  const auto agents = agents_of(c);
  Attribution a;
  a.agent_name = agents[uniform_index(rng, agents.size())];
  a.step_id = static_cast<int>(uniform_index(rng, c.steps.size()));
  a.reason = "random baseline";
  return a;
}

AttributionOutcome baseline_all_at_once(PhaseContext& ctx, const FailureCase& c) {
  return ask_attribution(ctx, c, prompts::render(prompts::asset("all_at_once"), case_vars(c), use_ground_truth(ctx, c)),
                         "all_at_once");
}

CostReport cost_report(const std::vector<LedgerRecord>& ledgers, const std::vector<FailureCase>& cases) {
  CostReport r;
  std::map<std::string, std::pair<long long, int>> case_totals;  // tokens, runs
  for (const auto& l : ledgers) {
    auto& [tokens, runs] = case_totals[l.case_id];
    tokens += l.ledger.total();
    ++runs;
    r.total_tokens += l.ledger.total();
    for (const auto& [tag, cost] : l.ledger.by_tag()) r.per_tag_total[tag] += cost.total();
  }
  std::map<std::string, std::pair<double, int>> subset_sums;
  for (const auto& c : cases) {
    auto it = case_totals.find(c.case_id);
    if (it == case_totals.end()) continue;
    const double mean = static_cast<double>(it->second.first) / it->second.second;
    r.per_case[c.case_id] = mean;
    auto& [sum, n] = subset_sums[std::string(to_string(c.subset))];
    sum += mean;
    ++n;
  }
  for (const auto& [subset, sn] : subset_sums) r.per_subset[subset] = {sn.second, sn.first / sn.second};
  return r;
}

json to_json(const CostReport& r) {
  json subsets = json::object();
  for (const auto& [name, s] : r.per_subset)
    subsets[name] = {{"n_cases", s.n_cases}, {"mean_tokens_per_case", s.mean_tokens_per_case}};
  return {{"per_subset", subsets}, {"per_case", r.per_case}, {"per_tag_total", r.per_tag_total}, {"total_tokens", r.total_tokens}};
}

RunOutput run_config(const PipelineConfig& config, const std::string& config_id, const std::vector<FailureCase>& cases,
                     PipelineServices& services, const RunOptions& options) {
  config.validate();
  std::vector<const FailureCase*> sorted;
  for (const auto& c : cases) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->case_id < b->case_id; });

  struct Job {
    const FailureCase* c;
    int run;
  };
  std::vector<Job> jobs;
  for (const auto* c : sorted) {
    for (int run = 0; run < config.n_runs; ++run) jobs.push_back({c, run});
  }
  std::vector<std::optional<CaseRunResult>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr harness_error;

  auto worker = [&]() {
    for (;;) {
      if (options.cancel && options.cancel->load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = run_case(config, config_id, *jobs[i].c, jobs[i].run, services);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!harness_error) harness_error = std::current_exception();
        return;
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(options.workers, static_cast<int>(jobs.size())));
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (harness_error) std::rethrow_exception(harness_error);

  RunOutput out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!results[i]) {
      out.cancelled = true;
      continue;
    }
    CaseRunResult& r = *results[i];
    out.failed += r.prediction.error ? 1 : 0;
    out.phases_from_cache += r.phases_from_cache;
    out.predictions.push_back(r.prediction);
    out.ledgers.push_back({r.prediction.case_id, r.prediction.run_index, std::move(r.ledger)});
  }
  out.costs = cost_report(out.ledgers, cases);
  const bool annotated = std::all_of(cases.begin(), cases.end(), [](const FailureCase& c) { return c.annotation.has_value(); });
  if (annotated && !out.cancelled && !cases.empty()) out.eval = score(out.predictions, cases, config.n_runs);
  return out;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
  }
  fs::rename(tmp, path);
}

}  // namespace

void write_run_outputs(const fs::path& dir, const RunOutput& output, const std::string& config_id) {
  fs::create_directories(dir);
  std::string preds, ledgers;
  for (const auto& p : output.predictions) preds += to_json(p).dump() + "\n";
  for (const auto& l : output.ledgers)
    ledgers += json{{"case_id", l.case_id}, {"run_index", l.run_index}, {"ledger", l.ledger.to_json()}}.dump() + "\n";
  write_text(dir / "predictions.jsonl", preds);
  write_text(dir / "ledgers.jsonl", ledgers);
  if (output.eval) write_text(dir / "eval.json", to_json(*output.eval).dump(2) + "\n");
  write_text(dir / "costs.json", to_json(output.costs).dump(2) + "\n");
  write_text(dir / "summary.txt", summary_table(config_id, output));
}

std::string summary_table(const std::string& config_id, const RunOutput& output) {
  std::string s = "config: " + config_id + "\n";
  if (output.eval) {
    s += "Agent-level Accuracy: " + fixed(100.0 * output.eval->agent_accuracy, 2) + "%\n";
    s += "Step-level Accuracy: " + fixed(100.0 * output.eval->step_accuracy, 2) + "%\n";
    s += "cases: " + std::to_string(output.eval->n_cases) + "  runs: " + std::to_string(output.eval->n_runs) + "\n";
    for (std::size_t r = 0; r < output.eval->per_run_agent_accuracy.size(); ++r) {
      s += "  run " + std::to_string(r) + ": agent " + fixed(100.0 * output.eval->per_run_agent_accuracy[r], 2) +
           "%  step " + fixed(100.0 * output.eval->per_run_step_accuracy[r], 2) + "%\n";
    }
  } else {
    s += "accuracy: not scored (unannotated cases or cancelled run)\n";
  }
  s += "failed predictions: " + std::to_string(output.failed) + "\n";
  s += "Mean tokens per case:\n";
  for (const auto& [subset, cost] : output.costs.per_subset) {
    s += "  " + subset + ": " + fixed(cost.mean_tokens_per_case, 1) + " (" + std::to_string(cost.n_cases) +
         " cases)\n";
  }
  s += "total tokens: " + std::to_string(output.costs.total_tokens) + "\n";
  return s;
}

std::vector<AblationRow> ablation_rows(const PipelineConfig& base, const std::string& prefix) {
  using M = Module;
  const std::vector<std::pair<std::string, std::set<Module>>> rows{
      {"Only M1", {M::m1}},
      {"M1+M2", {M::m1, M::m2}},
      {"M1+M3", {M::m1, M::m3}},
      {"M1+M2+M3", {M::m1, M::m2, M::m3}},
  };
  std::vector<AblationRow> out;
  for (const auto& [label, modules] : rows) {
    PipelineConfig c = base;
    c.modules = modules;
    out.push_back({label, prefix + "-" + c.variant(), c});
  }
  return out;
}

std::string ablation_table(const std::vector<AblationResult>& results) {
  std::string s = "Configuration | Agent-level Accuracy | Step-level Accuracy | Mean tokens per case\n";
  for (const auto& r : results) {
    double tokens = 0.0;
    int n = 0;
    for (const auto& [_, v] : r.output.costs.per_case) {
      tokens += v;
      ++n;
    }
    const std::string agent = r.output.eval ? fixed(100.0 * r.output.eval->agent_accuracy, 2) : "n/a";
    const std::string step = r.output.eval ? fixed(100.0 * r.output.eval->step_accuracy, 2) : "n/a";
    s += r.row.label + " | " + agent + " | " + step + " | " + fixed(n ? tokens / n : 0.0, 1) + "\n";
  }
  return s;
}

json to_json(const std::vector<AblationResult>& results) {
  json rows = json::array();
  for (const auto& r : results) {
    std::set<std::string> tags;
    for (const auto& l : r.output.ledgers) {
      for (const auto& [tag, _] : l.ledger.by_tag()) tags.insert(tag);
    }
    rows.push_back({{"label", r.row.label},
                    {"config_id", r.row.config_id},
                    {"config", to_json(r.row.config)},
                    {"eval", r.output.eval ? to_json(*r.output.eval) : json(nullptr)},
                    {"costs", to_json(r.output.costs)},
                    {"tags", tags}});
  }
  return rows;
}

}  // namespace tracecause
