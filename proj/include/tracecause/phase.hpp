#pragma once

#include <string>
#include <utility>

#include "tracecause/error.hpp"
#include "tracecause/llm_gateway.hpp"
#include "tracecause/prompts.hpp"
#include "tracecause/trajectory.hpp"

namespace tracecause {

/// Everything one pipeline phase needs to talk to the model on behalf of one (case, run).
struct PhaseContext {
  LlmGateway& gateway;
  CostLedger& ledger;
  std::string model_id;
  double temperature = 0.0;
  int max_output = 8192;
  int run_index = 0;
  bool with_ground_truth = true;

  ChatResponse ask(std::string prompt, std::string tag) {
    ChatRequest req{std::move(prompt), model_id, temperature, max_output, std::move(tag), run_index};
    return gateway.complete(req, ledger);
  }
};

/// Placeholders shared by every template: question, ground truth, full history, step count.
prompts::Vars case_vars(const FailureCase& c);

/// Ground truth goes into prompts only when the setting allows it and the case carries one.
inline bool use_ground_truth(const PhaseContext& ctx, const FailureCase& c) {
  return ctx.with_ground_truth && c.ground_truth_answer.has_value();
}

/// Issues `prompt`, parses with `parse`, and on a GrammarError re-asks once with the error list
/// appended (tag + "_repair"). The second failure propagates.
template <typename Parse>
auto ask_with_repair(PhaseContext& ctx, const std::string& prompt, const std::string& tag, Parse&& parse) {
  ChatResponse first = ctx.ask(prompt, tag);
  try {
    return parse(first.text);
  } catch (const GrammarError& e) {
    const std::string repair = prompt + "\n\n" +
                               prompts::render(prompts::asset("format_repair"),
                                               {{"errors", e.what()}, {"previous_response", first.text}});
    ChatResponse second = ctx.ask(repair, tag + "_repair");
    return parse(second.text);
  }
}

}  // namespace tracecause
