#include "tracecause/phase.hpp"

namespace tracecause {

prompts::Vars case_vars(const FailureCase& c) {
  prompts::Vars vars;
  vars["question"] = c.question;
  vars["ground_truth"] = c.ground_truth_answer.value_or("");
  vars["history_text"] = serialize_history(c);
  vars["step_count"] = std::to_string(c.step_count());
  return vars;
}

}  // namespace tracecause
