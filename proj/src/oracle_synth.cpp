#include "tracecause/oracle_synth.hpp"

#include <array>
#include <cctype>
#include <optional>

#include "tracecause/error.hpp"
#include "tracecause/graph_builder.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

namespace {

enum Section { goal, precondition, key_evidence, acceptance, section_count };
constexpr std::array<const char*, section_count> kSectionNames{"Goal", "Precondition", "Key Evidence",
                                                               "Acceptance Criteria"};

struct OracleDraft {
  std::string name;
  std::size_t line = 0;
  std::array<std::optional<std::vector<std::string>>, section_count> sections;
  bool has_oracle_label = false;
};

std::string strip_bullet(std::string_view line) {
  std::string s = text::strip_markdown(line);
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '-' || s[i] == '*' || s[i] == ' ' || s[i] == '\t')) ++i;
  if (s.compare(i, 3, "\xE2\x80\xA2") == 0) i += 3;
  // numbered items: "1." / "2)"
  std::size_t j = i;
  while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
  if (j > i && j < s.size() && (s[j] == '.' || s[j] == ')') && j + 1 < s.size() && s[j + 1] == ' ') i = j + 1;
  return text::trim(std::string_view(s).substr(i));
}

std::optional<std::pair<Section, std::string>> section_label(const std::string& b) {
  static constexpr std::array<std::pair<Section, const char*>, 7> kLabels{{
      {goal, "Goal"},
      {precondition, "Preconditions"},
      {precondition, "Precondition"},
      {key_evidence, "Key Evidence"},
      {acceptance, "Acceptance Criteria"},
      {acceptance, "Acceptance Criterion"},
      {acceptance, "Acceptance"},
  }};
  for (const auto& [sec, label] : kLabels) {
    if (auto v = text::label_value(b, label)) return std::pair{sec, *v};
  }
  return std::nullopt;
}

bool is_none_item(std::string_view s) {
  const std::string k = text::to_lower(text::trim(s));
  return k == "none" || k == "none." || k == "n/a" || k == "[]";
}

}  // namespace

std::vector<VirtualOracle> parse_oracles(std::string_view response, const std::vector<SubtaskNode>& subtasks) {
  std::vector<OracleDraft> blocks;
  std::vector<std::string>* cont = nullptr;
  const auto lines = text::split_lines(response);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    const std::string b = strip_bullet(lines[i]);
    if (b.empty()) continue;
    if (auto v = text::label_value(b, "Subtask Name")) {
      blocks.push_back({*v, ln, {}});
      cont = nullptr;
      continue;
    }
    if (blocks.empty()) continue;  // preamble
    OracleDraft& d = blocks.back();
    if (auto v = text::label_value(b, "Oracle")) {
      if (d.has_oracle_label) throw GrammarError("duplicate_section", "-Oracle: repeated", ln, d.name);
      d.has_oracle_label = true;
      cont = nullptr;
      continue;
    }
    if (auto s = section_label(b)) {
      auto& slot = d.sections[s->first];
      if (slot)
        throw GrammarError("duplicate_section", std::string(kSectionNames[s->first]) + " repeated", ln, d.name);
      slot.emplace();
      if (!s->second.empty()) slot->push_back(s->second);
      cont = &*slot;
      continue;
    }
    if (cont) {
      cont->push_back(b);
      continue;
    }
    throw GrammarError("unexpected_line", "unrecognized line '" + text::trim(lines[i]) + "'", ln, d.name);
  }

  if (blocks.empty()) throw GrammarError("no_blocks", "response contains no '-Subtask Name:' block");

  std::vector<VirtualOracle> out;
  std::vector<std::size_t> order;
  for (auto& d : blocks) {
    auto idx = match_subtask(d.name, subtasks);
    if (!idx) throw GrammarError("unknown_name", "'" + d.name + "' is not a plan subtask name", d.line, d.name);
    const std::string& name = subtasks[*idx].name;
    if (!d.has_oracle_label) throw GrammarError("missing_section", "block lacks the -Oracle: label", d.line, name);
    for (int s = 0; s < section_count; ++s) {
      if (!d.sections[s])
        throw GrammarError("missing_section", std::string("block lacks ") + kSectionNames[s], d.line, name);
    }
    auto items = [&](Section s) {
      std::vector<std::string> v;
      for (auto& item : *d.sections[s]) {
        if (!is_none_item(item)) v.push_back(text::collapse_ws(item));
      }
      return v;
    };
    VirtualOracle o;
    o.subtask_name = name;
    o.goal = text::join(items(goal), " ");
    o.preconditions = items(precondition);
    o.key_evidence = items(key_evidence);
    o.acceptance_criteria = items(acceptance);
    if (o.goal.empty()) throw GrammarError("empty_section", "Goal is empty", d.line, name);
    if (o.acceptance_criteria.empty())
      throw GrammarError("empty_section", "Acceptance Criteria is empty", d.line, name);
    order.push_back(*idx);
    out.push_back(std::move(o));
  }
  if (out.size() != subtasks.size()) {
    throw GrammarError("block_count", "expected " + std::to_string(subtasks.size()) + " oracle blocks, found " +
                                          std::to_string(out.size()));
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k] != k) {
      throw GrammarError("order", "block " + std::to_string(k + 1) + " names '" + out[k].subtask_name +
                                      "' but the plan has '" + subtasks[k].name + "' there",
                         blocks[k].line, out[k].subtask_name);
    }
  }
  return out;
}

std::string render_oracles(const std::vector<VirtualOracle>& oracles) {
  auto list = [](const char* label, const std::vector<std::string>& items) {
    std::string s = std::string(" ") + label + ":";
    if (items.empty()) return s + " none";
    for (const auto& item : items) s += "\n - " + item;
    return s;
  };
  std::vector<std::string> blocks;
  for (const auto& o : oracles) {
    blocks.push_back("-Subtask Name: " + o.subtask_name + "\n-Oracle:\n Goal: " + o.goal + "\n" +
                     list("Precondition", o.preconditions) + "\n" + list("Key Evidence", o.key_evidence) + "\n" +
                     list("Acceptance Criteria", o.acceptance_criteria));
  }
  return text::join(blocks, "\n\n");
}

std::vector<VirtualOracle> synthesize_oracles(PhaseContext& ctx, const FailureCase& c,
                                              const std::vector<SubtaskNode>& subtasks, const std::string& rag_text) {
  prompts::Vars vars = case_vars(c);
  vars["rag_text"] = rag_text;
  vars["subtasks"] = render_decomposition(subtasks);
  const std::string prompt = prompts::render(prompts::asset("oracle"), vars, use_ground_truth(ctx, c));
  return ask_with_repair(ctx, prompt, "oracle",
                         [&](const std::string& response) { return parse_oracles(response, subtasks); });
}

}  // namespace tracecause
