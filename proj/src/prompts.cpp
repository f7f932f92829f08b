#include "tracecause/prompts.hpp"

#include <cctype>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause::prompts {

namespace detail {
// Generated from prompts/*.txt at configure time.
const std::map<std::string, std::string_view, std::less<>>& asset_table();
}  // namespace detail

std::string_view asset(std::string_view name) {
  const auto& table = detail::asset_table();
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown prompt asset '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> asset_names() {
  std::vector<std::string> names;
  for (const auto& [name, body] : detail::asset_table()) names.push_back(name);
  return names;
}

namespace {

bool is_ident(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

// Length of a `{ident}` token starting at s[pos], or 0.
std::size_t token_length(std::string_view s, std::size_t pos) {
  if (s[pos] != '{') return 0;
  std::size_t end = pos + 1;
  while (end < s.size() && is_ident(s[end])) ++end;
  if (end == pos + 1 || end >= s.size() || s[end] != '}') return 0;
  return end - pos + 1;
}

}  // namespace

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (std::size_t len = token_length(tmpl, i)) {
      std::string name(tmpl.substr(i + 1, len - 2));
      bool known = false;
      for (const auto& n : out) known = known || n == name;
      if (!known) out.push_back(std::move(name));
      i += len - 1;
    }
  }
  return out;
}

std::string render(std::string_view tmpl, const Vars& vars, bool with_ground_truth) {
  std::string out;
  out.reserve(tmpl.size() * 2);
  const auto lines = text::split_lines(tmpl);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string& line = lines[li];
    if (!with_ground_truth && line.find("{ground_truth}") != std::string::npos) continue;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (std::size_t len = token_length(line, i)) {
        const std::string_view name = std::string_view(line).substr(i + 1, len - 2);
        auto it = vars.find(name);
        if (it == vars.end()) throw ConfigError("prompt placeholder {" + std::string(name) + "} has no value");
        out += it->second;
        i += len - 1;
      } else {
        out.push_back(line[i]);
      }
    }
    if (li + 1 < lines.size()) out.push_back('\n');
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace tracecause::prompts
