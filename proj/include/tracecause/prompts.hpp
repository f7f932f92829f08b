#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tracecause::prompts {

/// Version of the prompt asset set compiled into the library (the `.vN.txt` suffix).
inline constexpr int kVersion = 1;

using Vars = std::map<std::string, std::string, std::less<>>;

/// Template text by asset name ("decompose", "otar", ...). Throws ConfigError on unknown names.
std::string_view asset(std::string_view name);
std::vector<std::string> asset_names();

/// Named `{placeholder}` occurrences in first-appearance order.
std::vector<std::string> placeholders(std::string_view tmpl);

/// Substitutes every `{name}` from `vars`. When `with_ground_truth` is false every line holding
/// `{ground_truth}` is dropped. Unknown placeholders are a ConfigError.
std::string render(std::string_view tmpl, const Vars& vars, bool with_ground_truth = true);

}  // namespace tracecause::prompts
