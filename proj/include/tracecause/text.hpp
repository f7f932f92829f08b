#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the response parsers.
namespace tracecause::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
/// Trims and collapses internal whitespace runs to one space.
std::string collapse_ws(std::string_view s);
/// Identity used when matching agent names: collapsed whitespace, lowercase.
std::string name_key(std::string_view s);

/// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Removes markdown decoration models tend to wrap labels in ("**", "__", leading "#").
std::string strip_markdown(std::string_view line);

/// If `line` (after markdown stripping) starts with `label` followed by ':', returns the trimmed
/// remainder. Matching is case-insensitive and treats '_' and ' ' in the label as equivalent.
std::optional<std::string> label_value(std::string_view line, std::string_view label);

/// Removes one level of surrounding double or single quotes.
std::string unquote(std::string_view s);

/// Strict decimal integer (optional sign, surrounding whitespace allowed).
std::optional<long long> parse_int(std::string_view s);
/// First run of decimal digits in `s`, if any.
std::optional<long long> first_int(std::string_view s);

}  // namespace tracecause::text
