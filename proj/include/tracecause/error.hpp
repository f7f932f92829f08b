#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace tracecause {

/// Base of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input text is not valid JSON. `offset()` is the byte position reported by the parser.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A required field is missing or has the wrong type.
class SchemaError : public Error {
 public:
  explicit SchemaError(std::string field, const std::string& detail = {})
      : Error("schema error: field '" + field + "'" + (detail.empty() ? "" : ": " + detail)),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Cross-field invariant violated (step contiguity, annotation references).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A model response does not conform to the expected output grammar.
/// `rule()` names the violated grammar rule, `line()` is 1-based (0 when not line-specific),
/// `block()` names the offending block when one applies.
class GrammarError : public Error {
 public:
  GrammarError(std::string rule, std::string message, std::size_t line = 0, std::string block = {})
      : Error(compose(rule, message, line, block)),
        rule_(std::move(rule)),
        line_(line),
        block_(std::move(block)) {}

  const std::string& rule() const noexcept { return rule_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& block() const noexcept { return block_; }

 private:
  static std::string compose(const std::string& rule, const std::string& message, std::size_t line,
                             const std::string& block) {
    std::string out = "[" + rule + "] " + message;
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    if (!block.empty()) out += " in block '" + block + "'";
    return out;
  }

  std::string rule_;
  std::size_t line_;
  std::string block_;
};

/// Decomposition still violates the partition rules after all reflection rounds.
class DecompositionError : public Error {
 public:
  DecompositionError(const std::string& what, std::string last_report)
      : Error(what), last_report_(std::move(last_report)) {}
  const std::string& last_report() const noexcept { return last_report_; }

 private:
  std::string last_report_;
};

/// Remote chat/embedding endpoint failed permanently.
class GatewayError : public Error {
 public:
  using Error::Error;
};

/// Retryable transport or server-side failure raised by a backend.
class TransientError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Replay mode was asked for a request that the transcript does not contain.
class ReplayMissError : public Error {
 public:
  ReplayMissError(std::string tag, const std::string& fingerprint)
      : Error("replay miss for tag '" + tag + "' (fingerprint " + fingerprint + ")"),
        tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

/// Invalid configuration or harness-level misuse.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tracecause
