#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "json.hpp"

namespace tracecause {

using json = nlohmann::json;

struct ChatRequest {
  std::string prompt;
  std::string model_id;
  double temperature = 0.0;
  int max_output = 8192;
  std::string tag;     // pipeline phase label
  int run_index = 0;   // independent repetition; part of the fingerprint when non-zero
};

struct ChatResponse {
  std::string text;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;

  long long total_tokens() const noexcept { return prompt_tokens + completion_tokens; }
};

enum class GatewayMode { live, record, replay };

std::string_view to_string(GatewayMode mode);
GatewayMode gateway_mode_from_string(std::string_view name);

/// Stable hex SHA-256 over prompt, model id, temperature, tag (and run index when non-zero).
std::string fingerprint(const ChatRequest& request);

/// Token usage of one case, broken down by request tag.
class CostLedger {
 public:
  struct TagCost {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
    long long calls = 0;
    long long total() const noexcept { return prompt_tokens + completion_tokens; }
  };

  void add(const std::string& tag, const ChatResponse& response);
  void merge(const CostLedger& other);

  long long total() const noexcept;
  const std::map<std::string, TagCost>& by_tag() const noexcept { return tags_; }
  bool has_tag(std::string_view tag) const { return tags_.count(std::string(tag)) != 0; }
  bool empty() const noexcept { return tags_.empty(); }

  json to_json() const;
  static CostLedger from_json(const json& doc);

 private:
  std::map<std::string, TagCost> tags_;
};

struct CaseCost {
  long long total = 0;
  std::map<std::string, long long> per_tag;
};

CaseCost case_cost(const CostLedger& ledger);

/// Append-only store of recorded responses keyed by request fingerprint. When bound to a
/// file, every new entry is written as one JSON line and flushed before `append` returns.
class Transcript {
 public:
  Transcript() = default;
  /// Loads `path` if it exists and appends new entries to it. A truncated final line (from an
  /// interrupted write) is skipped.
  explicit Transcript(const std::filesystem::path& path);

  Transcript(const Transcript&) = delete;
  Transcript& operator=(const Transcript&) = delete;

  std::optional<ChatResponse> find(const std::string& fp) const;
  /// Returns false, leaving the transcript untouched, when `fp` is already present.
  bool append(const std::string& fp, const ChatRequest& request, const ChatResponse& response);
  std::size_t size() const;
  std::size_t skipped_lines() const noexcept { return skipped_lines_; }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, ChatResponse> entries_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  std::size_t skipped_lines_ = 0;
};

/// Provider-side transport. Implementations throw TransientError for retryable failures and
/// GatewayError for permanent ones.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
};

/// Counting gate bounding the number of concurrent remote requests.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int cap) : cap_(cap < 1 ? 1 : cap) {}
  void acquire();
  void release();
  int peak() const noexcept { return peak_.load(); }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int cap_;
  int active_ = 0;
  std::atomic<int> peak_{0};
};

class LlmGateway {
 public:
  LlmGateway(GatewayMode mode, std::shared_ptr<Transcript> transcript, std::shared_ptr<ChatBackend> backend,
             RetryPolicy retry = {}, int max_in_flight = 4);

  /// Runs one request under the gateway mode and charges its usage to `ledger` under the
  /// request tag.
  ChatResponse complete(const ChatRequest& request, CostLedger& ledger);

  GatewayMode mode() const noexcept { return mode_; }
  std::size_t network_calls() const noexcept { return network_calls_.load(); }
  int peak_in_flight() const noexcept { return limiter_.peak(); }

 private:
  ChatResponse send_with_retry(const ChatRequest& request);

  GatewayMode mode_;
  std::shared_ptr<Transcript> transcript_;
  std::shared_ptr<ChatBackend> backend_;
  RetryPolicy retry_;
  InFlightLimiter limiter_;
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace tracecause
