#include "tracecause/llm_gateway.hpp"

#include <openssl/evp.h>

#include <sstream>
#include <thread>

#include "tracecause/error.hpp"
#include "tracecause/text.hpp"

namespace tracecause {

std::string_view to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::live: return "live";
    case GatewayMode::record: return "record";
    case GatewayMode::replay: return "replay";
  }
  return "live";
}

GatewayMode gateway_mode_from_string(std::string_view name) {
  const std::string key = text::to_lower(text::trim(name));
  if (key == "live") return GatewayMode::live;
  if (key == "record") return GatewayMode::record;
  if (key == "replay") return GatewayMode::replay;
  throw ConfigError("unknown gateway mode '" + std::string(name) + "'");
}

namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

json response_to_json(const ChatResponse& r) {
  return {{"text", r.text}, {"prompt_tokens", r.prompt_tokens}, {"completion_tokens", r.completion_tokens}};
}

ChatResponse response_from_json(const json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.prompt_tokens = j.value("prompt_tokens", 0LL);
  r.completion_tokens = j.value("completion_tokens", 0LL);
  return r;
}

}  // namespace

std::string fingerprint(const ChatRequest& request) {
  json key = {{"prompt", request.prompt},
              {"model_id", request.model_id},
              {"temperature", request.temperature},
              {"tag", request.tag}};
  if (request.run_index != 0) key["run_index"] = request.run_index;
  return sha256_hex(key.dump());
}

void CostLedger::add(const std::string& tag, const ChatResponse& response) {
  TagCost& t = tags_[tag];
  t.prompt_tokens += response.prompt_tokens;
  t.completion_tokens += response.completion_tokens;
  t.calls += 1;
}

void CostLedger::merge(const CostLedger& other) {
  for (const auto& [tag, cost] : other.tags_) {
    TagCost& t = tags_[tag];
    t.prompt_tokens += cost.prompt_tokens;
    t.completion_tokens += cost.completion_tokens;
    t.calls += cost.calls;
  }
}

long long CostLedger::total() const noexcept {
  long long sum = 0;
  for (const auto& [tag, cost] : tags_) sum += cost.total();
  return sum;
}

json CostLedger::to_json() const {
  json out = json::object();
  for (const auto& [tag, cost] : tags_) {
    out[tag] = {{"prompt_tokens", cost.prompt_tokens},
                {"completion_tokens", cost.completion_tokens},
                {"calls", cost.calls}};
  }
  return out;
}

CostLedger CostLedger::from_json(const json& doc) {
  CostLedger ledger;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    TagCost& t = ledger.tags_[it.key()];
    t.prompt_tokens = it->value("prompt_tokens", 0LL);
    t.completion_tokens = it->value("completion_tokens", 0LL);
    t.calls = it->value("calls", 0LL);
  }
  return ledger;
}

CaseCost case_cost(const CostLedger& ledger) {
  CaseCost out;
  for (const auto& [tag, cost] : ledger.by_tag()) {
    out.per_tag[tag] = cost.total();
    out.total += cost.total();
  }
  return out;
}

Transcript::Transcript(const std::filesystem::path& path) : path_(path) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      try {
        json rec = json::parse(line);
        entries_.emplace(rec.at("fingerprint").get<std::string>(), response_from_json(rec.at("response")));
      } catch (const std::exception&) {
        ++skipped_lines_;
      }
    }
  } else if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  out_.open(path, std::ios::app);
  if (!out_) throw Error("cannot open transcript " + path.string() + " for appending");
}

std::optional<ChatResponse> Transcript::find(const std::string& fp) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(fp);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool Transcript::append(const std::string& fp, const ChatRequest& request, const ChatResponse& response) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(fp, response).second) return false;
  if (path_) {
    json rec = {{"fingerprint", fp},
                {"request",
                 {{"tag", request.tag},
                  {"model_id", request.model_id},
                  {"temperature", request.temperature},
                  {"run_index", request.run_index},
                  {"prompt_chars", request.prompt.size()}}},
                {"response", response_to_json(response)}};
    out_ << rec.dump() << '\n';
    out_.flush();
  }
  return true;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return active_ < cap_; });
  ++active_;
  int prev = peak_.load();
  while (active_ > prev && !peak_.compare_exchange_weak(prev, active_)) {
  }
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_one();
}

LlmGateway::LlmGateway(GatewayMode mode, std::shared_ptr<Transcript> transcript, std::shared_ptr<ChatBackend> backend,
                       RetryPolicy retry, int max_in_flight)
    : mode_(mode),
      transcript_(std::move(transcript)),
      backend_(std::move(backend)),
      retry_(retry),
      limiter_(max_in_flight) {
  if (mode_ != GatewayMode::live && !transcript_) throw ConfigError("record/replay mode requires a transcript");
  if (mode_ != GatewayMode::replay && !backend_) throw ConfigError("live/record mode requires a chat backend");
}

ChatResponse LlmGateway::send_with_retry(const ChatRequest& request) {
  auto delay = retry_.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      limiter_.acquire();
      ++network_calls_;
      ChatResponse r;
      try {
        r = backend_->send(request);
      } catch (...) {
        limiter_.release();
        throw;
      }
      limiter_.release();
      return r;
    } catch (const TransientError& e) {
      if (attempt >= retry_.max_attempts) {
        throw GatewayError("request tagged '" + request.tag + "' failed after " + std::to_string(attempt) +
                           " attempts: " + e.what());
      }
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * retry_.multiplier));
    }
  }
}

ChatResponse LlmGateway::complete(const ChatRequest& request, CostLedger& ledger) {
  if (request.prompt.empty()) throw ConfigError("chat request '" + request.tag + "' has an empty prompt");
  if (request.temperature < 0) throw ConfigError("chat request '" + request.tag + "' has negative temperature");

  ChatResponse response;
  switch (mode_) {
    case GatewayMode::replay: {
      const std::string fp = fingerprint(request);
      auto hit = transcript_->find(fp);
      if (!hit) throw ReplayMissError(request.tag, fp);
      response = std::move(*hit);
      break;
    }
    case GatewayMode::record: {
      // Entries recorded by an earlier session are reused; --fresh starts a new transcript.
      const std::string fp = fingerprint(request);
      if (auto hit = transcript_->find(fp)) {
        response = std::move(*hit);
      } else {
        response = send_with_retry(request);
        transcript_->append(fp, request, response);
      }
      break;
    }
    case GatewayMode::live:
      response = send_with_retry(request);
      break;
  }
  if (response.prompt_tokens < 0 || response.completion_tokens < 0) {
    throw GatewayError("negative token counts in response for tag '" + request.tag + "'");
  }
  ledger.add(request.tag, response);
  return response;
}

}  // namespace tracecause
