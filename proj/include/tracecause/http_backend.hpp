#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "tracecause/llm_gateway.hpp"

namespace tracecause {

/// Where request and response fields live for one chat-completion provider. The defaults
/// follow the OpenAI-compatible `/chat/completions` shape, which DeepSeek and most hosted
/// open-weight providers accept.
struct ProviderAdapter {
  std::string model_field = "model";
  std::string messages_field = "messages";
  std::string temperature_field = "temperature";
  std::string max_tokens_field = "max_tokens";
  std::string content_pointer = "/choices/0/message/content";
  std::string prompt_tokens_pointer = "/usage/prompt_tokens";
  std::string completion_tokens_pointer = "/usage/completion_tokens";
};

struct ProviderConfig {
  std::string endpoint;                      // full URL, e.g. https://api.deepseek.com/chat/completions
  std::string api_key_env = "TRACECAUSE_API_KEY";
  std::chrono::seconds timeout{600};
  ProviderAdapter adapter{};
};

struct HttpReply {
  int status = 0;
  std::string body;
};

/// POSTs a JSON body. Throws TransientError on transport failure; the caller classifies status.
HttpReply http_post_json(const std::string& url, const std::string& body,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         std::chrono::seconds timeout);

/// Reads the credential named by `env_var`; throws ConfigError when unset.
std::string require_env(const std::string& env_var);

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(ProviderConfig config);
  ChatResponse send(const ChatRequest& request) override;

  json build_body(const ChatRequest& request) const;
  ChatResponse parse_reply(const std::string& body) const;

 private:
  ProviderConfig config_;
  std::string api_key_;
};

}  // namespace tracecause
