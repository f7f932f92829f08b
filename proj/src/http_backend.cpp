#include "tracecause/http_backend.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>

#include "tracecause/error.hpp"

namespace tracecause {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string require_env(const std::string& env_var) {
  const char* value = std::getenv(env_var.c_str());
  if (value == nullptr || *value == '\0') throw ConfigError("environment variable " + env_var + " is not set");
  return value;
}

HttpReply http_post_json(const std::string& url, const std::string& body,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         std::chrono::seconds timeout) {
  const SplitUrl parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(parts.path, h, body, "application/json");
  if (!res) throw TransientError("transport failure posting to " + url + ": " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

HttpChatBackend::HttpChatBackend(ProviderConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError("chat endpoint URL is not configured");
  api_key_ = require_env(config_.api_key_env);
}

json HttpChatBackend::build_body(const ChatRequest& request) const {
  const auto& a = config_.adapter;
  json body;
  body[a.model_field] = request.model_id;
  body[a.messages_field] = json::array({{{"role", "user"}, {"content", request.prompt}}});
  body[a.temperature_field] = request.temperature;
  if (request.max_output > 0) body[a.max_tokens_field] = request.max_output;
  return body;
}

ChatResponse HttpChatBackend::parse_reply(const std::string& body) const {
  const auto& a = config_.adapter;
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw GatewayError(std::string("provider returned malformed JSON: ") + e.what());
  }
  const json::json_pointer content_ptr(a.content_pointer);
  if (!doc.contains(content_ptr) || !doc[content_ptr].is_string())
    throw GatewayError("provider reply has no completion text at " + a.content_pointer);
  ChatResponse r;
  r.text = doc[content_ptr].get<std::string>();
  const json::json_pointer pt(a.prompt_tokens_pointer);
  const json::json_pointer ct(a.completion_tokens_pointer);
  if (doc.contains(pt) && doc[pt].is_number_integer()) r.prompt_tokens = doc[pt].get<long long>();
  if (doc.contains(ct) && doc[ct].is_number_integer()) r.completion_tokens = doc[ct].get<long long>();
  return r;
}

ChatResponse HttpChatBackend::send(const ChatRequest& request) {
  const HttpReply reply = http_post_json(config_.endpoint, build_body(request).dump(),
                                         {{"Authorization", "Bearer " + api_key_}}, config_.timeout);
  if (reply.status >= 500 || reply.status == 429) throw TransientError("provider returned HTTP " + std::to_string(reply.status));
  if (reply.status != 200) {
    throw GatewayError("provider returned HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 500));
  }
  return parse_reply(reply.body);
}

}  // namespace tracecause
