#include "shine/chat_client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace shine {

namespace {

using nlohmann::json;

// Splits "https://host:8080/v1" into origin "https://host:8080" and
// prefix "/v1" (no trailing slash).
void split_url(const std::string& url, std::string* origin,
               std::string* prefix) {
  auto scheme_end = url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) {
    *origin = url;
    prefix->clear();
  } else {
    *origin = url.substr(0, path_start);
    *prefix = url.substr(path_start);
  }
  while (!prefix->empty() && prefix->back() == '/') prefix->pop_back();
}

}  // namespace

HttpChatClient::HttpChatClient(HttpChatOptions opts) : opts_(std::move(opts)) {
  if (opts_.base_url.empty())
    throw Error(Errc::config_error, "chat client: base_url is empty");
  split_url(opts_.base_url, &origin_, &path_prefix_);
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages,
                                     double temperature) {
  const char* key = std::getenv(opts_.api_key_env.c_str());

  json body;
  body["model"] = opts_.model;
  body["temperature"] = temperature;
  body["messages"] = json::array();
  for (const auto& m : messages)
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string payload = body.dump();
  const std::string path = path_prefix_ + "/chat/completions";

  httplib::Headers headers;
  if (key != nullptr && *key != '\0')
    headers.emplace("Authorization", std::string("Bearer ") + key);

  int backoff = opts_.backoff_ms;
  std::string last_err;
  for (int attempt = 0; attempt < opts_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    httplib::Client cli(origin_);
    cli.set_connection_timeout(opts_.timeout_s, 0);
    cli.set_read_timeout(opts_.timeout_s, 0);

    auto res = cli.Post(path, headers, payload, "application/json");
    if (!res) {
      last_err = "connect: " + httplib::to_string(res.error());
      continue;  // network-level failure, retry
    }
    if (res->status == 401 || res->status == 403)
      throw Error(Errc::auth_failure,
                  "chat client: HTTP " + std::to_string(res->status) +
                      " from " + origin_);
    if (res->status == 429 || res->status >= 500) {
      last_err = "HTTP " + std::to_string(res->status);
      continue;  // throttled or server-side, retry with backoff
    }
    if (res->status != 200)
      throw Error(Errc::parse_failure,
                  "chat client: unexpected HTTP " +
                      std::to_string(res->status) + ": " + res->body);

    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw Error(Errc::parse_failure,
                  std::string("chat client: bad JSON in response: ") +
                      e.what());
    }
    if (!reply.contains("choices") || !reply["choices"].is_array() ||
        reply["choices"].empty())
      throw Error(Errc::parse_failure, "chat client: response has no choices");
    const auto& choice = reply["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content"))
      throw Error(Errc::parse_failure,
                  "chat client: choice has no message content");
    return choice["message"]["content"].get<std::string>();
  }
  throw Error(Errc::endpoint_unreachable,
              "chat client: " + origin_ + " unreachable after " +
                  std::to_string(opts_.max_attempts) + " attempts (" +
                  last_err + ")");
}

std::string ScriptedChatClient::complete(
    const std::vector<ChatMessage>& messages, double /*temperature*/) {
  std::lock_guard<std::mutex> lock(mu_);
  seen_.push_back(messages);
  if (calls_ >= static_cast<int>(responses_.size()))
    throw Error(Errc::endpoint_unreachable, "scripted client: out of replies");
  return responses_[static_cast<std::size_t>(calls_++)];
}

}  // namespace shine
