#pragma once
// Chat-completions client. The wire shape is the OpenAI-compatible
// /chat/completions contract: a messages array in, one text completion out.
// The API key is read from an environment variable only.

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "shine/errors.hpp"

namespace shine {

struct ChatMessage {
  std::string role;
  std::string content;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the assistant message content. Throws EndpointUnreachable,
  // AuthFailure, or ParseFailure.
  virtual std::string complete(const std::vector<ChatMessage>& messages,
                               double temperature) = 0;
  virtual std::string model_id() const = 0;
};

struct HttpChatOptions {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "SHINE_API_KEY";
  int timeout_s = 30;
  int max_attempts = 5;   // transport-level attempts (throttle/5xx)
  int backoff_ms = 250;   // doubles per attempt
};

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatOptions opts);
  std::string complete(const std::vector<ChatMessage>& messages,
                       double temperature) override;
  std::string model_id() const override { return opts_.model; }

 private:
  HttpChatOptions opts_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. /v1
};

// Canned-response client for unit tests and offline runs. Safe to share
// across forge workers; replies are handed out in order.
class ScriptedChatClient : public ChatClient {
 public:
  explicit ScriptedChatClient(std::vector<std::string> responses,
                              std::string model = "scripted")
      : responses_(std::move(responses)), model_(std::move(model)) {}
  std::string complete(const std::vector<ChatMessage>& messages,
                       double temperature) override;
  std::string model_id() const override { return model_; }
  int calls() const { return calls_; }
  const std::vector<std::vector<ChatMessage>>& seen() const { return seen_; }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> responses_;
  std::string model_;
  int calls_ = 0;
  std::vector<std::vector<ChatMessage>> seen_;
};

}  // namespace shine
