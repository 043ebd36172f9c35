#pragma once

#include "forge/error.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace forge {

/// Chat-completions style HTTP model endpoint.
struct ChatEndpoint {
  std::string name;
  std::string base_url;    // e.g. http://127.0.0.1:8000/v1
  std::string api_key_env; // env var holding the bearer token; empty for none
  std::string model;
  int max_tokens = 512;
  double temperature = 0.0;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 4;
  int max_concurrency = 4;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{30000};
  /// 0 disables rate limiting.
  double requests_per_second = 0.0;

  void validate() const;
};

ChatEndpoint chat_endpoint_from_json(const nlohmann::json &j);
nlohmann::json to_json(const ChatEndpoint &e);

struct ChatMessage {
  std::string role; // system | user | assistant
  std::string text;
  /// PNG bytes attached after the text, in order.
  std::vector<std::vector<std::uint8_t>> images;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct ChatResult {
  std::string text;
  /// Alternatives for the first generated token, when requested and returned.
  std::optional<std::vector<TokenLogprob>> first_token_logprobs;
  int attempts = 0;
  double latency_ms = 0.0;
};

class TransportError : public Error {
public:
  enum class Kind { kExhausted, kHttpStatus, kBadResponse };
  TransportError(Kind kind, int attempts, const std::string &what) : Error(what), kind_(kind), attempts_(attempts) {}
  Kind kind() const { return kind_; }
  int attempts() const { return attempts_; }

private:
  Kind kind_;
  int attempts_;
};

/// Thread-safe; bounds in-flight requests to max_concurrency and retries 429,
/// 5xx and connection failures with exponential backoff (Retry-After wins
/// when the server sends it).
class ChatClient {
public:
  explicit ChatClient(ChatEndpoint endpoint);
  ~ChatClient();
  ChatClient(const ChatClient &) = delete;
  ChatClient &operator=(const ChatClient &) = delete;

  ChatResult complete(const std::vector<ChatMessage> &messages, int top_logprobs = 0) const;
  const ChatEndpoint &endpoint() const { return endpoint_; }

  /// Request body as sent on the wire; exposed for tests and prompt hashing.
  nlohmann::json request_body(const std::vector<ChatMessage> &messages, int top_logprobs) const;

private:
  struct State;
  ChatEndpoint endpoint_;
  std::unique_ptr<State> state_;
};

std::string base64_encode(const std::vector<std::uint8_t> &bytes);
std::string sha256_hex(const std::string &data);

} // namespace forge
