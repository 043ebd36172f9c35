#include "forge/chat_client.hpp"

#include "forge/http_util.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <semaphore>
#include <stdexcept>
#include <thread>

namespace forge {

namespace {

long long ms(std::chrono::milliseconds d) { return static_cast<long long>(d.count()); }

} // namespace

void ChatEndpoint::validate() const {
  if (name.empty() || base_url.empty() || model.empty()) {
    throw std::invalid_argument("endpoint needs name, base_url and model");
  }
  if (max_retries < 0 || max_concurrency < 1 || max_tokens < 1) {
    throw std::invalid_argument("endpoint " + name + ": invalid retry/concurrency/token limits");
  }
}

ChatEndpoint chat_endpoint_from_json(const nlohmann::json &j) {
  ChatEndpoint e;
  e.name = j.at("name").get<std::string>();
  e.base_url = j.at("base_url").get<std::string>();
  e.model = j.at("model").get<std::string>();
  e.api_key_env = j.value("api_key_env", "");
  e.max_tokens = j.value("max_tokens", e.max_tokens);
  e.temperature = j.value("temperature", 0.0);
  e.timeout = std::chrono::milliseconds(j.value("timeout_ms", ms(e.timeout)));
  e.max_retries = j.value("max_retries", e.max_retries);
  e.max_concurrency = j.value("max_concurrency", e.max_concurrency);
  e.backoff_initial = std::chrono::milliseconds(j.value("backoff_initial_ms", ms(e.backoff_initial)));
  e.backoff_max = std::chrono::milliseconds(j.value("backoff_max_ms", ms(e.backoff_max)));
  e.requests_per_second = j.value("requests_per_second", 0.0);
  e.validate();
  return e;
}

nlohmann::json to_json(const ChatEndpoint &e) {
  return {{"name", e.name},
          {"base_url", e.base_url},
          {"model", e.model},
          {"api_key_env", e.api_key_env},
          {"max_tokens", e.max_tokens},
          {"temperature", e.temperature},
          {"timeout_ms", ms(e.timeout)},
          {"max_retries", e.max_retries},
          {"max_concurrency", e.max_concurrency},
          {"backoff_initial_ms", ms(e.backoff_initial)},
          {"backoff_max_ms", ms(e.backoff_max)},
          {"requests_per_second", e.requests_per_second}};
}

std::string base64_encode(const std::vector<std::uint8_t> &bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char *>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string sha256_hex(const std::string &data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

struct ChatClient::State {
  explicit State(int n) : slots(n) {}
  std::counting_semaphore<> slots;
  std::mutex rate_mu;
  std::chrono::steady_clock::time_point next_slot{};
};

ChatClient::ChatClient(ChatEndpoint endpoint)
    : endpoint_(std::move(endpoint)), state_(std::make_unique<State>(std::max(1, endpoint_.max_concurrency))) {}

ChatClient::~ChatClient() = default;

nlohmann::json ChatClient::request_body(const std::vector<ChatMessage> &messages, int top_logprobs) const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const ChatMessage &m : messages) {
    if (m.images.empty()) {
      msgs.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    nlohmann::json parts = nlohmann::json::array();
    parts.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto &png : m.images) {
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
    }
    msgs.push_back({{"role", m.role}, {"content", parts}});
  }
  nlohmann::json body = {{"model", endpoint_.model},
                         {"messages", msgs},
                         {"max_tokens", endpoint_.max_tokens},
                         {"temperature", endpoint_.temperature}};
  if (top_logprobs > 0) {
    body["logprobs"] = true;
    body["top_logprobs"] = top_logprobs;
  }
  return body;
}

ChatResult ChatClient::complete(const std::vector<ChatMessage> &messages, int top_logprobs) const {
  const std::string body = request_body(messages, top_logprobs).dump();
  const http::UrlParts url = http::split_url(endpoint_.base_url);
  httplib::Headers headers;
  if (!endpoint_.api_key_env.empty()) {
    if (const char *key = std::getenv(endpoint_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const auto start = std::chrono::steady_clock::now();
  std::chrono::milliseconds backoff = endpoint_.backoff_initial;
  std::string last_problem;
  for (int attempt = 1; attempt <= endpoint_.max_retries + 1; ++attempt) {
    if (endpoint_.requests_per_second > 0.0) {
      std::unique_lock lock(state_->rate_mu);
      const auto now = std::chrono::steady_clock::now();
      const auto slot = std::max(now, state_->next_slot);
      state_->next_slot = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     std::chrono::duration<double>(1.0 / endpoint_.requests_per_second));
      lock.unlock();
      std::this_thread::sleep_until(slot);
    }

    httplib::Client client(url.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    state_->slots.acquire();
    auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
    state_->slots.release();

    std::chrono::milliseconds wait = backoff;
    if (!res) {
      last_problem = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      ChatResult out;
      out.attempts = attempt;
      try {
        const auto j = nlohmann::json::parse(res->body);
        const auto &choice = j.at("choices").at(0);
        const auto &content = choice.at("message").at("content");
        out.text = content.is_null() ? std::string() : content.get<std::string>();
        if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
            choice["logprobs"]["content"].is_array() && !choice["logprobs"]["content"].empty()) {
          const auto &first = choice["logprobs"]["content"][0];
          std::vector<TokenLogprob> alts;
          if (first.contains("top_logprobs")) {
            for (const auto &t : first["top_logprobs"]) {
              alts.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
            }
          } else {
            alts.push_back({first.at("token").get<std::string>(), first.at("logprob").get<double>()});
          }
          out.first_token_logprobs = std::move(alts);
        }
      } catch (const nlohmann::json::exception &e) {
        throw TransportError(TransportError::Kind::kBadResponse, attempt,
                             endpoint_.name + ": malformed completion response: " + e.what());
      }
      out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return out;
    } else if (res->status == 429 || res->status >= 500) {
      last_problem = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        try {
          wait = std::chrono::milliseconds(static_cast<long long>(std::stod(res->get_header_value("Retry-After")) * 1000.0));
        } catch (const std::exception &) {
          // HTTP-date form is not worth parsing; keep the exponential schedule.
        }
      }
    } else {
      throw TransportError(TransportError::Kind::kHttpStatus, attempt,
                           endpoint_.name + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    if (attempt <= endpoint_.max_retries) {
      std::this_thread::sleep_for(std::min(wait, endpoint_.backoff_max));
      backoff = std::min(backoff * 2, endpoint_.backoff_max);
    }
  }
  throw TransportError(TransportError::Kind::kExhausted, endpoint_.max_retries + 1,
                       endpoint_.name + ": giving up after " + std::to_string(endpoint_.max_retries + 1) +
                           " attempts (" + last_problem + ")");
}

} // namespace forge
