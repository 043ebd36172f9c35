#include "fixtures.hpp"
#include "mock_http.hpp"

#include "forge/chat_client.hpp"
#include "forge/jsonl.hpp"

#include <doctest.h>

#include <fstream>

using namespace forge;
using forge::testing::chat_reply;
using forge::testing::MockResponse;
using forge::testing::MockServer;
using forge::testing::TempDir;

namespace {

ChatEndpoint endpoint_for(const MockServer &server) {
  ChatEndpoint ep;
  ep.name = "mock";
  ep.base_url = server.url() + "/v1";
  ep.model = "mock-model";
  ep.max_retries = 3;
  ep.backoff_initial = std::chrono::milliseconds(10);
  ep.backoff_max = std::chrono::milliseconds(50);
  ep.timeout = std::chrono::milliseconds(3000);
  return ep;
}

} // namespace

TEST_CASE("plain reply") {
  MockServer server;
  std::string seen;
  server.post("/v1/chat/completions", [&](const httplib::Request &req) {
    seen = req.body;
    return MockResponse{200, chat_reply("D").dump()};
  });
  server.start();
  ChatClient client(endpoint_for(server));
  const ChatResult r = client.complete({{"user", "pick", {{1, 2, 3}}}});
  CHECK(r.text == "D");
  CHECK(r.attempts == 1);
  const auto body = nlohmann::json::parse(seen);
  CHECK(body.at("model") == "mock-model");
  CHECK(body.at("temperature") == 0.0);
  CHECK(forge::testing::request_images(body) == std::vector<std::string>{base64_encode({1, 2, 3})});
}

TEST_CASE("429 twice then success") {
  MockServer server;
  std::atomic<int> calls{0};
  server.post("/v1/chat/completions", [&](const httplib::Request &) {
    if (++calls <= 2) {
      return MockResponse{429, R"({"error":"slow down"})"};
    }
    return MockResponse{200, chat_reply("B").dump()};
  });
  server.start();
  ChatClient client(endpoint_for(server));
  const ChatResult r = client.complete({{"user", "pick", {}}});
  CHECK(r.text == "B");
  CHECK(r.attempts == 3);
}

TEST_CASE("persistent 500 exhausts retries") {
  MockServer server;
  server.post("/v1/chat/completions", [&](const httplib::Request &) { return MockResponse{500, "{}"}; });
  server.start();
  ChatClient client(endpoint_for(server));
  try {
    client.complete({{"user", "pick", {}}});
    FAIL("expected TransportError");
  } catch (const TransportError &e) {
    CHECK(e.kind() == TransportError::Kind::kExhausted);
    CHECK(e.attempts() == 4);
  }
  CHECK(server.hits() == 4);
}

TEST_CASE("client errors are not retried") {
  MockServer server;
  server.post("/v1/chat/completions", [&](const httplib::Request &) { return MockResponse{400, "{}"}; });
  server.start();
  ChatClient client(endpoint_for(server));
  CHECK_THROWS_AS(client.complete({{"user", "x", {}}}), TransportError);
  CHECK(server.hits() == 1);
}

TEST_CASE("first-token alternatives are returned") {
  MockServer server;
  server.post("/v1/chat/completions", [&](const httplib::Request &) {
    return MockResponse{200, chat_reply("Yes", std::vector<std::pair<std::string, double>>{{"Yes", -0.1}, {"No", -2.4}}).dump()};
  });
  server.start();
  ChatClient client(endpoint_for(server));
  const ChatResult r = client.complete({{"user", "q", {}}}, 5);
  REQUIRE(r.first_token_logprobs.has_value());
  CHECK(r.first_token_logprobs->size() == 2);
  CHECK(r.first_token_logprobs->at(0).token == "Yes");
}

TEST_CASE("endpoint config round-trips") {
  ChatEndpoint ep;
  ep.name = "m";
  ep.base_url = "http://h/v1";
  ep.model = "x";
  ep.max_concurrency = 7;
  const ChatEndpoint back = chat_endpoint_from_json(to_json(ep));
  CHECK(back.max_concurrency == 7);
  CHECK(back.base_url == "http://h/v1");
  ep.max_concurrency = 0;
  CHECK_THROWS(ep.validate());
}

TEST_CASE("digests and encodings") {
  CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode({'M', 'a'}) == "TWE=");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("jsonl read, write, append") {
  TempDir dir;
  write_jsonl(dir / "a.jsonl", {{{"b", 1}, {"a", 2}}, {{"x", "y"}}});
  auto rows = read_jsonl(dir / "a.jsonl");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("a") == 2);
  {
    JsonlAppender log(dir / "a.jsonl");
    log.append({{"n", 3}});
  }
  rows = read_jsonl(dir / "a.jsonl");
  CHECK(rows.size() == 3);
  CHECK(dump_canonical({{"b", 1}, {"a", 2}}) == R"({"a":2,"b":1})");
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{\"a\":1}\n\n{oops\n{\"b\":2}\n";
  }
  try {
    read_jsonl(dir / "bad.jsonl");
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(read_jsonl(dir / "none.jsonl"), Error);
  {
    std::ofstream out(dir / "torn.jsonl");
    out << "{\"a\":1}\n{\"b\":";
  }
  CHECK(read_jsonl(dir / "torn.jsonl").size() == 1);
}
