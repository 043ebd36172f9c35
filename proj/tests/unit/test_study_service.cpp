#include "fixtures.hpp"

#include "forge/png_io.hpp"
#include "forge/rng.hpp"
#include "forge/study_http.hpp"
#include "forge/study_service.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <thread>

using namespace forge;
using forge::testing::synthetic_manifest;
using forge::testing::TempDir;

namespace {

StudyConfig config_in(const TempDir &dir) {
  StudyConfig c;
  c.log_dir = dir.path();
  c.seed = 17;
  return c;
}

// Everything a study payload may depend on without leaking the answer.
nlohmann::json public_payload(const BenchmarkItem &item, std::size_t served, std::size_t total) {
  nlohmann::json letters = nlohmann::json::array();
  for (int i = 0; i < item.num_labels; ++i) {
    letters.push_back(std::string(1, static_cast<char>('A' + i)));
  }
  return {{"pair_id", item.pair_id},
          {"images", {{"view1", "/images/" + item.pair_id + "/view1.png"}, {"view2", "/images/" + item.pair_id + "/view2.png"}}},
          {"letters", letters},
          {"num_labels", item.num_labels},
          {"mode", "study"},
          {"progress", {{"served", served}, {"total", total}}}};
}

bool has_answer_key(const nlohmann::json &j) {
  if (j.is_object()) {
    for (const auto &[k, v] : j.items()) {
      if (k.find("answer") != std::string::npos || k.find("correct") != std::string::npos || has_answer_key(v)) {
        return true;
      }
    }
  } else if (j.is_array()) {
    for (const auto &v : j) {
      if (has_answer_key(v)) {
        return true;
      }
    }
  }
  return false;
}

} // namespace

TEST_CASE("fresh session sees each item once, then exhaustion") {
  TempDir dir;
  StudyService svc(synthetic_manifest(3, 1), config_in(dir));
  const std::string tok = svc.create_session("alice", StudyMode::kStudy);
  std::set<std::string> seen;
  for (int i = 0; i < 3; ++i) {
    const auto p = svc.next_item(tok);
    REQUIRE(p.has_value());
    seen.insert(p->at("pair_id").get<std::string>());
  }
  CHECK(seen.size() == 3);
  CHECK_FALSE(svc.next_item(tok).has_value());
  try {
    svc.next_item("nope");
    FAIL("expected auth error");
  } catch (const StudyError &e) {
    CHECK(e.kind() == StudyError::Kind::kAuth);
    CHECK(e.http_status() == 401);
  }
}

TEST_CASE("study payloads carry only public fields") {
  TempDir dir;
  const BenchmarkManifest m = synthetic_manifest(30, 2);
  StudyService svc(m, config_in(dir));
  const std::string tok = svc.create_session("bob", StudyMode::kStudy);
  std::size_t served = 0;
  while (const auto p = svc.next_item(tok)) {
    ++served;
    const BenchmarkItem *item = m.find(p->at("pair_id"));
    REQUIRE(item != nullptr);
    CHECK(*p == public_payload(*item, served, m.items.size()));
    CHECK_FALSE(has_answer_key(*p));
  }
  CHECK(served == 30);
  const std::string vet = svc.create_session("vetter", StudyMode::kVet);
  const auto v = svc.next_item(vet);
  REQUIRE(v.has_value());
  CHECK(v->at("answer_letter") == std::string(1, m.find(v->at("pair_id"))->answer_letter));
}

TEST_CASE("coverage stays balanced across two interleaved sessions") {
  TempDir dir;
  const BenchmarkManifest m = synthetic_manifest(500, 3);
  StudyService svc(m, config_in(dir));
  Rng rng(4);
  std::vector<std::string> tokens;
  for (int i = 0; i < 2; ++i) {
    tokens.push_back(svc.create_session("p" + std::to_string(i), StudyMode::kStudy));
  }
  for (int draw = 0; draw < 1000; ++draw) {
    const auto p = svc.next_item(tokens[rng.below(tokens.size())]);
    if (!p) {
      continue;
    }
    const auto cov = svc.coverage();
    long long lo = 1 << 30, hi = 0;
    for (const auto &it : m.items) {
      const auto f = cov.find(it.pair_id);
      const long long c = f == cov.end() ? 0 : f->second;
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    REQUIRE(hi - lo <= 1);
  }
}

TEST_CASE("answers are validated, ordered and idempotent") {
  TempDir dir;
  const BenchmarkManifest m = synthetic_manifest(6, 5, 5, 5);
  StudyService svc(m, config_in(dir));
  const std::string tok = svc.create_session("carol", StudyMode::kStudy);
  const auto p = svc.next_item(tok);
  const std::string id = p->at("pair_id");
  auto kind = [&](const std::string &pair, const std::string &letter) {
    try {
      svc.record_answer(tok, pair, letter);
    } catch (const StudyError &e) {
      return e.kind();
    }
    FAIL("expected an error");
    return StudyError::Kind::kAuth;
  };
  CHECK(kind(id, "Z") == StudyError::Kind::kValidation);
  CHECK(kind(id, "AB") == StudyError::Kind::kValidation);
  std::string other;
  for (const auto &it : m.items) {
    if (it.pair_id != id) {
      other = it.pair_id;
      break;
    }
  }
  CHECK(kind(other, "A") == StudyError::Kind::kOrdering);
  CHECK(kind("missing", "A") == StudyError::Kind::kNotFound);
  CHECK_FALSE(svc.record_answer(tok, id, "B").duplicate);
  CHECK(svc.record_answer(tok, id, "C").duplicate);
  const auto trials = svc.trials();
  REQUIRE(trials.size() == 1);
  CHECK(trials[0].parsed_letter == 'B');
  CHECK(trials[0].model == "human:carol");
  CHECK(trials[0].correct == (m.find(id)->answer_letter == 'B'));
  const std::string vet = svc.create_session("v", StudyMode::kVet);
  svc.next_item(vet);
  try {
    svc.record_answer(vet, id, "A");
    FAIL("expected mode error");
  } catch (const StudyError &e) {
    CHECK(e.kind() == StudyError::Kind::kMode);
  }
}

TEST_CASE("logs replay after restart") {
  TempDir dir;
  const BenchmarkManifest m = synthetic_manifest(5, 6);
  std::string tok, first;
  {
    StudyService svc(m, config_in(dir));
    tok = svc.create_session("dana", StudyMode::kStudy);
    first = svc.next_item(tok)->at("pair_id");
    svc.record_answer(tok, first, "A");
    svc.next_item(tok);
  }
  StudyService again(m, config_in(dir));
  CHECK(again.trials().size() == 1);
  CHECK(again.session(tok).has_value());
  CHECK(again.session(tok)->served.size() == 2);
  CHECK(again.record_answer(tok, first, "B").duplicate);
  int remaining = 0;
  while (again.next_item(tok)) {
    ++remaining;
  }
  CHECK(remaining == 3);
}

TEST_CASE("human stats aggregate per participant") {
  TempDir dir;
  const BenchmarkManifest m = synthetic_manifest(8, 7);
  StudyService svc(m, config_in(dir));
  const std::string a = svc.create_session("a", StudyMode::kStudy);
  const std::string b = svc.create_session("b", StudyMode::kStudy);
  for (int i = 0; i < 3; ++i) {
    const std::string id = svc.next_item(a)->at("pair_id");
    svc.record_answer(a, id, std::string(1, m.find(id)->answer_letter));
  }
  for (int i = 0; i < 5; ++i) {
    const std::string id = svc.next_item(b)->at("pair_id");
    const char wrong = m.find(id)->answer_letter == 'A' ? 'B' : 'A';
    svc.record_answer(b, id, std::string(1, i == 0 ? m.find(id)->answer_letter : wrong));
  }
  const auto s = svc.human_stats();
  CHECK(s.at("num_trials") == 8);
  CHECK(s.at("participants").at("human:a").at("overall").at("accuracy") == 1.0);
  CHECK(s.at("participants").at("human:b").at("overall").at("accuracy").get<double>() == doctest::Approx(0.2));
  CHECK(s.at("pooled").at("overall").at("accuracy").get<double>() == doctest::Approx(4.0 / 8.0));
}

TEST_CASE("vetting and curated export") {
  TempDir dir;
  BenchmarkManifest m = synthetic_manifest(9, 8);
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    m.items[i].scene_id = i < 5 ? "kitchen_1" : "office_" + std::to_string(i);
  }
  StudyService svc(m, config_in(dir));
  const std::string v1 = svc.create_session("v1", StudyMode::kVet);
  const std::string v2 = svc.create_session("v2", StudyMode::kVet);
  std::vector<std::string> order;
  while (const auto p = svc.next_item(v1)) {
    order.push_back(p->at("pair_id"));
  }
  for (const auto &id : order) {
    svc.record_vet(v1, id, "accept", "", "");
  }
  CHECK_THROWS_AS(svc.record_vet(v1, order[0], "accept", "", ""), StudyError);
  CHECK_THROWS_AS(svc.record_vet(v1, "missing", "accept", "", ""), StudyError);
  while (svc.next_item(v2)) {
  }
  svc.record_vet(v2, m.items[6].pair_id, "reject", "inpaint_artifact", "smear on the left");
  CHECK_THROWS_AS(svc.record_vet(v2, m.items[7].pair_id, "reject", "bogus", ""), StudyError);
  const std::string study = svc.create_session("s", StudyMode::kStudy);
  svc.next_item(study);
  CHECK_THROWS_AS(svc.record_vet(study, m.items[0].pair_id, "accept", "", ""), StudyError);

  std::map<std::string, long long> cov;
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    cov[m.items[i].pair_id] = static_cast<long long>(i % 5);
  }
  const CuratedExport out = export_curated(m, svc.vet_log(), cov, 2);
  std::set<std::string> ids;
  for (const auto &it : out.manifest.items) {
    ids.insert(it.pair_id);
  }
  // kitchen_1 has five accepts; the two with the most coverage win
  CHECK(ids.count(m.items[4].pair_id) == 1);
  CHECK(ids.count(m.items[3].pair_id) == 1);
  CHECK(ids.count(m.items[0].pair_id) == 0);
  CHECK(ids.count(m.items[6].pair_id) == 0);
  CHECK(ids.size() == 2 + 3);
  CHECK(out.sidecar.at(m.items[6].pair_id).at("reason") == "inpaint_artifact");
  CHECK(out.sidecar.at(m.items[6].pair_id).at("status") == "rejected");
  CHECK(out.sidecar.at(m.items[0].pair_id).at("status") == "scene_cap");
  CHECK(out.sidecar.at(m.items[6].pair_id).at("history").size() == 2);
  CHECK(export_curated(m, svc.vet_log(), cov, 2).sidecar.dump() == out.sidecar.dump());
  CHECK(manifest_consistent(out.manifest));
  CHECK(coverage_from_log(dir / "sessions.jsonl") == svc.coverage());
}

TEST_CASE("HTTP API") {
  TempDir dir;
  const BenchmarkManifest m = synthetic_manifest(4, 9, 5, 5);
  for (const auto &it : m.items) {
    std::filesystem::create_directories(dir / it.pair_id);
    png::write_rgb(dir / it.view1, RgbImage(6, 4, 9));
    png::write_rgb(dir / it.view2, RgbImage(6, 4, 9));
  }
  TempDir logs;
  StudyService svc(m, config_in(logs));
  StudyServer server(svc, dir.path());
  const int port = server.bind("127.0.0.1", 0);
  std::thread t([&] { server.serve(); });
  httplib::Client cli("127.0.0.1", port);

  auto res = cli.Post("/api/session", R"({"participant_label":"eve","mode":"study"})", "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const std::string tok = nlohmann::json::parse(res->body).at("token");
  const httplib::Headers auth{{"Authorization", "Bearer " + tok}};

  CHECK(cli.Get("/api/item/next")->status == 401);
  res = cli.Get("/api/item/next", auth);
  REQUIRE(res->status == 200);
  const auto item = nlohmann::json::parse(res->body);
  const std::string id = item.at("pair_id");
  const char answer = m.find(id)->answer_letter;
  CHECK_FALSE(has_answer_key(item));
  CHECK(res->body.find("\"answer") == std::string::npos);

  res = cli.Get(item.at("images").at("view1").get<std::string>());
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(cli.Get("/images/../etc/view1.png")->status == 404);

  CHECK(cli.Post("/api/item/" + id + "/answer", auth, R"({"letter":"Z"})", "application/json")->status == 400);
  CHECK(cli.Post("/api/item/" + id + "/answer", auth, "not json", "application/json")->status == 400);
  res = cli.Post("/api/item/" + id + "/answer", auth, nlohmann::json{{"letter", std::string(1, answer)}}.dump(),
                 "application/json");
  REQUIRE(res->status == 200);
  CHECK(nlohmann::json::parse(res->body) == nlohmann::json{{"ok", true}, {"duplicate", false}});
  res = cli.Post("/api/item/" + id + "/answer", auth, R"({"letter":"A"})", "application/json");
  CHECK(nlohmann::json::parse(res->body).at("duplicate") == true);
  CHECK(cli.Post("/api/item/" + id + "/vet", auth, R"({"decision":"accept"})", "application/json")->status == 409);

  res = cli.Get("/api/stats");
  REQUIRE(res->status == 200);
  CHECK(nlohmann::json::parse(res->body).at("num_trials") == 1);
  for (int i = 0; i < 3; ++i) {
    cli.Get("/api/item/next", auth);
  }
  res = cli.Get("/api/item/next", auth);
  CHECK(nlohmann::json::parse(res->body) == nlohmann::json{{"exhausted", true}});
  server.stop();
  t.join();
}
