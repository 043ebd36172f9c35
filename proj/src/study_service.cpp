#include "forge/study_service.hpp"

#include "forge/rng.hpp"

#include <algorithm>
#include <random>

namespace forge {
namespace {

constexpr std::uint64_t kOrderStream = 0x7374756479;

std::string mint_token() {
  std::random_device rd;
  std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  static const char *hex = "0123456789abcdef";
  std::string s;
  for (const std::uint64_t part : {hi, lo}) {
    for (int shift = 60; shift >= 0; shift -= 4) {
      s.push_back(hex[(part >> shift) & 15U]);
    }
  }
  return s;
}

constexpr std::pair<VetReason, const char *> kReasons[] = {
    {VetReason::kNone, ""},
    {VetReason::kInpaintArtifact, "inpaint_artifact"},
    {VetReason::kAmbiguous, "ambiguous"},
    {VetReason::kObjectTooSmall, "object_too_small"},
    {VetReason::kOther, "other"},
};

} // namespace

const char *to_string(StudyMode m) { return m == StudyMode::kVet ? "vet" : "study"; }

StudyMode study_mode_from_string(const std::string &s) {
  if (s == "vet") {
    return StudyMode::kVet;
  }
  if (s == "study") {
    return StudyMode::kStudy;
  }
  throw StudyError(StudyError::Kind::kValidation, "mode must be \"vet\" or \"study\"");
}

const char *to_string(VetReason r) {
  for (const auto &[k, name] : kReasons) {
    if (k == r) {
      return name;
    }
  }
  return "";
}

VetReason vet_reason_from_string(const std::string &s) {
  for (const auto &[k, name] : kReasons) {
    if (s == name) {
      return k;
    }
  }
  throw StudyError(StudyError::Kind::kValidation, "unknown vet reason: " + s);
}

nlohmann::json to_json(const VetDecision &d) {
  return {{"pair_id", d.pair_id},   {"decision", d.accept ? "accept" : "reject"}, {"reason", to_string(d.reason)},
          {"note", d.note},         {"session_id", d.session_id},                 {"ts", d.ts}};
}

VetDecision vet_decision_from_json(const nlohmann::json &j) {
  VetDecision d;
  d.pair_id = j.at("pair_id").get<std::string>();
  d.accept = j.at("decision").get<std::string>() == "accept";
  d.reason = vet_reason_from_string(j.value("reason", ""));
  d.note = j.value("note", "");
  d.session_id = j.value("session_id", "");
  d.ts = j.value("ts", 0LL);
  return d;
}

int StudyError::http_status() const {
  switch (kind_) {
  case Kind::kAuth:
    return 401;
  case Kind::kValidation:
    return 400;
  case Kind::kOrdering:
  case Kind::kMode:
    return 409;
  case Kind::kNotFound:
    return 404;
  }
  return 500;
}

StudyService::StudyService(BenchmarkManifest manifest, StudyConfig config)
    : manifest_(std::move(manifest)), config_(std::move(config)) {
  std::vector<std::string> ids;
  for (const auto &item : manifest_.items) {
    ids.push_back(item.pair_id);
    coverage_[item.pair_id] = 0;
  }
  Rng rng(derive_seed(config_.seed, kOrderStream));
  rng.shuffle(std::span(ids));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    shuffle_rank_[ids[i]] = i;
  }
  std::filesystem::create_directories(config_.log_dir);
  replay();
  session_log_ = std::make_unique<JsonlAppender>(config_.log_dir / "sessions.jsonl");
  trial_log_ = std::make_unique<JsonlAppender>(config_.log_dir / "trials.jsonl");
  vet_log_ = std::make_unique<JsonlAppender>(config_.log_dir / "vet.jsonl");
}

StudyService::~StudyService() = default;

void StudyService::replay() {
  const auto sessions_path = config_.log_dir / "sessions.jsonl";
  if (std::filesystem::exists(sessions_path)) {
    for (const auto &r : read_jsonl(sessions_path)) {
      const std::string type = r.at("type").get<std::string>();
      const std::string token = r.at("token").get<std::string>();
      if (type == "session") {
        Session s;
        s.token = token;
        s.participant_label = r.at("participant_label").get<std::string>();
        s.mode = study_mode_from_string(r.at("mode").get<std::string>());
        s.created_ts = r.value("ts", 0LL);
        sessions_[token] = std::move(s);
      } else if (type == "serve") {
        auto it = sessions_.find(token);
        const std::string pair_id = r.at("pair_id").get<std::string>();
        if (it != sessions_.end() && it->second.served_ts.emplace(pair_id, r.value("ts", 0LL)).second) {
          it->second.served.push_back(pair_id);
          ++coverage_[pair_id];
        }
      }
    }
  }
  const auto trials_path = config_.log_dir / "trials.jsonl";
  if (std::filesystem::exists(trials_path)) {
    for (const auto &r : read_jsonl(trials_path)) {
      Trial t = trial_from_json(r);
      if (auto it = sessions_.find(t.session_id); it != sessions_.end()) {
        it->second.answered.insert(t.pair_id);
      }
      trials_.push_back(std::move(t));
    }
  }
  const auto vet_path = config_.log_dir / "vet.jsonl";
  if (std::filesystem::exists(vet_path)) {
    for (const auto &r : read_jsonl(vet_path)) {
      VetDecision d = vet_decision_from_json(r);
      if (auto it = sessions_.find(d.session_id); it != sessions_.end()) {
        it->second.vetted.insert(d.pair_id);
      }
      vets_.push_back(std::move(d));
    }
  }
}

Session &StudyService::require_session(const std::string &token) {
  const auto it = sessions_.find(token);
  if (it == sessions_.end()) {
    throw StudyError(StudyError::Kind::kAuth, "unknown or missing session token");
  }
  return it->second;
}

const BenchmarkItem &StudyService::require_item(const std::string &pair_id) const {
  const BenchmarkItem *item = manifest_.find(pair_id);
  if (item == nullptr) {
    throw StudyError(StudyError::Kind::kNotFound, "unknown pair " + pair_id);
  }
  return *item;
}

std::string StudyService::create_session(const std::string &participant_label, StudyMode mode) {
  if (participant_label.empty() || participant_label.size() > 128) {
    throw StudyError(StudyError::Kind::kValidation, "participant_label must be 1-128 characters");
  }
  Session s;
  s.token = mint_token();
  s.participant_label = participant_label;
  s.mode = mode;
  s.created_ts = now_unix_ms();
  std::unique_lock lock(mu_);
  session_log_->append({{"type", "session"},
                        {"token", s.token},
                        {"participant_label", s.participant_label},
                        {"mode", to_string(mode)},
                        {"ts", s.created_ts}});
  const std::string token = s.token;
  sessions_[token] = std::move(s);
  return token;
}

std::optional<nlohmann::json> StudyService::next_item(const std::string &token) {
  std::unique_lock lock(mu_);
  Session &s = require_session(token);
  const BenchmarkItem *best = nullptr;
  for (const auto &item : manifest_.items) {
    if (s.served_ts.count(item.pair_id) != 0) {
      continue;
    }
    if (best == nullptr) {
      best = &item;
      continue;
    }
    const long long c = coverage_[item.pair_id], cb = coverage_[best->pair_id];
    if (c < cb || (c == cb && shuffle_rank_[item.pair_id] < shuffle_rank_[best->pair_id])) {
      best = &item;
    }
  }
  if (best == nullptr) {
    return std::nullopt;
  }
  const long long ts = now_unix_ms();
  session_log_->append({{"type", "serve"}, {"token", token}, {"pair_id", best->pair_id}, {"ts", ts}});
  s.served.push_back(best->pair_id);
  s.served_ts[best->pair_id] = ts;
  ++coverage_[best->pair_id];

  nlohmann::json letters = nlohmann::json::array();
  for (const char c : best->valid_letters()) {
    letters.push_back(std::string(1, c));
  }
  nlohmann::json payload = {
      {"pair_id", best->pair_id},
      {"images", {{"view1", "/images/" + best->pair_id + "/view1.png"}, {"view2", "/images/" + best->pair_id + "/view2.png"}}},
      {"letters", letters},
      {"num_labels", best->num_labels},
      {"mode", to_string(s.mode)},
      {"progress", {{"served", s.served.size()}, {"total", manifest_.items.size()}}},
  };
  if (s.mode == StudyMode::kVet) {
    payload["answer_letter"] = std::string(1, best->answer_letter);
    payload["variant"] = best->variant;
  }
  return payload;
}

AnswerAck StudyService::record_answer(const std::string &token, const std::string &pair_id, const std::string &letter) {
  std::unique_lock lock(mu_);
  Session &s = require_session(token);
  const BenchmarkItem &item = require_item(pair_id);
  if (s.mode != StudyMode::kStudy) {
    throw StudyError(StudyError::Kind::kMode, "answers are only accepted in study sessions");
  }
  const auto served = s.served_ts.find(pair_id);
  if (served == s.served_ts.end()) {
    throw StudyError(StudyError::Kind::kOrdering, "pair " + pair_id + " was not served to this session");
  }
  if (s.answered.count(pair_id) != 0) {
    return {true};
  }
  const std::string valid = item.valid_letters();
  if (letter.size() != 1 || valid.find(letter[0]) == std::string::npos) {
    throw StudyError(StudyError::Kind::kValidation, "letter must be one of " + letter_list(valid));
  }
  Trial t;
  t.pair_id = pair_id;
  t.model = "human:" + s.participant_label;
  t.prompt_version = "human";
  t.raw_response = letter;
  t.parsed_letter = letter[0];
  t.correct = letter[0] == item.answer_letter;
  t.ts = now_unix_ms();
  t.latency_ms = static_cast<double>(t.ts - served->second);
  t.session_id = token;
  trial_log_->append(to_json(t));
  s.answered.insert(pair_id);
  trials_.push_back(std::move(t));
  return {false};
}

void StudyService::record_vet(const std::string &token, const std::string &pair_id, const std::string &decision,
                              const std::string &reason, const std::string &note) {
  std::unique_lock lock(mu_);
  Session &s = require_session(token);
  require_item(pair_id);
  if (s.mode != StudyMode::kVet) {
    throw StudyError(StudyError::Kind::kMode, "vetting decisions require a vet session");
  }
  if (decision != "accept" && decision != "reject") {
    throw StudyError(StudyError::Kind::kValidation, "decision must be \"accept\" or \"reject\"");
  }
  VetDecision d;
  d.pair_id = pair_id;
  d.accept = decision == "accept";
  d.reason = vet_reason_from_string(reason);
  if (!d.accept && d.reason == VetReason::kNone) {
    throw StudyError(StudyError::Kind::kValidation, "a reject needs a reason");
  }
  if (s.served_ts.count(pair_id) == 0) {
    throw StudyError(StudyError::Kind::kOrdering, "pair " + pair_id + " was not served to this session");
  }
  if (s.vetted.count(pair_id) != 0) {
    throw StudyError(StudyError::Kind::kOrdering, "this session already decided on " + pair_id);
  }
  d.note = note;
  d.session_id = token;
  d.ts = now_unix_ms();
  vet_log_->append(to_json(d));
  s.vetted.insert(pair_id);
  vets_.push_back(std::move(d));
}

nlohmann::json StudyService::human_stats() const {
  std::shared_lock lock(mu_);
  return human_stats_report(trials_, manifest_);
}

std::vector<Trial> StudyService::trials() const {
  std::shared_lock lock(mu_);
  return trials_;
}

std::vector<VetDecision> StudyService::vet_log() const {
  std::shared_lock lock(mu_);
  return vets_;
}

std::map<std::string, long long> StudyService::coverage() const {
  std::shared_lock lock(mu_);
  return coverage_;
}

std::optional<Session> StudyService::session(const std::string &token) const {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(token);
  return it == sessions_.end() ? std::nullopt : std::optional<Session>(it->second);
}

nlohmann::json human_stats_report(const std::vector<Trial> &trials, const BenchmarkManifest &manifest) {
  std::vector<Trial> pooled;
  for (const Trial &t : trials) {
    if (t.model.rfind("human:", 0) == 0) {
      pooled.push_back(t);
    }
  }
  const nlohmann::json per = score(pooled, manifest);
  for (Trial &t : pooled) {
    t.model = "human";
  }
  const nlohmann::json all = score(pooled, manifest);
  return {{"num_trials", pooled.size()},
          {"pooled", all["models"].value("human", nlohmann::json::object())},
          {"participants", per["models"]}};
}

CuratedExport export_curated(const BenchmarkManifest &manifest, const std::vector<VetDecision> &decisions,
                             const std::map<std::string, long long> &coverage, std::size_t per_scene_cap) {
  std::map<std::string, std::vector<const VetDecision *>> history;
  for (const VetDecision &d : decisions) {
    history[d.pair_id].push_back(&d); // log order; the last entry is the latest
  }
  std::map<std::string, std::vector<const BenchmarkItem *>> by_scene;
  for (const auto &[pair_id, h] : history) {
    const BenchmarkItem *item = manifest.find(pair_id);
    if (item != nullptr && h.back()->accept) {
      by_scene[item->scene_id].push_back(item);
    }
  }
  auto cov = [&](const std::string &id) {
    const auto it = coverage.find(id);
    return it == coverage.end() ? 0LL : it->second;
  };
  std::set<std::string> exported;
  for (auto &[scene, items] : by_scene) {
    std::sort(items.begin(), items.end(), [&](const BenchmarkItem *a, const BenchmarkItem *b) {
      const long long ca = cov(a->pair_id), cb = cov(b->pair_id);
      return ca != cb ? ca > cb : a->pair_id < b->pair_id;
    });
    for (std::size_t i = 0; i < items.size() && i < per_scene_cap; ++i) {
      exported.insert(items[i]->pair_id);
    }
  }

  CuratedExport out;
  out.manifest.format_version = manifest.format_version;
  out.manifest.edges = manifest.edges;
  out.manifest.config = manifest.config;
  out.manifest.config["curated"] = {{"per_scene_cap", per_scene_cap}, {"source_items", manifest.items.size()}};
  for (const auto &item : manifest.items) {
    if (exported.count(item.pair_id) != 0) {
      out.manifest.items.push_back(item);
    }
  }
  if (out.manifest.items.size() >= 3) {
    rebin(out.manifest);
  }
  out.sidecar = nlohmann::json::object();
  for (const auto &[pair_id, h] : history) {
    nlohmann::json hist = nlohmann::json::array();
    for (const VetDecision *d : h) {
      hist.push_back(to_json(*d));
    }
    const VetDecision &latest = *h.back();
    std::string status = "exported";
    if (manifest.find(pair_id) == nullptr) {
      status = "not_in_manifest";
    } else if (!latest.accept) {
      status = "rejected";
    } else if (exported.count(pair_id) == 0) {
      status = "scene_cap";
    }
    out.sidecar[pair_id] = {{"decision", latest.accept ? "accept" : "reject"},
                            {"reason", to_string(latest.reason)},
                            {"note", latest.note},
                            {"status", status},
                            {"coverage", cov(pair_id)},
                            {"history", hist}};
  }
  return out;
}

std::map<std::string, long long> coverage_from_log(const std::filesystem::path &sessions_log) {
  std::map<std::string, long long> cov;
  std::set<std::pair<std::string, std::string>> seen;
  if (!std::filesystem::exists(sessions_log)) {
    return cov;
  }
  for (const auto &r : read_jsonl(sessions_log)) {
    if (r.value("type", "") == "serve" &&
        seen.emplace(r.at("token").get<std::string>(), r.at("pair_id").get<std::string>()).second) {
      ++cov[r.at("pair_id").get<std::string>()];
    }
  }
  return cov;
}

} // namespace forge
