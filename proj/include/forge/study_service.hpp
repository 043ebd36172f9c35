#pragma once

#include "forge/benchmark_build.hpp"
#include "forge/error.hpp"
#include "forge/eval_harness.hpp"
#include "forge/jsonl.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace forge {

enum class StudyMode { kVet, kStudy };
const char *to_string(StudyMode m);
StudyMode study_mode_from_string(const std::string &s);

struct Session {
  std::string token;
  std::string participant_label;
  StudyMode mode = StudyMode::kStudy;
  long long created_ts = 0;
  std::vector<std::string> served;           // in serve order
  std::map<std::string, long long> served_ts; // pair_id -> serve time
  std::set<std::string> answered;
  std::set<std::string> vetted;
};

enum class VetReason { kNone, kInpaintArtifact, kAmbiguous, kObjectTooSmall, kOther };
const char *to_string(VetReason r);
VetReason vet_reason_from_string(const std::string &s);

struct VetDecision {
  std::string pair_id;
  bool accept = false;
  VetReason reason = VetReason::kNone;
  std::string note;
  std::string session_id;
  long long ts = 0;
};

nlohmann::json to_json(const VetDecision &d);
VetDecision vet_decision_from_json(const nlohmann::json &j);

class StudyError : public Error {
public:
  enum class Kind { kAuth, kValidation, kOrdering, kNotFound, kMode };
  StudyError(Kind kind, const std::string &what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }
  int http_status() const;

private:
  Kind kind_;
};

struct StudyConfig {
  /// Holds sessions.jsonl, trials.jsonl and vet.jsonl.
  std::filesystem::path log_dir;
  std::uint64_t seed = 0;
};

struct AnswerAck {
  bool duplicate = false;
};

/// Serves manifest items to human participants and records their answers
/// and vetting decisions in append-only logs that are replayed on startup.
/// Thread-safe.
class StudyService {
public:
  StudyService(BenchmarkManifest manifest, StudyConfig config);
  ~StudyService();

  std::string create_session(const std::string &participant_label, StudyMode mode);

  /// Least-served unserved item for the session (ties in a seeded order), or
  /// nullopt when the session has seen everything. Study-mode payloads never
  /// carry the answer.
  std::optional<nlohmann::json> next_item(const std::string &token);

  AnswerAck record_answer(const std::string &token, const std::string &pair_id, const std::string &letter);
  void record_vet(const std::string &token, const std::string &pair_id, const std::string &decision,
                  const std::string &reason, const std::string &note);

  nlohmann::json human_stats() const;

  std::vector<Trial> trials() const;
  std::vector<VetDecision> vet_log() const;
  std::map<std::string, long long> coverage() const;
  const BenchmarkManifest &manifest() const { return manifest_; }
  std::optional<Session> session(const std::string &token) const;

private:
  void replay();
  Session &require_session(const std::string &token);
  const BenchmarkItem &require_item(const std::string &pair_id) const;

  BenchmarkManifest manifest_;
  StudyConfig config_;
  std::map<std::string, std::size_t> shuffle_rank_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, long long> coverage_;
  std::vector<Trial> trials_;
  std::vector<VetDecision> vets_;
  std::unique_ptr<JsonlAppender> session_log_;
  std::unique_ptr<JsonlAppender> trial_log_;
  std::unique_ptr<JsonlAppender> vet_log_;
};

/// Human accuracy: pooled over every human trial, plus one entry per participant.
nlohmann::json human_stats_report(const std::vector<Trial> &trials, const BenchmarkManifest &manifest);

struct CuratedExport {
  BenchmarkManifest manifest;
  nlohmann::json sidecar; // per decided pair: latest decision, reason, history, exported flag
};

/// Items whose latest decision is accept, at most per_scene_cap per scene
/// (highest coverage first, then pair_id). Bins are recomputed on the subset
/// when it has at least three items.
CuratedExport export_curated(const BenchmarkManifest &manifest, const std::vector<VetDecision> &decisions,
                             const std::map<std::string, long long> &coverage, std::size_t per_scene_cap = 2);

/// Reads the coverage counts back from a sessions log.
std::map<std::string, long long> coverage_from_log(const std::filesystem::path &sessions_log);

} // namespace forge
