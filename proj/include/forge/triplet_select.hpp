#pragma once

#include "forge/scene_bundle.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace forge {

struct SelectionConfig {
  double overlap_max = 0.75;
  double area_min = 0.05;
  double area_max = 0.10;
  double proj_area_min = 0.40;
  long long visibility_floor_px = 100;
  std::uint64_t rng_seed = 0;
  /// Ordered frame triples considered per scene, after the seeded shuffle.
  std::size_t max_triples = 512;
  /// Worker threads used to check candidates; output order is unaffected.
  int workers = 1;

  /// Throws std::invalid_argument when thresholds are inconsistent.
  void validate() const;
};

SelectionConfig selection_config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const SelectionConfig &cfg);

enum class FailReason {
  kNotVisible,
  kOverlapV1V2,
  kOverlapV2V3,
  kAreaMin,
  kAreaMax,
  kProjection,
};

const char *to_string(FailReason reason);
FailReason fail_reason_from_string(const std::string &s);

/// Values measured while checking a candidate. The projection fraction is
/// absent when the object has no pixels in V2.
struct Measurements {
  long long area_v1 = 0;
  long long area_v2 = 0;
  long long area_v3 = 0;
  double overlap_v1v2 = 0.0;
  double overlap_v2v3 = 0.0;
  double area_fraction_v2 = 0.0;
  std::optional<double> projected_fraction;
};

struct Verdict {
  std::vector<FailReason> failures; // empty means pass, listed in FailReason order
  Measurements measured;

  bool passed() const { return failures.empty(); }
};

struct TripletCandidate {
  std::string scene_id;
  std::string v1_id;
  std::string v2_id;
  std::string v3_id;
  InstanceId object_id = 0;
  std::optional<Verdict> verdict;
};

nlohmann::json to_json(const TripletCandidate &cand);
TripletCandidate candidate_from_json(const nlohmann::json &j);

class SelectionError : public Error {
public:
  using Error::Error;
};

/// Applies all five selection criteria and reports every violation.
/// Throws SelectionError on unknown frames/objects or repeated frame IDs.
Verdict check_candidate(const SceneBundle &bundle, const TripletCandidate &cand, const SelectionConfig &cfg);

/// Visits candidates in deterministic order: ordered triples of distinct
/// frames (generated lexicographically by frame ID, then shuffled with
/// cfg.rng_seed and truncated to cfg.max_triples), and within each triple the
/// objects with pixels in all three frames in ascending ID. The sink returns
/// false to stop early.
void enumerate_candidates(const SceneBundle &bundle, const SelectionConfig &cfg,
                          const std::function<bool(const TripletCandidate &)> &sink);
std::vector<TripletCandidate> enumerate_candidates(const SceneBundle &bundle, const SelectionConfig &cfg);

struct SampleResult {
  std::vector<TripletCandidate> candidates;
  bool exhausted = false; // enumeration ran out before min(n, cap) passing candidates
};

/// First n passing candidates in enumeration order, at most per_scene_cap
/// from this scene when set.
SampleResult sample_passing(const SceneBundle &bundle, const SelectionConfig &cfg, std::size_t n,
                            std::optional<std::size_t> per_scene_cap = 2);

} // namespace forge
