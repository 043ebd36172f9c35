#pragma once

#include "forge/benchmark_build.hpp"
#include "forge/compositor.hpp"
#include "forge/labeling.hpp"
#include "forge/scene_bundle.hpp"
#include "forge/synth.hpp"
#include "forge/triplet_select.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace forge {

/// Renders `num_scenes` random scenes into `out_dir/<scene_id>/`.
std::vector<std::string> synth_corpus(const std::filesystem::path &out_dir, int num_scenes,
                                      const synth::RandomSceneOptions &options, std::uint64_t seed);

/// Scenes are named "synth_000", "synth_001", ...
std::vector<SceneBundle> synth_bundles(int num_scenes, const synth::RandomSceneOptions &options, std::uint64_t seed);

/// Every subdirectory of `root` holding a manifest.json, keyed by scene_id.
std::map<std::string, std::shared_ptr<const SceneBundle>> load_bundles(const std::filesystem::path &root);

struct GenerateOptions {
  Variant variant = Variant::kInconsistent;
  double expansion = 0.05;
  std::optional<int> extra_objects; // multi_self_paste; nullopt = all
  InpaintBackend backend;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Also write view1_clean.png (unlabeled V1) and view2_orig.png (unedited V2).
  bool write_twins = true;
  LabelingConfig labeling;
  LabelStyle style;
  int png_compression = 1;
};

struct StageTimes {
  double select_s = 0.0;
  double inpaint_s = 0.0;
  double paste_s = 0.0;
  double encode_s = 0.0;
};

struct GeneratedPair {
  std::string pair_id;
  std::optional<AnswerKey> key;
  std::optional<PairMeta> meta;
  std::string error; // non-empty when the pair was discarded
  StageTimes times;
};

struct GenerateReport {
  std::vector<GeneratedPair> pairs; // in candidate order
  StageTimes totals;
  double wall_s = 0.0;
  std::size_t ok_count() const;
};

/// Labels, edits and encodes one pair. With `out_dir`, writes
/// `<out_dir>/<pair_id>/{view1.png, view2.png, meta.json[, twins]}`.
GeneratedPair generate_pair(const SceneBundle &bundle, const TripletCandidate &candidate, const GenerateOptions &options,
                            const std::optional<std::filesystem::path> &out_dir);

/// Runs generate_pair over all candidates on a bounded worker pool; output
/// order follows the input. Writes keys.jsonl and failures.jsonl to out_dir
/// when given.
GenerateReport generate_pairs(const std::map<std::string, std::shared_ptr<const SceneBundle>> &bundles,
                              const std::vector<TripletCandidate> &candidates, const GenerateOptions &options,
                              const std::optional<std::filesystem::path> &out_dir);

/// Reads every `<pairs_dir>/*/meta.json` and `keys` and builds the manifest
/// with image paths relative to the manifest's directory.
BenchmarkManifest manifest_from_pairs_dir(const std::filesystem::path &pairs_dir, const std::filesystem::path &keys_path,
                                          const std::filesystem::path &manifest_path, const nlohmann::json &config,
                                          bool allow_partial = false);

struct SweepTreatment {
  std::string name; // subdirectory, e.g. "expansion_e25" or "multi_k3"
  Variant variant = Variant::kExpansionSweep;
  double expansion = 0.05;
  std::optional<int> extra_objects;
};

std::vector<SweepTreatment> expansion_sweep_treatments();
std::vector<SweepTreatment> self_paste_count_treatments(double expansion);

struct SweepResult {
  SweepTreatment treatment;
  std::filesystem::path manifest_path;
  std::size_t pairs = 0;
};

/// One pairs directory and manifest per treatment under out_dir.
std::vector<SweepResult> run_sweep(const std::map<std::string, std::shared_ptr<const SceneBundle>> &bundles,
                                   const std::vector<TripletCandidate> &candidates,
                                   const std::vector<SweepTreatment> &treatments, const GenerateOptions &base,
                                   const std::filesystem::path &out_dir);

struct ThroughputReport {
  std::size_t pairs = 0;
  int workers = 1;
  double wall_s = 0.0;
  std::optional<double> pairs_per_sec; // absent when no pair was produced
  StageTimes stage_totals;
};

nlohmann::json to_json(const ThroughputReport &r);

/// Selection (per scene, up to `pairs_per_scene`) plus generation with PNG
/// encoding in memory, timed end to end.
ThroughputReport generation_throughput(const std::vector<std::shared_ptr<const SceneBundle>> &bundles,
                                       const SelectionConfig &selection, const GenerateOptions &options,
                                       std::size_t pairs_per_scene, std::size_t max_pairs);

} // namespace forge
