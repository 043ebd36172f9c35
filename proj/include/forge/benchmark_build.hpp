#pragma once

#include "forge/chat_client.hpp"
#include "forge/error.hpp"
#include "forge/labeling.hpp"
#include "forge/scene_bundle.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace forge {

constexpr int kManifestFormatVersion = 1;
constexpr double kPlausibleRollDeg = 5.0;

/// Median of the valid (> 0, finite) depths under the object's mask.
/// Throws Error when there are none.
double object_depth(const ViewFrame &v1, InstanceId object_id);

/// Mean Rec. 709 luma over all pixels of both images.
double pair_brightness(const RgbImage &v1, const RgbImage &v2);

struct Plausibility {
  double roll_deg = 0.0;
  bool degenerate = false;
  bool plausible = true;
};

Plausibility plausibility(const CameraModel &v2_cam, const CameraModel &v3_cam);
/// Label rule on a stored roll value; degenerate rolls count as plausible.
bool is_plausible(double roll_deg, bool degenerate);

/// Everything `forge generate` records per pair (meta.json).
struct PairMeta {
  std::string pair_id;
  std::string scene_id;
  std::string variant;
  double expansion = 0.0;
  InstanceId answer_object = 0;
  std::string object_category;
  double depth_m = 0.0;
  double brightness = 0.0;
  double roll_deg = 0.0;
  bool roll_degenerate = false;
  std::string scene_category = "uncategorized";
  nlohmann::json provenance = nlohmann::json::object();
};

PairMeta pair_meta_from_json(const nlohmann::json &j);
nlohmann::json to_json(const PairMeta &m);

struct BenchmarkItem {
  std::string pair_id;
  std::string scene_id;
  std::string view1; // labeled V1, relative to the manifest's directory
  std::string view2; // edited V2
  char answer_letter = 'A';
  int num_labels = 0;
  double depth_m = 0.0;
  std::string depth_bin;
  double brightness = 0.0;
  std::string light_bin;
  bool plausible = true;
  double roll_deg = 0.0;
  bool roll_degenerate = false;
  std::string object_category;
  std::string scene_category;
  std::string variant;
  double expansion = 0.0;
  nlohmann::json provenance = nlohmann::json::object();

  std::string valid_letters() const; // "ABCDE" for num_labels == 5
};

struct BinEdges {
  double depth[2] = {0.0, 0.0};
  double light[2] = {0.0, 0.0};
};

struct BenchmarkManifest {
  int format_version = kManifestFormatVersion;
  std::vector<BenchmarkItem> items; // sorted by pair_id
  BinEdges edges;
  nlohmann::json config = nlohmann::json::object();

  const BenchmarkItem *find(const std::string &pair_id) const;
};

extern const char *const kDepthBins[3]; // close, medium, far
extern const char *const kLightBins[3]; // dark, medium, bright

class ManifestError : public Error {
public:
  ManifestError(const std::string &what, std::vector<std::string> missing) : Error(what), missing_(std::move(missing)) {}
  const std::vector<std::string> &missing() const { return missing_; }

private:
  std::vector<std::string> missing_;
};

struct ManifestInput {
  PairMeta meta;
  std::string view1;
  std::string view2;
};

/// Joins metadata with answer keys, sorts by pair_id and assigns tertile
/// bins. Pairs lacking a key (or keys lacking metadata) throw ManifestError
/// listing them, unless allow_partial, in which case they are dropped.
BenchmarkManifest build_manifest(const std::vector<ManifestInput> &pairs, const std::vector<AnswerKey> &keys,
                                 const nlohmann::json &config, bool allow_partial = false);

/// Recomputes depth/light bins and edges from the item scalars.
void rebin(BenchmarkManifest &manifest);

/// Edge/bin agreement and tertile population check.
bool manifest_consistent(const BenchmarkManifest &manifest);

double expected_random_accuracy(const BenchmarkManifest &manifest);

/// JSONL: a header record {"record":"header", format_version, bin_edges,
/// config} followed by one {"record":"item", ...} per item.
void write_manifest(const BenchmarkManifest &manifest, const std::filesystem::path &path);
BenchmarkManifest read_manifest(const std::filesystem::path &path);
std::vector<nlohmann::json> manifest_records(const BenchmarkManifest &manifest);

nlohmann::json to_json(const BenchmarkItem &item);
BenchmarkItem benchmark_item_from_json(const nlohmann::json &j);

/// Lowercase [a-z0-9_] token; "misc" when nothing is left.
std::string normalize_category(const std::string &label);

struct SceneCategoryInput {
  std::string pair_id;
  std::vector<std::uint8_t> view1_png; // unmodified V1
  std::vector<std::uint8_t> view2_png; // unmodified V2
};

struct SceneCategorization {
  std::vector<std::string> categories; // aligned with the input
  std::string model;
  std::string prompt_sha256;
  std::vector<std::string> errors;
};

/// Two stages: one caption per pair, then a single batch call mapping all
/// captions to scene categories. Any failure leaves the affected pairs
/// "uncategorized".
SceneCategorization categorize_scenes(const ChatClient &labeler, const std::vector<SceneCategoryInput> &pairs);

extern const char *const kCaptionPrompt;
extern const char *const kCategoryPrompt;

} // namespace forge
