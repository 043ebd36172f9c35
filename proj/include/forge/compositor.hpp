#pragma once

#include "forge/geometry.hpp"
#include "forge/inpaint.hpp"
#include "forge/labeling.hpp"
#include "forge/scene_bundle.hpp"
#include "forge/triplet_select.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace forge {

enum class Variant { kInconsistent, kSelfPaste, kNoChange, kMultiSelfPaste, kExpansionSweep };

const char *to_string(Variant v);
Variant variant_from_string(const std::string &s);

struct EditRecipe {
  TripletCandidate candidate;
  Variant variant = Variant::kInconsistent;
  /// Fraction of each bbox dimension added on every side.
  double expansion = 0.05;
  /// multi_self_paste only: number of additional objects; nullopt means all.
  std::optional<int> extra_objects;
  InpaintBackend backend;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

nlohmann::json to_json(const EditRecipe &recipe);

struct PasteTransform {
  double scale = 1.0;
  Rect source_box;  // object's tight bbox in the source view
  Rect target_box;  // box the object is fitted into
  Rect placed_box;  // scaled extent actually written
  Pixel dst_center; // center of target_box, rounded
};

nlohmann::json to_json(const PasteTransform &t);

struct EditedPair {
  std::string pair_id;
  RgbImage view1;
  RgbImage view2_edited;
  InstanceId answer_object = 0;
  /// Union of all erased regions (empty for no_change).
  PixelMask inpaint_region;
  std::optional<PasteTransform> paste_transform;
  EditRecipe recipe;
  /// Additional self-pasted objects (multi_self_paste), in paste order.
  std::vector<InstanceId> extra_objects;
};

/// Expands `bbox` by `expansion` of its width/height on each side around its
/// center, rounding half up, then clamps to the image. Throws Error when the
/// result has zero area.
Rect expand_box(const Rect &bbox, double expansion, int width, int height);

struct EraseResult {
  RgbImage raster;
  PixelMask region;
};

EraseResult erase_object(const ViewFrame &v2, InstanceId object_id, double expansion, const InpaintBackend &backend);

struct PasteResult {
  RgbImage raster;
  PixelMask pasted;
  PasteTransform transform;
};

/// Scaled extent of a source box fitted inside a target box, and its origin.
PasteTransform fit_transform(const Rect &source_box, const Rect &target_box);

/// Nearest-neighbor, fit-inside, centered paste of the object's masked
/// pixels from `source` into `base`.
PasteResult paste_object(const RgbImage &base, const ViewFrame &source, InstanceId object_id, const Rect &target_box);

/// Pixels inside `region` that belong to an instance other than background
/// and the edited object are copied back from the original V2.
RgbImage restore_occluders(const RgbImage &composited, const ViewFrame &v2, InstanceId edited_object,
                           const PixelMask &region);

std::string make_pair_id(const EditRecipe &recipe);

/// Objects eligible for multi_self_paste: labelable in V1, present in V2,
/// excluding the answer, in seeded random order.
std::vector<InstanceId> extra_paste_order(const SceneBundle &bundle, const EditRecipe &recipe,
                                          const LabelingConfig &labeling = {});

/// Wall-clock seconds spent in each stage, accumulated across calls.
struct EditTimings {
  double inpaint_s = 0.0;
  double paste_s = 0.0; // paste + occluder restore
};

EditedPair make_pair(const SceneBundle &bundle, const EditRecipe &recipe, const LabelingConfig &labeling = {},
                     EditTimings *timings = nullptr);

} // namespace forge
