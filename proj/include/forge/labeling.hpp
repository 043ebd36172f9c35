#pragma once

#include "forge/error.hpp"
#include "forge/raster.hpp"
#include "forge/scene_bundle.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <string>
#include <vector>

namespace forge {

struct LabelingConfig {
  /// Pixel thresholds stated for a 1024x768 image; scaled by image area.
  double base_threshold_px = 1000.0;
  double floor_px = 300.0;
  int max_labels = 26;
  /// Relax the threshold while fewer than this many objects qualify.
  int min_labels = 5;
};

struct ScaledThresholds {
  double threshold = 0.0;
  double floor = 0.0;
};

ScaledThresholds scaled_thresholds(int width, int height, const LabelingConfig &cfg);

class UnlabelableError : public Error {
public:
  using Error::Error;
};

/// Core selection over per-object areas. Result is ordered by area
/// descending, ID ascending. Throws UnlabelableError when the answer is
/// absent or smaller than the floor.
std::vector<InstanceId> select_by_area(const std::map<InstanceId, long long> &areas, InstanceId answer,
                                       const ScaledThresholds &thresholds, const LabelingConfig &cfg);

std::vector<InstanceId> select_labelable(const InstanceMap &instances, InstanceId answer,
                                         const LabelingConfig &cfg = {});

struct LabelEntry {
  char letter = 'A';
  InstanceId object_id = 0;
  Pixel anchor;
  long long area_px = 0;
};

struct LabelAssignment {
  std::vector<LabelEntry> entries; // in letter order
  char answer_letter = 'A';
};

/// Letters follow the raster order of rounded mask centroids (y, then x,
/// then ID).
LabelAssignment assign_letters(const InstanceMap &instances, const std::vector<InstanceId> &objects,
                               InstanceId answer);

using Rgb = std::array<std::uint8_t, 3>;

struct LabelStyle {
  double glyph_height = 0.035; // fraction of image height
  Rgb fill = {255, 255, 255};
  Rgb outline = {0, 0, 0};
};

struct TagPlacement {
  char letter = 'A';
  Rect box;
};

/// Tag footprints in letter order: centered on the anchor, kept inside the
/// image, and moved down (then up) in whole tag heights to avoid earlier tags.
std::vector<TagPlacement> layout_tags(int width, int height, const LabelAssignment &assignment,
                                      const LabelStyle &style = {});

/// Integer glyph magnification for an image of the given height.
int glyph_scale(int image_height, const LabelStyle &style);

RgbImage render_labels(const RgbImage &image, const LabelAssignment &assignment, const LabelStyle &style = {});

struct AnswerKey {
  struct Letter {
    char letter = 'A';
    InstanceId object_id = 0;
    std::string category;
  };
  std::string pair_id;
  char answer_letter = 'A';
  std::vector<Letter> letters;

  int num_labels() const { return static_cast<int>(letters.size()); }
};

AnswerKey make_answer_key(const std::string &pair_id, const LabelAssignment &assignment,
                          const std::map<InstanceId, InstanceInfo> &instance_table);

nlohmann::json to_json(const AnswerKey &key);
AnswerKey answer_key_from_json(const nlohmann::json &j);

} // namespace forge
