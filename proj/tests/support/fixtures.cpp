#include "fixtures.hpp"

#include "forge/rng.hpp"

#include <atomic>
#include <cstdio>
#include <unistd.h>

namespace forge::testing {

TempDir::TempDir(const std::string &tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

CameraModel simple_camera(int width, int height) {
  CameraModel c;
  c.fx = width;
  c.fy = width;
  c.cx = (width - 1) / 2.0;
  c.cy = (height - 1) / 2.0;
  return c;
}

ViewFrame flat_frame(const std::string &id, int width, int height, float depth) {
  ViewFrame f;
  f.frame_id = id;
  f.rgb = RgbImage(width, height, 90);
  f.depth = DepthMap(width, height, depth);
  f.instances = InstanceMap(width, height, 0);
  f.camera = simple_camera(width, height);
  return f;
}

void paint_rect(ViewFrame &frame, const Rect &rect, InstanceId id, float depth) {
  for (int y = rect.y; y < rect.bottom(); ++y) {
    for (int x = rect.x; x < rect.right(); ++x) {
      if (!frame.rgb.in_bounds(x, y)) {
        continue;
      }
      frame.instances.at(x, y) = id;
      frame.rgb.at(x, y, 0) = static_cast<std::uint8_t>(40 * id + 3 * x);
      frame.rgb.at(x, y, 1) = static_cast<std::uint8_t>(17 * id + 5 * y);
      frame.rgb.at(x, y, 2) = static_cast<std::uint8_t>(200 - 7 * id + x * y);
      if (depth > 0.0f) {
        frame.depth.at(x, y) = depth;
      }
    }
  }
}

SceneBundle micro_bundle(std::uint64_t seed, int frames, int objects, int width, int height) {
  synth::RandomSceneOptions o;
  o.width = width;
  o.height = height;
  o.num_frames = frames;
  o.num_objects = objects;
  o.num_occluders = 0;
  char name[32];
  std::snprintf(name, sizeof name, "micro_%llu", static_cast<unsigned long long>(seed));
  return synth::render(synth::random_scene(name, o, seed));
}

BenchmarkManifest synthetic_manifest(int n, std::uint64_t seed, int min_labels, int max_labels) {
  static const char *const kObjects[] = {"chair", "lamp", "table", "sofa", "plant", "shelf"};
  static const char *const kScenes[] = {"kitchen", "bedroom", "office"};
  Rng rng(seed);
  BenchmarkManifest m;
  for (int i = 0; i < n; ++i) {
    BenchmarkItem it;
    char id[32];
    std::snprintf(id, sizeof id, "p%05d", i);
    it.pair_id = id;
    it.scene_id = "s" + std::to_string(i / 3);
    it.view1 = it.pair_id + "/view1.png";
    it.view2 = it.pair_id + "/view2.png";
    it.num_labels = static_cast<int>(rng.range(min_labels, max_labels));
    it.answer_letter = static_cast<char>('A' + rng.below(static_cast<std::uint64_t>(it.num_labels)));
    it.depth_m = rng.uniform(0.5, 8.0);
    it.brightness = rng.uniform(20.0, 230.0);
    it.roll_deg = rng.uniform(-12.0, 12.0);
    it.plausible = is_plausible(it.roll_deg, false);
    it.object_category = kObjects[rng.below(6)];
    it.scene_category = kScenes[rng.below(3)];
    it.variant = "inconsistent";
    it.expansion = 0.05;
    m.items.push_back(std::move(it));
  }
  rebin(m);
  return m;
}

} // namespace forge::testing
