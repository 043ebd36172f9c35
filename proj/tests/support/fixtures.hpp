#pragma once

#include "forge/benchmark_build.hpp"
#include "forge/scene_bundle.hpp"
#include "forge/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace forge::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag = "forge");
  ~TempDir();
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Camera at the origin looking along +Z with f = width and a centered principal point.
CameraModel simple_camera(int width, int height);

/// All-background frame with uniform depth and a flat gray image.
ViewFrame flat_frame(const std::string &id, int width, int height, float depth = 4.0f);

/// Paints an instance rectangle with a per-pixel color pattern.
void paint_rect(ViewFrame &frame, const Rect &rect, InstanceId id, float depth = 0.0f);

/// Rendered random room scene, small enough for exhaustive checks.
SceneBundle micro_bundle(std::uint64_t seed, int frames, int objects, int width = 64, int height = 48);

/// Manifest of `n` items with random label counts in [min_labels, max_labels],
/// random answers and scalars, binned. No images behind it.
BenchmarkManifest synthetic_manifest(int n, std::uint64_t seed, int min_labels = 2, int max_labels = 26);

} // namespace forge::testing
