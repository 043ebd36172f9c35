#pragma once

#include "forge/error.hpp"
#include "forge/raster.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace forge {

/// Pinhole camera. Camera axes: +X right, +Y down, +Z forward. Pixel (u, v)
/// at planar depth z back-projects to ((u - cx) / fx * z, (v - cy) / fy * z, z).
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  /// Rigid transform taking camera-frame points (meters) to world frame.
  Eigen::Matrix4d world_from_camera = Eigen::Matrix4d::Identity();

  Eigen::Matrix3d rotation() const { return world_from_camera.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_from_camera.topRightCorner<3, 1>(); }
};

/// Returns an empty string when the camera satisfies its invariants,
/// otherwise a description of the first violated one.
std::string camera_problem(const CameraModel &camera);

struct ViewFrame {
  std::string frame_id;
  RgbImage rgb;
  /// Planar depth in meters; 0 marks an invalid pixel.
  DepthMap depth;
  /// 0 is background.
  InstanceMap instances;
  CameraModel camera;

  int width() const { return rgb.width(); }
  int height() const { return rgb.height(); }
};

struct InstanceInfo {
  std::string category;
  std::string display_name;
};

struct SceneBundle {
  std::string scene_id;
  std::vector<ViewFrame> frames;
  std::map<InstanceId, InstanceInfo> instance_table;

  /// Throws BundleError(kUnknownFrame) when absent.
  const ViewFrame &frame(const std::string &frame_id) const;
  const ViewFrame *find_frame(const std::string &frame_id) const;
};

class BundleError : public Error {
public:
  enum class Kind {
    kMissingAsset,
    kDimensionMismatch,
    kMalformedCamera,
    kUnknownInstance,
    kMalformedManifest,
    kTooFewFrames,
    kUnknownFrame,
    kIo,
  };

  BundleError(Kind kind, std::string frame, std::string field, const std::string &detail);

  Kind kind() const { return kind_; }
  const std::string &frame() const { return frame_; }
  const std::string &field() const { return field_; }

private:
  Kind kind_;
  std::string frame_;
  std::string field_;
};

const char *to_string(BundleError::Kind kind);

/// Checks every SceneBundle invariant; throws BundleError on the first
/// violation.
void validate_bundle(const SceneBundle &bundle);

/// Loads `<dir>/manifest.json` plus `frames/<frame_id>.{rgb.png,inst.png,depth.bin}`.
SceneBundle load_bundle(const std::filesystem::path &dir);

/// Writes the bundle to `dir` (created if missing). Throws BundleError(kIo).
void write_bundle(const SceneBundle &bundle, const std::filesystem::path &dir);

/// Depth file: 8-byte header ("FDEP", height u16 LE, width u16 LE) followed
/// by height * width float32 LE values, row-major.
std::vector<std::uint8_t> encode_depth(const DepthMap &depth);
DepthMap decode_depth(std::span<const std::uint8_t> bytes);

struct InstanceStat {
  long long area_px = 0;
  Rect bbox;
};

/// Exact per-instance pixel count and tight bounding box, ordered by ID.
/// Background (0) is excluded.
std::map<InstanceId, InstanceStat> instance_stats(const ViewFrame &frame);
std::map<InstanceId, InstanceStat> instance_stats(const InstanceMap &instances);

} // namespace forge
