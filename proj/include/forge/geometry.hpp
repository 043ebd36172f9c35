#pragma once

#include "forge/raster.hpp"
#include "forge/scene_bundle.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace forge {

/// Dense binary mask over a width x height grid.
class PixelMask {
public:
  PixelMask() = default;
  PixelMask(int width, int height) : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, 0) {}

  static PixelMask from_instance(const InstanceMap &instances, InstanceId id);
  static PixelMask from_rect(int width, int height, const Rect &rect);

  int width() const { return width_; }
  int height() const { return height_; }
  long long area() const { return area_; }
  bool empty() const { return area_ == 0; }

  bool test(int x, int y) const { return bits_[index(x, y)] != 0; }
  /// Returns true if the bit was newly set.
  bool set(int x, int y) {
    std::uint8_t &b = bits_[index(x, y)];
    if (b != 0) {
      return false;
    }
    b = 1;
    ++area_;
    return true;
  }
  void reset(int x, int y) {
    std::uint8_t &b = bits_[index(x, y)];
    if (b != 0) {
      b = 0;
      --area_;
    }
  }

  /// Tight bounding box; empty Rect when the mask is empty.
  Rect bbox() const;
  std::vector<Pixel> pixels() const;
  PixelMask united(const PixelMask &other) const;

  const std::vector<std::uint8_t> &bits() const { return bits_; }

  friend bool operator==(const PixelMask &a, const PixelMask &b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_;
  }

private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  long long area_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Maps points from camera A's frame into camera B's: X_b = rotation * X_a + translation.
struct RelativePose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

RelativePose relative_pose(const CameraModel &cam_a, const CameraModel &cam_b);
RelativePose compose(const RelativePose &second, const RelativePose &first);

/// Continuous destination pixel of source pixel (u, v) at planar depth z.
/// Returns nullopt when the point lands at or behind the destination camera.
std::optional<Eigen::Vector2d> reproject_point(double u, double v, double depth, const CameraModel &cam_src,
                                               const CameraModel &cam_dst);

/// Projects every masked source pixel with valid depth into the destination
/// image, rounding to the nearest pixel (half-up) and dropping points that
/// fall outside [0, dst_width) x [0, dst_height) or at z <= 0.
PixelMask reproject_mask(const PixelMask &mask, const DepthMap &depth, const CameraModel &cam_src,
                         const CameraModel &cam_dst, int dst_width, int dst_height);

/// area(reproject(O in v3 -> v2)) / area(O in v2). Not clamped.
/// Throws DegenerateInputError if O has no pixels in v2.
double projected_area_fraction(InstanceId object_id, const ViewFrame &v3, const ViewFrame &v2);

/// IDs with at least `min_area_px` pixels in the frame, ascending.
std::vector<InstanceId> visible_instances(const ViewFrame &frame, long long min_area_px);

/// Intersection-over-union of the visible instance ID sets. Defined as 0
/// when both sets are empty.
double object_set_overlap(const ViewFrame &frame_a, const ViewFrame &frame_b, long long min_area_px = 100);

struct RollEstimate {
  double degrees = 0.0;
  /// Set when the forward axis is reversed between the cameras; the twist
  /// about it is then undefined and `degrees` is 0 by convention.
  bool degenerate = false;
};

/// Roll of camera B relative to camera A: the twist angle, about A's forward
/// (+Z) axis, in the swing-twist decomposition of B's orientation expressed
/// in A's frame. Right-handed about +Z, range (-180, 180].
RollEstimate camera_roll(const CameraModel &cam_a, const CameraModel &cam_b);
double camera_roll_deg(const CameraModel &cam_a, const CameraModel &cam_b);

/// Right-handed rotation about a unit axis.
Eigen::Matrix3d axis_angle(const Eigen::Vector3d &axis, double radians);

} // namespace forge
