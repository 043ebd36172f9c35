#include "forge/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace forge {

PixelMask PixelMask::from_instance(const InstanceMap &instances, InstanceId id) {
  PixelMask mask(instances.width(), instances.height());
  const auto &data = instances.storage();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] == id) {
      mask.bits_[i] = 1;
      ++mask.area_;
    }
  }
  return mask;
}

PixelMask PixelMask::from_rect(int width, int height, const Rect &rect) {
  PixelMask mask(width, height);
  const Rect r = rect.intersect(Rect{0, 0, width, height});
  for (int y = r.y; y < r.bottom(); ++y) {
    for (int x = r.x; x < r.right(); ++x) {
      mask.set(x, y);
    }
  }
  return mask;
}

Rect PixelMask::bbox() const {
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    const std::uint8_t *row = bits_.data() + static_cast<std::size_t>(y) * width_;
    for (int x = 0; x < width_; ++x) {
      if (row[x] != 0) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = y;
      }
    }
  }
  if (x1 < 0) {
    return Rect{};
  }
  return Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

std::vector<Pixel> PixelMask::pixels() const {
  std::vector<Pixel> out;
  out.reserve(static_cast<std::size_t>(area_));
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (bits_[index(x, y)] != 0) {
        out.push_back(Pixel{x, y});
      }
    }
  }
  return out;
}

PixelMask PixelMask::united(const PixelMask &other) const {
  PixelMask out = *this;
  for (std::size_t i = 0; i < bits_.size() && i < other.bits_.size(); ++i) {
    if (other.bits_[i] != 0 && out.bits_[i] == 0) {
      out.bits_[i] = 1;
      ++out.area_;
    }
  }
  return out;
}

RelativePose relative_pose(const CameraModel &cam_a, const CameraModel &cam_b) {
  // X_w = Ra X_a + ta ; X_b = Rb^T (X_w - tb)
  const Eigen::Matrix3d rb_t = cam_b.rotation().transpose();
  RelativePose pose;
  pose.rotation = rb_t * cam_a.rotation();
  pose.translation = rb_t * (cam_a.translation() - cam_b.translation());
  return pose;
}

RelativePose compose(const RelativePose &second, const RelativePose &first) {
  RelativePose out;
  out.rotation = second.rotation * first.rotation;
  out.translation = second.rotation * first.translation + second.translation;
  return out;
}

namespace {

struct Projector {
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
  double inv_fx, inv_fy, cx_src, cy_src;
  double fx, fy, cx_dst, cy_dst;

  Projector(const CameraModel &src, const CameraModel &dst) {
    const RelativePose pose = relative_pose(src, dst);
    rotation = pose.rotation;
    translation = pose.translation;
    inv_fx = 1.0 / src.fx;
    inv_fy = 1.0 / src.fy;
    cx_src = src.cx;
    cy_src = src.cy;
    fx = dst.fx;
    fy = dst.fy;
    cx_dst = dst.cx;
    cy_dst = dst.cy;
  }

  std::optional<Eigen::Vector2d> operator()(double u, double v, double z) const {
    const Eigen::Vector3d src((u - cx_src) * inv_fx * z, (v - cy_src) * inv_fy * z, z);
    const Eigen::Vector3d dst = rotation * src + translation;
    if (!(dst.z() > 0.0)) {
      return std::nullopt;
    }
    return Eigen::Vector2d(fx * dst.x() / dst.z() + cx_dst, fy * dst.y() / dst.z() + cy_dst);
  }
};

} // namespace

std::optional<Eigen::Vector2d> reproject_point(double u, double v, double depth, const CameraModel &cam_src,
                                               const CameraModel &cam_dst) {
  return Projector(cam_src, cam_dst)(u, v, depth);
}

PixelMask reproject_mask(const PixelMask &mask, const DepthMap &depth, const CameraModel &cam_src,
                         const CameraModel &cam_dst, int dst_width, int dst_height) {
  PixelMask out(dst_width, dst_height);
  const Projector project(cam_src, cam_dst);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.test(x, y)) {
        continue;
      }
      const float z = depth.at(x, y);
      if (!(z > 0.0f)) {
        continue;
      }
      const auto p = project(x, y, z);
      if (!p) {
        continue;
      }
      const double fu = std::floor(p->x() + 0.5);
      const double fv = std::floor(p->y() + 0.5);
      if (fu < 0.0 || fv < 0.0 || fu >= dst_width || fv >= dst_height) {
        continue;
      }
      out.set(static_cast<int>(fu), static_cast<int>(fv));
    }
  }
  return out;
}

double projected_area_fraction(InstanceId object_id, const ViewFrame &v3, const ViewFrame &v2) {
  const PixelMask in_v2 = PixelMask::from_instance(v2.instances, object_id);
  if (in_v2.empty()) {
    throw DegenerateInputError("object " + std::to_string(object_id) + " has zero area in frame '" +
                               v2.frame_id + "'");
  }
  const PixelMask in_v3 = PixelMask::from_instance(v3.instances, object_id);
  const PixelMask projected = reproject_mask(in_v3, v3.depth, v3.camera, v2.camera, v2.width(), v2.height());
  return static_cast<double>(projected.area()) / static_cast<double>(in_v2.area());
}

std::vector<InstanceId> visible_instances(const ViewFrame &frame, long long min_area_px) {
  std::vector<InstanceId> ids;
  for (const auto &[id, stat] : instance_stats(frame)) {
    if (stat.area_px >= min_area_px) {
      ids.push_back(id);
    }
  }
  return ids;
}

double object_set_overlap(const ViewFrame &frame_a, const ViewFrame &frame_b, long long min_area_px) {
  const std::vector<InstanceId> a = visible_instances(frame_a, min_area_px);
  const std::vector<InstanceId> b = visible_instances(frame_b, min_area_px);
  std::vector<InstanceId> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const std::size_t uni = a.size() + b.size() - common.size();
  if (uni == 0) {
    return 0.0;
  }
  return static_cast<double>(common.size()) / static_cast<double>(uni);
}

RollEstimate camera_roll(const CameraModel &cam_a, const CameraModel &cam_b) {
  // Orientation of B in A's frame is the transpose of the relative rotation.
  const Eigen::Matrix3d orientation = relative_pose(cam_a, cam_b).rotation.transpose();
  const Eigen::Quaterniond q(orientation);
  // Twist about +Z: project the quaternion onto (w, z).
  const double w = q.w();
  const double z = q.z();
  // hypot(w, z) = cos(swing / 2); degenerate within 1e-6 rad of a 180-degree swing.
  if (std::hypot(w, z) < 0.5e-6) {
    return RollEstimate{0.0, true};
  }
  double deg = 2.0 * std::atan2(z, w) * 180.0 / std::numbers::pi;
  // Quaternion sign ambiguity: fold into (-180, 180].
  if (deg > 180.0) {
    deg -= 360.0;
  } else if (deg <= -180.0) {
    deg += 360.0;
  }
  return RollEstimate{deg, false};
}

double camera_roll_deg(const CameraModel &cam_a, const CameraModel &cam_b) { return camera_roll(cam_a, cam_b).degrees; }

Eigen::Matrix3d axis_angle(const Eigen::Vector3d &axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

} // namespace forge
