#include "forge/synth.hpp"

#include "forge/geometry.hpp"
#include "forge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace forge::synth {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const char *const kCategories[] = {"chair", "table", "cabinet", "lamp", "sofa", "plant", "shelf", "box", "bin", "stool"};

double hash01(std::int64_t x, std::int64_t y, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(x) * 0x9E3779B1ULL +
                                                        static_cast<std::uint64_t>(y) * 0x85EBCA77ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Bilinear value noise in [0, 1].
double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  const double sx = tx * tx * (3 - 2 * tx);
  const double sy = ty * ty * (3 - 2 * ty);
  const double a = hash01(ix, iy, seed);
  const double b = hash01(ix + 1, iy, seed);
  const double c = hash01(ix, iy + 1, seed);
  const double d = hash01(ix + 1, iy + 1, seed);
  return (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
}

struct RayBoxHit {
  double t;
  Eigen::Vector3d normal;
  Eigen::Vector3d local;
};

std::optional<RayBoxHit> intersect_box(const Box &box, const Eigen::Vector3d &origin, const Eigen::Vector3d &dir) {
  const double c = std::cos(-box.yaw);
  const double s = std::sin(-box.yaw);
  // Rotation about +Y by -yaw brings world into box-local coordinates.
  auto to_local = [&](const Eigen::Vector3d &v) { return Eigen::Vector3d(c * v.x() + s * v.z(), v.y(), -s * v.x() + c * v.z()); };
  const Eigen::Vector3d o = to_local(origin - box.center);
  const Eigen::Vector3d d = to_local(dir);
  double t_near = -1e300;
  double t_far = 1e300;
  int axis_near = -1;
  double sign_near = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double e = box.half_extent[a];
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < -e || o[a] > e) {
        return std::nullopt;
      }
      continue;
    }
    double t0 = (-e - o[a]) / d[a];
    double t1 = (e - o[a]) / d[a];
    double sign = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis_near = a;
      sign_near = sign;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) {
      return std::nullopt;
    }
  }
  if (t_near <= 1e-9 || axis_near < 0) {
    return std::nullopt;
  }
  Eigen::Vector3d n_local = Eigen::Vector3d::Zero();
  n_local[axis_near] = sign_near;
  // Back to world: rotation about +Y by +yaw.
  const double cw = std::cos(box.yaw);
  const double sw = std::sin(box.yaw);
  const Eigen::Vector3d n(cw * n_local.x() + sw * n_local.z(), n_local.y(), -sw * n_local.x() + cw * n_local.z());
  return RayBoxHit{t_near, n, o + t_near * d};
}

std::optional<std::pair<double, Eigen::Vector3d>> intersect_room(const Room &room, const Eigen::Vector3d &origin,
                                                                 const Eigen::Vector3d &dir) {
  double best = 1e300;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  auto plane = [&](int axis, double value, double n_sign) {
    if (std::abs(dir[axis]) < 1e-15) {
      return;
    }
    const double t = (value - origin[axis]) / dir[axis];
    if (t > 1e-9 && t < best) {
      best = t;
      normal = Eigen::Vector3d::Zero();
      normal[axis] = n_sign;
    }
  };
  plane(0, -room.half_size, 1.0);
  plane(0, room.half_size, -1.0);
  plane(2, -room.half_size, 1.0);
  plane(2, room.half_size, -1.0);
  plane(1, room.floor, -1.0);
  plane(1, -room.ceiling, 1.0);
  if (best >= 1e299) {
    return std::nullopt;
  }
  return std::make_pair(best, normal);
}

std::array<std::uint8_t, 3> shade(const SceneSpec &spec, const Hit &hit) {
  // Up is -Y in world coordinates.
  static const Eigen::Vector3d to_light = Eigen::Vector3d(-0.35, -0.8, -0.45).normalized();
  const double lambert = 0.45 + 0.55 * std::max(0.0, hit.normal.dot(to_light));
  double r, g, b;
  const Eigen::Vector3d &p = hit.point;
  if (hit.box_index >= 0) {
    const Box &box = spec.boxes[static_cast<std::size_t>(hit.box_index)];
    const std::uint64_t seed = spec.texture_seed ^ (static_cast<std::uint64_t>(box.id) << 20);
    double tex;
    switch (box.pattern % 3) {
    case 0:
      tex = 0.75 + 0.25 * std::sin((p.x() + p.z()) * 18.0 + 4.0 * value_noise(p.y() * 6, p.x() * 6, seed));
      break;
    case 1:
      tex = 0.7 + 0.3 * value_noise(p.x() * 9 + p.z() * 7, p.y() * 9, seed);
      break;
    default:
      tex = ((static_cast<int>(std::floor(p.x() * 6)) + static_cast<int>(std::floor(p.y() * 6)) +
              static_cast<int>(std::floor(p.z() * 6))) & 1) != 0
                ? 0.7
                : 1.0;
      break;
    }
    r = box.color[0] * tex;
    g = box.color[1] * tex;
    b = box.color[2] * tex;
  } else {
    const std::uint64_t seed = spec.texture_seed;
    if (hit.normal.y() < -0.5) { // floor
      const double plank = value_noise(p.x() * 1.5, std::floor(p.z() * 3.0), seed) * 0.3;
      const double grain = value_noise(p.x() * 25.0, p.z() * 2.0, seed + 1) * 0.15;
      r = 150 * (0.7 + plank + grain);
      g = 110 * (0.7 + plank + grain);
      b = 75 * (0.7 + plank + grain);
    } else if (hit.normal.y() > 0.5) { // ceiling
      r = g = b = 225 * (0.9 + 0.1 * value_noise(p.x() * 2, p.z() * 2, seed + 2));
    } else {
      const double n = value_noise((p.x() + p.z()) * 3.0, p.y() * 3.0, seed + 3);
      const double stripe = std::fmod(std::abs(p.x() + p.z()) * 2.0, 1.0) < 0.08 ? 0.85 : 1.0;
      r = 200 * (0.85 + 0.15 * n) * stripe;
      g = 195 * (0.85 + 0.15 * n) * stripe;
      b = 180 * (0.85 + 0.15 * n) * stripe;
    }
  }
  auto clamp8 = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
  return {clamp8(r * lambert), clamp8(g * lambert), clamp8(b * lambert)};
}

} // namespace

CameraModel make_camera(int width, int height, double focal_scale, const Eigen::Vector3d &position, double yaw_deg,
                        double pitch_down_deg, double roll_deg) {
  CameraModel cam;
  cam.fx = focal_scale * width;
  cam.fy = focal_scale * width;
  cam.cx = (width - 1) / 2.0;
  cam.cy = (height - 1) / 2.0;
  const Eigen::Matrix3d r = axis_angle(Eigen::Vector3d::UnitY(), yaw_deg * kDeg) *
                            axis_angle(Eigen::Vector3d::UnitX(), -pitch_down_deg * kDeg) *
                            axis_angle(Eigen::Vector3d::UnitZ(), roll_deg * kDeg);
  cam.world_from_camera.setIdentity();
  cam.world_from_camera.topLeftCorner<3, 3>() = r;
  cam.world_from_camera.topRightCorner<3, 1>() = position;
  return cam;
}

SceneSpec random_scene(const std::string &scene_id, const RandomSceneOptions &options, std::uint64_t seed) {
  Rng rng(seed);
  SceneSpec spec;
  spec.scene_id = scene_id;
  spec.width = options.width;
  spec.height = options.height;
  spec.texture_seed = rng.next();

  const int ring = options.num_objects;
  const double base_angle = rng.uniform(0.0, 360.0);
  InstanceId next_id = 1;
  for (int i = 0; i < ring; ++i) {
    Box box;
    box.id = next_id++;
    box.category = kCategories[rng.below(std::size(kCategories))];
    const double angle = (base_angle + (360.0 / ring) * (i + rng.uniform(-0.2, 0.2))) * kDeg;
    const double radius = rng.uniform(2.6, 3.8);
    box.half_extent = Eigen::Vector3d(rng.uniform(0.3, 0.6), rng.uniform(0.25, 0.65), rng.uniform(0.25, 0.5));
    box.center = Eigen::Vector3d(radius * std::sin(angle), spec.room.floor - box.half_extent.y(), radius * std::cos(angle));
    box.yaw = rng.uniform(-0.6, 0.6);
    box.color = {static_cast<std::uint8_t>(rng.range(40, 230)), static_cast<std::uint8_t>(rng.range(40, 230)),
                 static_cast<std::uint8_t>(rng.range(40, 230))};
    box.pattern = static_cast<int>(rng.below(3));
    spec.boxes.push_back(box);
  }
  for (int i = 0; i < options.num_occluders; ++i) {
    Box box;
    box.id = next_id++;
    box.category = "box";
    const double angle = rng.uniform(0.0, 360.0) * kDeg;
    const double radius = rng.uniform(1.5, 2.1);
    box.half_extent = Eigen::Vector3d(rng.uniform(0.12, 0.25), rng.uniform(0.15, 0.35), rng.uniform(0.12, 0.25));
    box.center = Eigen::Vector3d(radius * std::sin(angle), spec.room.floor - box.half_extent.y(), radius * std::cos(angle));
    box.yaw = rng.uniform(-0.8, 0.8);
    box.color = {static_cast<std::uint8_t>(rng.range(40, 230)), static_cast<std::uint8_t>(rng.range(40, 230)),
                 static_cast<std::uint8_t>(rng.range(40, 230))};
    box.pattern = static_cast<int>(rng.below(3));
    spec.boxes.push_back(box);
  }

  const double step = rng.uniform(18.0, 26.0);
  const double yaw0 = rng.uniform(0.0, 360.0);
  for (int f = 0; f < options.num_frames; ++f) {
    const Eigen::Vector3d pos(rng.uniform(-0.35, 0.35), rng.uniform(-0.15, 0.1), rng.uniform(-0.35, 0.35));
    const double yaw = yaw0 + step * f + rng.uniform(-4.0, 4.0);
    const double pitch = rng.uniform(8.0, 18.0);
    const double roll = rng.uniform(-9.0, 9.0);
    char name[16];
    std::snprintf(name, sizeof(name), "f%03d", f);
    spec.cameras.emplace_back(name, make_camera(spec.width, spec.height, options.focal_scale, pos, yaw, pitch, roll));
  }
  return spec;
}

std::optional<Hit> cast_pixel(const SceneSpec &spec, const CameraModel &camera, double u, double v) {
  const Eigen::Matrix3d r = camera.rotation();
  const Eigen::Vector3d origin = camera.translation();
  // Camera-frame direction has z = 1, so the ray parameter is planar depth.
  const Eigen::Vector3d dir = r * Eigen::Vector3d((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
  Hit hit;
  hit.depth = 1e300;
  for (std::size_t i = 0; i < spec.boxes.size(); ++i) {
    if (const auto h = intersect_box(spec.boxes[i], origin, dir); h && h->t < hit.depth) {
      hit.depth = h->t;
      hit.id = spec.boxes[i].id;
      hit.normal = h->normal;
      hit.box_index = static_cast<int>(i);
    }
  }
  if (const auto room = intersect_room(spec.room, origin, dir); room && room->first < hit.depth) {
    hit.depth = room->first;
    hit.id = 0;
    hit.normal = room->second;
    hit.box_index = -1;
  }
  if (hit.depth >= 1e299) {
    return std::nullopt;
  }
  hit.point = origin + hit.depth * dir;
  return hit;
}

SceneBundle render(const SceneSpec &spec) {
  SceneBundle bundle;
  bundle.scene_id = spec.scene_id;
  for (const Box &box : spec.boxes) {
    bundle.instance_table[box.id] = InstanceInfo{box.category, box.category + " " + std::to_string(box.id)};
  }
  for (const auto &[frame_id, camera] : spec.cameras) {
    ViewFrame frame;
    frame.frame_id = frame_id;
    frame.camera = camera;
    frame.rgb = RgbImage(spec.width, spec.height);
    frame.depth = DepthMap(spec.width, spec.height);
    frame.instances = InstanceMap(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const auto hit = cast_pixel(spec, camera, x, y);
        if (!hit) {
          continue;
        }
        frame.depth.at(x, y) = static_cast<float>(hit->depth);
        frame.instances.at(x, y) = hit->id;
        const auto c = shade(spec, *hit);
        std::uint8_t *px = frame.rgb.pixel(x, y);
        px[0] = c[0];
        px[1] = c[1];
        px[2] = c[2];
      }
    }
    bundle.frames.push_back(std::move(frame));
  }
  return bundle;
}

std::optional<Eigen::Vector3d> project_world(const CameraModel &camera, const Eigen::Vector3d &world) {
  const Eigen::Vector3d cam = camera.rotation().transpose() * (world - camera.translation());
  if (!(cam.z() > 0.0)) {
    return std::nullopt;
  }
  return Eigen::Vector3d(camera.fx * cam.x() / cam.z() + camera.cx, camera.fy * cam.y() / cam.z() + camera.cy, cam.z());
}

} // namespace forge::synth
