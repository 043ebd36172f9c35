#pragma once

#include "forge/scene_bundle.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace forge::synth {

/// Box resting in a room, rotated about the vertical (world +Y, pointing down) axis.
struct Box {
  InstanceId id = 0;
  std::string category;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extent = Eigen::Vector3d::Constant(0.5);
  double yaw = 0.0; // radians
  std::array<std::uint8_t, 3> color{128, 128, 128};
  int pattern = 0;
};

/// Axis-aligned room [-half_size, half_size] in x/z, ceiling at y = -ceiling,
/// floor at y = +floor. Room surfaces are background (instance 0).
struct Room {
  double half_size = 5.0;
  double floor = 1.4;
  double ceiling = 1.6;
};

struct SceneSpec {
  std::string scene_id;
  int width = 160;
  int height = 120;
  Room room;
  std::vector<Box> boxes;
  std::vector<std::pair<std::string, CameraModel>> cameras;
  std::uint64_t texture_seed = 0;
};

/// Camera at `position` with orientation yaw (about down axis) * pitch (about
/// right axis, positive looks down) * roll (about forward axis).
CameraModel make_camera(int width, int height, double focal_scale, const Eigen::Vector3d &position,
                        double yaw_deg, double pitch_down_deg, double roll_deg);

struct RandomSceneOptions {
  int width = 160;
  int height = 120;
  int num_frames = 5;
  int num_objects = 10;
  int num_occluders = 2;
  double focal_scale = 0.8;
};

/// Ring of boxes around the room center viewed from cameras near the center
/// that sweep in yaw, with small pitch and roll jitter.
SceneSpec random_scene(const std::string &scene_id, const RandomSceneOptions &options, std::uint64_t seed);

struct Hit {
  double depth = 0.0; // planar depth along the camera's optical axis
  InstanceId id = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  int box_index = -1;
};

/// Nearest surface hit along the ray through pixel (u, v).
std::optional<Hit> cast_pixel(const SceneSpec &spec, const CameraModel &camera, double u, double v);

SceneBundle render(const SceneSpec &spec);

/// Projects a world point with the given camera; nullopt when z <= 0.
std::optional<Eigen::Vector3d> project_world(const CameraModel &camera, const Eigen::Vector3d &world);

} // namespace forge::synth
