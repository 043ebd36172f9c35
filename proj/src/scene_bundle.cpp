#include "forge/scene_bundle.hpp"

#include "forge/png_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace forge {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr char kDepthMagic[4] = {'F', 'D', 'E', 'P'};
constexpr int kFormatVersion = 1;

std::string describe(const std::string &frame, const std::string &field, const std::string &detail) {
  std::string out;
  if (!frame.empty()) {
    out += "frame '" + frame + "'";
  }
  if (!field.empty()) {
    out += out.empty() ? "" : ", ";
    out += "field '" + field + "'";
  }
  if (!out.empty()) {
    out += ": ";
  }
  return out + detail;
}

fs::path frame_asset(const fs::path &dir, const std::string &frame_id, const char *suffix) {
  return dir / "frames" / (frame_id + suffix);
}

double number_field(const json &obj, const std::string &frame, const char *field) {
  const auto it = obj.find(field);
  if (it == obj.end() || !it->is_number()) {
    throw BundleError(BundleError::Kind::kMalformedCamera, frame, field, "missing or non-numeric");
  }
  return it->get<double>();
}

CameraModel parse_camera(const json &frame_json, const std::string &frame) {
  CameraModel cam;
  cam.fx = number_field(frame_json, frame, "fx");
  cam.fy = number_field(frame_json, frame, "fy");
  cam.cx = number_field(frame_json, frame, "cx");
  cam.cy = number_field(frame_json, frame, "cy");
  const auto it = frame_json.find("world_from_camera");
  if (it == frame_json.end() || !it->is_array() || it->size() != 16) {
    throw BundleError(BundleError::Kind::kMalformedCamera, frame, "world_from_camera",
                      "expected 16 row-major numbers");
  }
  for (int i = 0; i < 16; ++i) {
    const json &v = (*it)[static_cast<std::size_t>(i)];
    if (!v.is_number()) {
      throw BundleError(BundleError::Kind::kMalformedCamera, frame, "world_from_camera",
                        "element " + std::to_string(i) + " is not a number");
    }
    cam.world_from_camera(i / 4, i % 4) = v.get<double>();
  }
  return cam;
}

json camera_json(const CameraModel &cam) {
  json m = json::array();
  for (int i = 0; i < 16; ++i) {
    m.push_back(cam.world_from_camera(i / 4, i % 4));
  }
  return json{{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"world_from_camera", m}};
}

void validate_frame(const ViewFrame &frame, const std::map<InstanceId, InstanceInfo> &table) {
  const std::string problem = camera_problem(frame.camera);
  if (!problem.empty()) {
    throw BundleError(BundleError::Kind::kMalformedCamera, frame.frame_id, "camera", problem);
  }
  if (frame.rgb.empty()) {
    throw BundleError(BundleError::Kind::kDimensionMismatch, frame.frame_id, "rgb", "empty raster");
  }
  const int w = frame.rgb.width();
  const int h = frame.rgb.height();
  if (!frame.depth.same_size(w, h)) {
    throw BundleError(BundleError::Kind::kDimensionMismatch, frame.frame_id, "depth",
                      "depth is " + std::to_string(frame.depth.width()) + "x" +
                          std::to_string(frame.depth.height()) + ", rgb is " + std::to_string(w) + "x" +
                          std::to_string(h));
  }
  if (!frame.instances.same_size(w, h)) {
    throw BundleError(BundleError::Kind::kDimensionMismatch, frame.frame_id, "instances",
                      "instance map is " + std::to_string(frame.instances.width()) + "x" +
                          std::to_string(frame.instances.height()) + ", rgb is " + std::to_string(w) + "x" +
                          std::to_string(h));
  }
  for (const InstanceId id : frame.instances.storage()) {
    if (id != 0 && !table.contains(id)) {
      throw BundleError(BundleError::Kind::kUnknownInstance, frame.frame_id, "instances",
                        "instance ID " + std::to_string(id) + " is not in the instance table");
    }
  }
  for (const float d : frame.depth.storage()) {
    if (!(d >= 0.0f) || !std::isfinite(d)) {
      throw BundleError(BundleError::Kind::kMalformedManifest, frame.frame_id, "depth",
                        "depth values must be finite and >= 0");
    }
  }
}

} // namespace

BundleError::BundleError(Kind kind, std::string frame, std::string field, const std::string &detail)
    : Error(std::string(to_string(kind)) + ": " + describe(frame, field, detail)), kind_(kind),
      frame_(std::move(frame)), field_(std::move(field)) {}

const char *to_string(BundleError::Kind kind) {
  switch (kind) {
  case BundleError::Kind::kMissingAsset:
    return "missing asset";
  case BundleError::Kind::kDimensionMismatch:
    return "dimension mismatch";
  case BundleError::Kind::kMalformedCamera:
    return "malformed camera";
  case BundleError::Kind::kUnknownInstance:
    return "unknown instance ID";
  case BundleError::Kind::kMalformedManifest:
    return "malformed manifest";
  case BundleError::Kind::kTooFewFrames:
    return "too few frames";
  case BundleError::Kind::kUnknownFrame:
    return "unknown frame";
  case BundleError::Kind::kIo:
    return "I/O failure";
  }
  return "bundle error";
}

std::string camera_problem(const CameraModel &camera) {
  if (!(camera.fx > 0.0) || !(camera.fy > 0.0)) {
    return "focal lengths must be positive";
  }
  if (!std::isfinite(camera.cx) || !std::isfinite(camera.cy)) {
    return "principal point must be finite";
  }
  const Eigen::Matrix4d &m = camera.world_from_camera;
  if (!m.allFinite()) {
    return "world_from_camera has non-finite entries";
  }
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    return "bottom row of world_from_camera must be (0,0,0,1)";
  }
  const Eigen::Matrix3d r = camera.rotation();
  if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    return "rotation block is not orthonormal";
  }
  if (std::abs(r.determinant() - 1.0) > 1e-6) {
    return "rotation block is a reflection";
  }
  return {};
}

const ViewFrame *SceneBundle::find_frame(const std::string &frame_id) const {
  for (const ViewFrame &f : frames) {
    if (f.frame_id == frame_id) {
      return &f;
    }
  }
  return nullptr;
}

const ViewFrame &SceneBundle::frame(const std::string &frame_id) const {
  const ViewFrame *f = find_frame(frame_id);
  if (f == nullptr) {
    throw BundleError(BundleError::Kind::kUnknownFrame, frame_id, "", "not in scene '" + scene_id + "'");
  }
  return *f;
}

void validate_bundle(const SceneBundle &bundle) {
  if (bundle.frames.size() < 3) {
    throw BundleError(BundleError::Kind::kTooFewFrames, "", "frames",
                      "need at least 3 frames, have " + std::to_string(bundle.frames.size()));
  }
  std::set<std::string> ids;
  for (const ViewFrame &frame : bundle.frames) {
    if (frame.frame_id.empty() || !ids.insert(frame.frame_id).second) {
      throw BundleError(BundleError::Kind::kMalformedManifest, frame.frame_id, "frame_id",
                        "frame IDs must be non-empty and unique");
    }
    validate_frame(frame, bundle.instance_table);
  }
}

std::vector<std::uint8_t> encode_depth(const DepthMap &depth) {
  static_assert(std::endian::native == std::endian::little, "depth codec assumes a little-endian host");
  if (depth.width() > 0xFFFF || depth.height() > 0xFFFF) {
    throw IoError("depth raster too large for the 16-bit header");
  }
  std::vector<std::uint8_t> out(8 + depth.pixel_count() * 4);
  std::memcpy(out.data(), kDepthMagic, 4);
  const auto h = static_cast<std::uint16_t>(depth.height());
  const auto w = static_cast<std::uint16_t>(depth.width());
  std::memcpy(out.data() + 4, &h, 2);
  std::memcpy(out.data() + 6, &w, 2);
  std::memcpy(out.data() + 8, depth.storage().data(), depth.pixel_count() * 4);
  return out;
}

DepthMap decode_depth(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kDepthMagic, 4) != 0) {
    throw IoError("depth stream has no FDEP header");
  }
  std::uint16_t h = 0;
  std::uint16_t w = 0;
  std::memcpy(&h, bytes.data() + 4, 2);
  std::memcpy(&w, bytes.data() + 6, 2);
  DepthMap depth(w, h);
  if (bytes.size() != 8 + depth.pixel_count() * 4) {
    throw IoError("depth stream length does not match its header");
  }
  std::memcpy(depth.storage().data(), bytes.data() + 8, depth.pixel_count() * 4);
  return depth;
}

SceneBundle load_bundle(const fs::path &dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw BundleError(BundleError::Kind::kMissingAsset, "", "manifest.json",
                      "not found in " + dir.string());
  }
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception &e) {
    throw BundleError(BundleError::Kind::kMalformedManifest, "", "manifest.json", e.what());
  }

  SceneBundle bundle;
  try {
    bundle.scene_id = manifest.at("scene_id").get<std::string>();
    for (const json &inst : manifest.at("instances")) {
      const auto id = inst.at("id").get<int>();
      if (id <= 0 || id > 0xFFFF) {
        throw BundleError(BundleError::Kind::kMalformedManifest, "", "instances",
                          "instance ID " + std::to_string(id) + " out of range");
      }
      bundle.instance_table[static_cast<InstanceId>(id)] =
          InstanceInfo{inst.at("category").get<std::string>(), inst.value("display_name", std::string{})};
    }
  } catch (const json::exception &e) {
    throw BundleError(BundleError::Kind::kMalformedManifest, "", "instances", e.what());
  }

  const auto frames_it = manifest.find("frames");
  if (frames_it == manifest.end() || !frames_it->is_array()) {
    throw BundleError(BundleError::Kind::kMalformedManifest, "", "frames", "missing frame list");
  }
  for (const json &fj : *frames_it) {
    ViewFrame frame;
    if (!fj.contains("frame_id") || !fj["frame_id"].is_string()) {
      throw BundleError(BundleError::Kind::kMalformedManifest, "", "frame_id", "missing frame_id");
    }
    frame.frame_id = fj["frame_id"].get<std::string>();
    frame.camera = parse_camera(fj, frame.frame_id);

    const struct {
      const char *suffix;
      const char *field;
    } assets[] = {{".rgb.png", "rgb"}, {".inst.png", "instances"}, {".depth.bin", "depth"}};
    for (const auto &asset : assets) {
      if (!fs::exists(frame_asset(dir, frame.frame_id, asset.suffix))) {
        throw BundleError(BundleError::Kind::kMissingAsset, frame.frame_id, asset.field,
                          frame_asset(dir, frame.frame_id, asset.suffix).string() + " not found");
      }
    }
    try {
      frame.rgb = png::read_rgb(frame_asset(dir, frame.frame_id, ".rgb.png"));
    } catch (const IoError &e) {
      throw BundleError(BundleError::Kind::kIo, frame.frame_id, "rgb", e.what());
    }
    try {
      frame.instances = png::read_gray16(frame_asset(dir, frame.frame_id, ".inst.png"));
    } catch (const IoError &e) {
      throw BundleError(BundleError::Kind::kIo, frame.frame_id, "instances", e.what());
    }
    try {
      frame.depth = decode_depth(png::read_file(frame_asset(dir, frame.frame_id, ".depth.bin")));
    } catch (const IoError &e) {
      throw BundleError(BundleError::Kind::kIo, frame.frame_id, "depth", e.what());
    }
    bundle.frames.push_back(std::move(frame));
  }
  validate_bundle(bundle);
  return bundle;
}

void write_bundle(const SceneBundle &bundle, const fs::path &dir) {
  validate_bundle(bundle);
  try {
    fs::create_directories(dir / "frames");
  } catch (const fs::filesystem_error &e) {
    throw BundleError(BundleError::Kind::kIo, "", "", e.what());
  }
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["scene_id"] = bundle.scene_id;
  json instances = json::array();
  for (const auto &[id, info] : bundle.instance_table) {
    instances.push_back({{"id", id}, {"category", info.category}, {"display_name", info.display_name}});
  }
  manifest["instances"] = instances;
  json frames = json::array();
  for (const ViewFrame &frame : bundle.frames) {
    json fj = camera_json(frame.camera);
    fj["frame_id"] = frame.frame_id;
    fj["width"] = frame.width();
    fj["height"] = frame.height();
    frames.push_back(fj);
    try {
      png::write_rgb(frame_asset(dir, frame.frame_id, ".rgb.png"), frame.rgb);
      png::write_gray16(frame_asset(dir, frame.frame_id, ".inst.png"), frame.instances);
      png::write_file(frame_asset(dir, frame.frame_id, ".depth.bin"), encode_depth(frame.depth));
    } catch (const IoError &e) {
      throw BundleError(BundleError::Kind::kIo, frame.frame_id, "", e.what());
    }
  }
  manifest["frames"] = frames;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) {
    throw BundleError(BundleError::Kind::kIo, "", "manifest.json", "cannot open for writing in " + dir.string());
  }
  out << manifest.dump(2) << '\n';
  if (!out) {
    throw BundleError(BundleError::Kind::kIo, "", "manifest.json", "write failed");
  }
}

std::map<InstanceId, InstanceStat> instance_stats(const InstanceMap &instances) {
  struct Accum {
    long long area = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  };
  std::vector<Accum> acc(65536);
  std::vector<InstanceId> seen;
  const int w = instances.width();
  const int h = instances.height();
  for (int y = 0; y < h; ++y) {
    const InstanceId *row = instances.pixel(0, y);
    for (int x = 0; x < w; ++x) {
      const InstanceId id = row[x];
      if (id == 0) {
        continue;
      }
      Accum &a = acc[id];
      if (a.area == 0) {
        a.x0 = a.x1 = x;
        a.y0 = a.y1 = y;
        seen.push_back(id);
      } else {
        a.x0 = std::min(a.x0, x);
        a.x1 = std::max(a.x1, x);
        a.y1 = y;
      }
      ++a.area;
    }
  }
  std::map<InstanceId, InstanceStat> out;
  for (const InstanceId id : seen) {
    const Accum &a = acc[id];
    out[id] = InstanceStat{a.area, Rect{a.x0, a.y0, a.x1 - a.x0 + 1, a.y1 - a.y0 + 1}};
  }
  return out;
}

std::map<InstanceId, InstanceStat> instance_stats(const ViewFrame &frame) {
  return instance_stats(frame.instances);
}

} // namespace forge
