#pragma once

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/raster.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace forge {

struct InpaintParams {
  /// Odd, >= 3.
  int patch_size = 7;
  /// 0 selects automatically: halve while the shorter side stays >= min_level_side.
  int pyramid_levels = 0;
  int min_level_side = 32;
  int iterations_per_level = 5;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Correspondence energy (sum over hole pixels of the squared patch distance
/// to the chosen source patch) per pyramid level. energy[0] is measured after
/// initialization, energy[i] after iteration i. Levels are listed coarse to fine.
struct PatchMatchTrace {
  struct Level {
    int width = 0;
    int height = 0;
    long long hole_pixels = 0;
    std::vector<double> energy;
  };
  std::vector<Level> levels;
};

class InpaintError : public Error {
public:
  enum class Kind { kUninpaintable, kTimeout, kUnreachable, kHttpStatus, kDimensionMismatch, kBadResponse };

  InpaintError(Kind kind, const std::string &what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

/// Coarse-to-fine PatchMatch fill. Pixels outside the hole are copied
/// bit-exactly; output is a pure function of (image, hole, params).
/// Throws InpaintError(kUninpaintable) when no complete source patch exists.
RgbImage inpaint_native(const RgbImage &image, const PixelMask &hole, const InpaintParams &params,
                        PatchMatchTrace *trace = nullptr);

/// Client for the remote inpainter protocol: POST {endpoint}/inpaint with a
/// multipart body of `image` (RGB PNG) and `mask` (8-bit PNG, 255 = hole),
/// answered by a PNG of identical size. At most `max_connections` requests
/// are in flight per client.
class RemoteInpainter {
public:
  RemoteInpainter(std::string endpoint, std::chrono::milliseconds timeout, int max_connections = 4);
  ~RemoteInpainter();
  RemoteInpainter(const RemoteInpainter &) = delete;
  RemoteInpainter &operator=(const RemoteInpainter &) = delete;

  /// Pixels outside the hole are restored from `image` before returning.
  RgbImage run(const RgbImage &image, const PixelMask &hole) const;

private:
  struct Gate;
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<Gate> gate_;
};

RgbImage inpaint_remote(const std::string &endpoint, const RgbImage &image, const PixelMask &hole,
                        std::chrono::milliseconds timeout);

struct InpaintBackend {
  enum class Kind { kNative, kRemote };
  Kind kind = Kind::kNative;
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};
  /// Requests in flight per endpoint across the whole process.
  int max_connections = 4;
  bool fallback_to_native = true;
  InpaintParams params;
};

/// Dispatches to the configured backend. Remote failures fall back to the
/// native fill when enabled, otherwise propagate.
RgbImage inpaint(const RgbImage &image, const PixelMask &hole, const InpaintBackend &backend);

} // namespace forge
