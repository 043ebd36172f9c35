#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace forge {

/// Row-major interleaved raster. Pixel (x, y) channel c lives at
/// ((y * width) + x) * Channels + c.
template <typename T, int Channels> class Raster {
public:
  using value_type = T;
  static constexpr int kChannels = Channels;

  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked_count(width, height)) * Channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T &at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T &at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  T *pixel(int x, int y) { return data_.data() + index(x, y, 0); }
  const T *pixel(int x, int y) const { return data_.data() + index(x, y, 0); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T> &storage() { return data_; }
  const std::vector<T> &storage() const { return data_; }

  bool same_size(int w, int h) const { return w == width_ && h == height_; }
  template <typename U, int C> bool same_size(const Raster<U, C> &other) const {
    return other.width() == width_ && other.height() == height_;
  }

  friend bool operator==(const Raster &a, const Raster &b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

private:
  static long long checked_count(int width, int height) {
    if (width < 0 || height < 0) {
      throw std::invalid_argument("raster dimensions must be non-negative");
    }
    return static_cast<long long>(width) * height;
  }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * Channels + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using RgbImage = Raster<std::uint8_t, 3>;
using GrayImage = Raster<std::uint8_t, 1>;
using DepthMap = Raster<float, 1>;
using InstanceMap = Raster<std::uint16_t, 1>;

using InstanceId = std::uint16_t;

/// Integer pixel rectangle [x, x + w) x [y, y + h).
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool empty() const { return w <= 0 || h <= 0; }
  long long area() const { return empty() ? 0 : static_cast<long long>(w) * h; }
  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool contains(int px, int py) const { return px >= x && py >= y && px < x + w && py < y + h; }
  bool intersects(const Rect &o) const {
    return !empty() && !o.empty() && x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  Rect intersect(const Rect &o) const;

  friend bool operator==(const Rect &, const Rect &) = default;
};

inline Rect Rect::intersect(const Rect &o) const {
  const int x0 = x > o.x ? x : o.x;
  const int y0 = y > o.y ? y : o.y;
  const int x1 = right() < o.right() ? right() : o.right();
  const int y1 = bottom() < o.bottom() ? bottom() : o.bottom();
  if (x1 <= x0 || y1 <= y0) {
    return Rect{x0, y0, 0, 0};
  }
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel &, const Pixel &) = default;
};

} // namespace forge
