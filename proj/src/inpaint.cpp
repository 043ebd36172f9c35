#include "forge/inpaint.hpp"

#include "forge/http_util.hpp"
#include "forge/png_io.hpp"
#include "forge/rng.hpp"

#include <httplib.h>

#include <algorithm>
#include <array>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif
#include <limits>
#include <map>
#include <mutex>
#include <semaphore>
#include <stdexcept>
#include <tuple>

namespace forge {
namespace {

// One pyramid level. `hole` marks unknown pixels; `rgb` holds known pixels
// and the current estimate inside the hole.
struct Level {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> rgb;
  std::vector<std::uint8_t> hole;

  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w + x; }
};

Level downsample(const Level &fine) {
  Level c;
  c.w = fine.w / 2;
  c.h = fine.h / 2;
  c.rgb.assign(static_cast<std::size_t>(c.w) * c.h * 3, 0);
  c.hole.assign(static_cast<std::size_t>(c.w) * c.h, 0);
  for (int y = 0; y < c.h; ++y) {
    for (int x = 0; x < c.w; ++x) {
      const std::size_t i00 = fine.idx(2 * x, 2 * y);
      const std::size_t i10 = i00 + 1;
      const std::size_t i01 = fine.idx(2 * x, 2 * y + 1);
      const std::size_t i11 = i01 + 1;
      const std::size_t ci = c.idx(x, y);
      if (fine.hole[i00] | fine.hole[i10] | fine.hole[i01] | fine.hole[i11]) {
        c.hole[ci] = 1;
        continue;
      }
      for (int k = 0; k < 3; ++k) {
        const int sum = fine.rgb[i00 * 3 + k] + fine.rgb[i10 * 3 + k] + fine.rgb[i01 * 3 + k] + fine.rgb[i11 * 3 + k];
        c.rgb[ci * 3 + k] = static_cast<std::uint8_t>((sum + 2) / 4);
      }
    }
  }
  return c;
}

// valid[i] != 0 iff the patch centered at i lies fully inside the level and
// contains no hole pixel.
std::vector<std::uint8_t> valid_sources(const Level &L, int r) {
  std::vector<int> integral(static_cast<std::size_t>(L.w + 1) * (L.h + 1), 0);
  const int stride = L.w + 1;
  for (int y = 0; y < L.h; ++y) {
    int row = 0;
    for (int x = 0; x < L.w; ++x) {
      row += L.hole[L.idx(x, y)];
      integral[static_cast<std::size_t>(y + 1) * stride + x + 1] = integral[static_cast<std::size_t>(y) * stride + x + 1] + row;
    }
  }
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(L.w) * L.h, 0);
  for (int y = r; y + r < L.h; ++y) {
    for (int x = r; x + r < L.w; ++x) {
      const int x0 = x - r, y0 = y - r, x1 = x + r + 1, y1 = y + r + 1;
      const int s = integral[static_cast<std::size_t>(y1) * stride + x1] - integral[static_cast<std::size_t>(y0) * stride + x1] -
                    integral[static_cast<std::size_t>(y1) * stride + x0] + integral[static_cast<std::size_t>(y0) * stride + x0];
      valid[L.idx(x, y)] = s == 0 ? 1 : 0;
    }
  }
  return valid;
}

// Initial estimate for the coarsest level: peel the hole from its boundary
// inward, each ring taking the mean of already-known 8-neighbors.
void onion_fill(Level &L) {
  std::vector<std::uint8_t> known(L.hole.size());
  std::vector<int> pending;
  for (std::size_t i = 0; i < L.hole.size(); ++i) {
    known[i] = L.hole[i] ? 0 : 1;
    if (L.hole[i]) {
      pending.push_back(static_cast<int>(i));
    }
  }
  while (!pending.empty()) {
    std::vector<int> ring;
    std::vector<int> rest;
    std::vector<std::array<int, 3>> colors;
    for (const int i : pending) {
      const int x = i % L.w;
      const int y = i / L.w;
      int sum[3] = {0, 0, 0};
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= L.w || ny >= L.h) {
            continue;
          }
          const std::size_t j = L.idx(nx, ny);
          if (known[j]) {
            for (int k = 0; k < 3; ++k) {
              sum[k] += L.rgb[j * 3 + k];
            }
            ++n;
          }
        }
      }
      if (n == 0) {
        rest.push_back(i);
      } else {
        ring.push_back(i);
        colors.push_back({(sum[0] + n / 2) / n, (sum[1] + n / 2) / n, (sum[2] + n / 2) / n});
      }
    }
    if (ring.empty()) {
      break; // no known pixel anywhere; cannot happen when a source patch exists
    }
    for (std::size_t k = 0; k < ring.size(); ++k) {
      const auto i = static_cast<std::size_t>(ring[k]);
      for (int c = 0; c < 3; ++c) {
        L.rgb[i * 3 + c] = static_cast<std::uint8_t>(colors[k][static_cast<std::size_t>(c)]);
      }
      known[i] = 1;
    }
    pending = std::move(rest);
  }
}

int row_ssd_any(const std::uint8_t *a, const std::uint8_t *b, int len) {
  int sum = 0;
  for (int k = 0; k < len; ++k) {
    const int d = static_cast<int>(a[k]) - static_cast<int>(b[k]);
    sum += d * d;
  }
  return sum;
}

// Fixed-length rows: 16-byte SSE2 chunks, scalar tail.
template <int Len> int row_ssd_fixed(const std::uint8_t *a, const std::uint8_t *b, int) {
  int sum = 0;
  int k = 0;
#if defined(__SSE2__)
  const __m128i zero = _mm_setzero_si128();
  __m128i acc = zero;
  for (; k + 16 <= Len; k += 16) {
    const __m128i va = _mm_loadu_si128(reinterpret_cast<const __m128i *>(a + k));
    const __m128i vb = _mm_loadu_si128(reinterpret_cast<const __m128i *>(b + k));
    const __m128i lo = _mm_sub_epi16(_mm_unpacklo_epi8(va, zero), _mm_unpacklo_epi8(vb, zero));
    const __m128i hi = _mm_sub_epi16(_mm_unpackhi_epi8(va, zero), _mm_unpackhi_epi8(vb, zero));
    acc = _mm_add_epi32(acc, _mm_add_epi32(_mm_madd_epi16(lo, lo), _mm_madd_epi16(hi, hi)));
  }
  if constexpr (Len > 16 && Len % 16 != 0) {
    // Tail: reload the last 16 bytes and zero the lanes already counted.
    constexpr int skip = 16 - Len % 16;
    alignas(16) static constexpr auto keep = [] {
      std::array<std::uint8_t, 16> m{};
      for (int i = skip; i < 16; ++i) {
        m[static_cast<std::size_t>(i)] = 0xff;
      }
      return m;
    }();
    const __m128i mask = _mm_load_si128(reinterpret_cast<const __m128i *>(keep.data()));
    const __m128i va = _mm_and_si128(mask, _mm_loadu_si128(reinterpret_cast<const __m128i *>(a + Len - 16)));
    const __m128i vb = _mm_and_si128(mask, _mm_loadu_si128(reinterpret_cast<const __m128i *>(b + Len - 16)));
    const __m128i lo = _mm_sub_epi16(_mm_unpacklo_epi8(va, zero), _mm_unpacklo_epi8(vb, zero));
    const __m128i hi = _mm_sub_epi16(_mm_unpackhi_epi8(va, zero), _mm_unpackhi_epi8(vb, zero));
    acc = _mm_add_epi32(acc, _mm_add_epi32(_mm_madd_epi16(lo, lo), _mm_madd_epi16(hi, hi)));
    k = Len;
  }
  acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, _MM_SHUFFLE(1, 0, 3, 2)));
  acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, _MM_SHUFFLE(2, 3, 0, 1)));
  sum = _mm_cvtsi128_si32(acc);
#endif
  for (; k < Len; ++k) {
    const int d = static_cast<int>(a[k]) - static_cast<int>(b[k]);
    sum += d * d;
  }
  return sum;
}

class PatchMatch {
public:
  PatchMatch(Level &level, int radius, std::uint64_t seed)
      : L_(level), r_(radius), full_len_((2 * radius + 1) * 3),
        valid_(valid_sources(level, radius)), rng_(seed) {
    for (std::size_t i = 0; i < L_.hole.size(); ++i) {
      if (L_.hole[i]) {
        holes_.push_back(static_cast<int>(i));
      }
      if (valid_[i]) {
        valid_list_.push_back(static_cast<int>(i));
      }
    }
    nnf_.assign(L_.hole.size(), -1);
    dist_.assign(L_.hole.size(), 0);
  }

  bool has_sources() const { return !valid_list_.empty(); }
  long long hole_count() const { return static_cast<long long>(holes_.size()); }

  void init_random() {
    for (const int p : holes_) {
      nnf_[static_cast<std::size_t>(p)] = valid_list_[rng_.below(valid_list_.size())];
    }
    refresh_distances();
  }

  // Seeds the NNF from the next-coarser level's field.
  void init_from_coarse(const Level &coarse, const std::vector<int> &coarse_nnf) {
    for (const int p : holes_) {
      const int x = p % L_.w;
      const int y = p / L_.w;
      const int cx = std::min(x / 2, coarse.w - 1);
      const int cy = std::min(y / 2, coarse.h - 1);
      const int cq = coarse_nnf[coarse.idx(cx, cy)];
      int q = -1;
      if (cq >= 0) {
        const int qx = 2 * (cq % coarse.w) + (x - 2 * cx);
        const int qy = 2 * (cq / coarse.w) + (y - 2 * cy);
        if (qx >= 0 && qy >= 0 && qx < L_.w && qy < L_.h && valid_[L_.idx(qx, qy)]) {
          q = static_cast<int>(L_.idx(qx, qy));
        }
      }
      if (q < 0) {
        q = valid_list_[rng_.below(valid_list_.size())];
      }
      nnf_[static_cast<std::size_t>(p)] = q;
    }
    refresh_distances();
  }

  double energy() const {
    double e = 0.0;
    for (const int p : holes_) {
      e += static_cast<double>(dist_[static_cast<std::size_t>(p)]);
    }
    return e;
  }

  void iterate(int iteration) {
    const bool forward = iteration % 2 == 0;
    const int step = forward ? -1 : 1; // neighbor offset examined
    const int n = static_cast<int>(holes_.size());
    const int max_radius = std::max(L_.w, L_.h);
    for (int k = 0; k < n; ++k) {
      const int p = holes_[static_cast<std::size_t>(forward ? k : n - 1 - k)];
      const int px = p % L_.w;
      const int py = p / L_.w;
      int best = nnf_[static_cast<std::size_t>(p)];
      int best_d = dist_[static_cast<std::size_t>(p)];

      auto try_candidate = [&](int qx, int qy) {
        if (qx < r_ || qy < r_ || qx + r_ >= L_.w || qy + r_ >= L_.h) {
          return;
        }
        const int q = static_cast<int>(L_.idx(qx, qy));
        if (q == best || !valid_[static_cast<std::size_t>(q)]) {
          return;
        }
        const int d = distance(px, py, qx, qy, best_d);
        if (d < best_d) {
          best = q;
          best_d = d;
        }
      };

      // Propagation from the already-visited horizontal and vertical neighbors.
      const int nx = px + step;
      if (nx >= 0 && nx < L_.w && L_.hole[L_.idx(nx, py)]) {
        const int nq = nnf_[L_.idx(nx, py)];
        try_candidate(nq % L_.w - step, nq / L_.w);
      }
      const int ny = py + step;
      if (ny >= 0 && ny < L_.h && L_.hole[L_.idx(px, ny)]) {
        const int nq = nnf_[L_.idx(px, ny)];
        try_candidate(nq % L_.w, nq / L_.w - step);
      }
      // Random search in exponentially shrinking windows around the best match.
      for (int radius = max_radius; radius >= 1; radius /= 2) {
        const int bx = best % L_.w;
        const int by = best / L_.w;
        // One 64-bit draw yields both offsets (32-bit multiply-shift each).
        const std::uint64_t draw = rng_.next();
        const auto span = static_cast<std::uint64_t>(2 * radius + 1);
        const int ox = static_cast<int>(((draw & 0xffffffffu) * span) >> 32) - radius;
        const int oy = static_cast<int>(((draw >> 32) * span) >> 32) - radius;
        const int qx = std::clamp(bx + ox, r_, L_.w - 1 - r_);
        const int qy = std::clamp(by + oy, r_, L_.h - 1 - r_);
        try_candidate(qx, qy);
      }
      nnf_[static_cast<std::size_t>(p)] = best;
      dist_[static_cast<std::size_t>(p)] = best_d;
    }
  }

  // Each hole pixel becomes the mean of the source pixels that the patches
  // covering it vote for.
  void vote() {
    std::vector<std::int64_t> acc(L_.hole.size() * 3, 0);
    std::vector<int> count(L_.hole.size(), 0);
    for (const int t : holes_) {
      const int tx = t % L_.w;
      const int ty = t / L_.w;
      const int q = nnf_[static_cast<std::size_t>(t)];
      const int qx = q % L_.w;
      const int qy = q / L_.w;
      for (int dy = -r_; dy <= r_; ++dy) {
        const int y = ty + dy;
        if (y < 0 || y >= L_.h) {
          continue;
        }
        for (int dx = -r_; dx <= r_; ++dx) {
          const int x = tx + dx;
          if (x < 0 || x >= L_.w) {
            continue;
          }
          const std::size_t i = L_.idx(x, y);
          if (!L_.hole[i]) {
            continue;
          }
          const std::size_t s = L_.idx(qx + dx, qy + dy);
          acc[i * 3] += L_.rgb[s * 3];
          acc[i * 3 + 1] += L_.rgb[s * 3 + 1];
          acc[i * 3 + 2] += L_.rgb[s * 3 + 2];
          ++count[i];
        }
      }
    }
    for (const int t : holes_) {
      const auto i = static_cast<std::size_t>(t);
      const int c = count[i];
      for (int k = 0; k < 3; ++k) {
        L_.rgb[i * 3 + k] = static_cast<std::uint8_t>((acc[i * 3 + k] + c / 2) / c);
      }
    }
  }

  const std::vector<int> &nnf() const { return nnf_; }

private:
  // Squared distance between the target patch at (px, py) (clipped to the
  // level) and the source patch at (qx, qy). Stops once `bound` is reached.
  int distance(int px, int py, int qx, int qy, int bound) const {
    const int dx0 = std::max(-r_, -px);
    const int dx1 = std::min(r_, L_.w - 1 - px);
    const int len = (dx1 - dx0 + 1) * 3;
    if (len == full_len_) {
      switch (len) {
      case 9:
        return rows_ssd<row_ssd_fixed<9>>(px + dx0, py, qx + dx0, qy, len, bound);
      case 15:
        return rows_ssd<row_ssd_fixed<15>>(px + dx0, py, qx + dx0, qy, len, bound);
      case 21:
        return rows_ssd<row_ssd_fixed<21>>(px + dx0, py, qx + dx0, qy, len, bound);
      case 27:
        return rows_ssd<row_ssd_fixed<27>>(px + dx0, py, qx + dx0, qy, len, bound);
      default:
        break;
      }
    }
    return rows_ssd<row_ssd_any>(px + dx0, py, qx + dx0, qy, len, bound);
  }

  template <int (*Row)(const std::uint8_t *, const std::uint8_t *, int)>
  int rows_ssd(int tx, int py, int sx, int qy, int len, int bound) const {
    int sum = 0;
    for (int dy = -r_; dy <= r_; ++dy) {
      const int ty = py + dy;
      if (ty < 0 || ty >= L_.h) {
        continue;
      }
      const std::uint8_t *t = L_.rgb.data() + L_.idx(tx, ty) * 3;
      const std::uint8_t *s = L_.rgb.data() + L_.idx(sx, qy + dy) * 3;
      sum += Row(t, s, len);
      if (sum >= bound) {
        return sum;
      }
    }
    return sum;
  }

  void refresh_distances() {
    for (const int p : holes_) {
      const int q = nnf_[static_cast<std::size_t>(p)];
      dist_[static_cast<std::size_t>(p)] = distance(p % L_.w, p / L_.w, q % L_.w, q / L_.w, std::numeric_limits<int>::max());
    }
  }

  Level &L_;
  int r_;
  int full_len_;
  std::vector<std::uint8_t> valid_;
  std::vector<int> valid_list_;
  std::vector<int> holes_;
  std::vector<int> nnf_;
  std::vector<int> dist_;
  Rng rng_;
};

[[noreturn]] void uninpaintable(const std::string &why) {
  throw InpaintError(InpaintError::Kind::kUninpaintable, "uninpaintable hole: " + why);
}

} // namespace

void InpaintParams::validate() const {
  if (patch_size < 3 || patch_size % 2 == 0) {
    throw std::invalid_argument("patch_size must be odd and >= 3");
  }
  if (iterations_per_level < 1) {
    throw std::invalid_argument("iterations_per_level must be >= 1");
  }
  if (pyramid_levels < 0 || min_level_side < 1) {
    throw std::invalid_argument("invalid pyramid settings");
  }
}

RgbImage inpaint_native(const RgbImage &image, const PixelMask &hole, const InpaintParams &params, PatchMatchTrace *trace) {
  params.validate();
  if (hole.width() != image.width() || hole.height() != image.height()) {
    throw InpaintError(InpaintError::Kind::kDimensionMismatch, "hole mask size differs from image size");
  }
  if (trace != nullptr) {
    trace->levels.clear();
  }
  if (hole.empty()) {
    return image;
  }
  if (static_cast<std::size_t>(hole.area()) == image.pixel_count()) {
    uninpaintable("hole covers the entire image");
  }
  const int r = params.patch_size / 2;

  std::vector<Level> pyramid(1);
  pyramid[0].w = image.width();
  pyramid[0].h = image.height();
  pyramid[0].rgb = image.storage();
  pyramid[0].hole = hole.bits();
  const int max_levels = params.pyramid_levels > 0 ? params.pyramid_levels : 64;
  while (static_cast<int>(pyramid.size()) < max_levels) {
    const Level &fine = pyramid.back();
    if (std::min(fine.w / 2, fine.h / 2) < params.min_level_side) {
      break;
    }
    Level coarse = downsample(fine);
    if (valid_sources(coarse, r) == std::vector<std::uint8_t>(coarse.hole.size(), 0)) {
      break;
    }
    pyramid.push_back(std::move(coarse));
  }

  std::vector<int> coarse_nnf;
  for (int li = static_cast<int>(pyramid.size()) - 1; li >= 0; --li) {
    Level &L = pyramid[static_cast<std::size_t>(li)];
    const bool coarsest = li == static_cast<int>(pyramid.size()) - 1;
    if (!coarsest) {
      // Upsample the coarser estimate into this level's hole.
      const Level &C = pyramid[static_cast<std::size_t>(li + 1)];
      for (int y = 0; y < L.h; ++y) {
        for (int x = 0; x < L.w; ++x) {
          const std::size_t i = L.idx(x, y);
          if (!L.hole[i]) {
            continue;
          }
          const std::size_t ci = C.idx(std::min(x / 2, C.w - 1), std::min(y / 2, C.h - 1));
          for (int k = 0; k < 3; ++k) {
            L.rgb[i * 3 + k] = C.rgb[ci * 3 + k];
          }
        }
      }
    } else {
      onion_fill(L);
    }

    PatchMatch pm(L, r, derive_seed(params.rng_seed, static_cast<std::uint64_t>(li)));
    if (!pm.has_sources()) {
      uninpaintable("no complete source patch outside the hole");
    }
    if (coarsest) {
      pm.init_random();
    } else {
      pm.init_from_coarse(pyramid[static_cast<std::size_t>(li + 1)], coarse_nnf);
    }
    PatchMatchTrace::Level record{L.w, L.h, pm.hole_count(), {pm.energy()}};
    for (int it = 0; it < params.iterations_per_level; ++it) {
      pm.iterate(it);
      record.energy.push_back(pm.energy());
    }
    pm.vote();
    coarse_nnf = pm.nnf();
    if (trace != nullptr) {
      trace->levels.push_back(std::move(record));
    }
  }

  RgbImage out = image;
  const Level &finest = pyramid[0];
  auto &data = out.storage();
  for (std::size_t i = 0; i < finest.hole.size(); ++i) {
    if (finest.hole[i]) {
      data[i * 3] = finest.rgb[i * 3];
      data[i * 3 + 1] = finest.rgb[i * 3 + 1];
      data[i * 3 + 2] = finest.rgb[i * 3 + 2];
    }
  }
  return out;
}

struct RemoteInpainter::Gate {
  explicit Gate(int n) : slots(n) {}
  std::counting_semaphore<> slots;
};

RemoteInpainter::RemoteInpainter(std::string endpoint, std::chrono::milliseconds timeout, int max_connections)
    : endpoint_(std::move(endpoint)), timeout_(timeout), gate_(std::make_unique<Gate>(std::max(1, max_connections))) {}

RemoteInpainter::~RemoteInpainter() = default;

RgbImage RemoteInpainter::run(const RgbImage &image, const PixelMask &hole) const {
  if (hole.width() != image.width() || hole.height() != image.height()) {
    throw InpaintError(InpaintError::Kind::kDimensionMismatch, "hole mask size differs from image size");
  }
  GrayImage mask(image.width(), image.height());
  for (std::size_t i = 0; i < hole.bits().size(); ++i) {
    mask.storage()[i] = hole.bits()[i] ? 255 : 0;
  }
  const auto image_png = png::encode_rgb(image);
  const auto mask_png = png::encode_gray8(mask);
  httplib::MultipartFormDataItems items = {
      {"image", std::string(image_png.begin(), image_png.end()), "image.png", "image/png"},
      {"mask", std::string(mask_png.begin(), mask_png.end()), "mask.png", "image/png"},
  };

  const http::UrlParts url = http::split_url(endpoint_);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  gate_->slots.acquire();
  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(url.path + "/inpaint", items);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  gate_->slots.release();

  if (!res) {
    const httplib::Error err = res.error();
    if (err == httplib::Error::ConnectionTimeout || (err == httplib::Error::Read && elapsed >= timeout_)) {
      throw InpaintError(InpaintError::Kind::kTimeout, "remote inpainter timed out after " +
                                                           std::to_string(timeout_.count()) + " ms");
    }
    throw InpaintError(InpaintError::Kind::kUnreachable, "remote inpainter unreachable: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw InpaintError(InpaintError::Kind::kHttpStatus, "remote inpainter returned HTTP " + std::to_string(res->status));
  }
  RgbImage filled;
  try {
    const auto *bytes = reinterpret_cast<const std::uint8_t *>(res->body.data());
    filled = png::decode_rgb(std::span(bytes, res->body.size()));
  } catch (const IoError &e) {
    throw InpaintError(InpaintError::Kind::kBadResponse, std::string("remote inpainter sent an undecodable body: ") + e.what());
  }
  if (!filled.same_size(image)) {
    throw InpaintError(InpaintError::Kind::kDimensionMismatch,
                       "remote inpainter returned " + std::to_string(filled.width()) + "x" + std::to_string(filled.height()) +
                           ", expected " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  auto &out = filled.storage();
  const auto &in = image.storage();
  for (std::size_t i = 0; i < hole.bits().size(); ++i) {
    if (!hole.bits()[i]) {
      out[i * 3] = in[i * 3];
      out[i * 3 + 1] = in[i * 3 + 1];
      out[i * 3 + 2] = in[i * 3 + 2];
    }
  }
  return filled;
}

RgbImage inpaint_remote(const std::string &endpoint, const RgbImage &image, const PixelMask &hole,
                        std::chrono::milliseconds timeout) {
  return RemoteInpainter(endpoint, timeout, 1).run(image, hole);
}

namespace {

// One client per (endpoint, timeout, limit) so the connection bound holds
// across every pair being generated in the process.
const RemoteInpainter &shared_remote(const InpaintBackend &backend) {
  static std::mutex mu;
  static std::map<std::tuple<std::string, long long, int>, std::unique_ptr<RemoteInpainter>> clients;
  const auto key = std::make_tuple(backend.endpoint, static_cast<long long>(backend.timeout.count()),
                                   backend.max_connections);
  std::lock_guard lock(mu);
  auto &slot = clients[key];
  if (!slot) {
    slot = std::make_unique<RemoteInpainter>(backend.endpoint, backend.timeout, backend.max_connections);
  }
  return *slot;
}

} // namespace

RgbImage inpaint(const RgbImage &image, const PixelMask &hole, const InpaintBackend &backend) {
  if (backend.kind == InpaintBackend::Kind::kNative) {
    return inpaint_native(image, hole, backend.params);
  }
  try {
    return shared_remote(backend).run(image, hole);
  } catch (const InpaintError &e) {
    if (!backend.fallback_to_native || e.kind() == InpaintError::Kind::kUninpaintable) {
      throw;
    }
    return inpaint_native(image, hole, backend.params);
  }
}

} // namespace forge
