#include "forge/png_io.hpp"

#include "forge/error.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>

namespace forge::png {
namespace {

struct ErrorState {
  std::jmp_buf jump;
  char message[256] = {0};
};

void on_error(png_structp ptr, png_const_charp msg) {
  auto *state = static_cast<ErrorState *>(png_get_error_ptr(ptr));
  std::strncpy(state->message, msg, sizeof(state->message) - 1);
  std::longjmp(state->jump, 1);
}

void on_warning(png_structp, png_const_charp) {}

struct WriteSink {
  std::vector<std::uint8_t> *out;
};

void write_to_vector(png_structp ptr, png_bytep data, png_size_t length) {
  auto *sink = static_cast<WriteSink *>(png_get_io_ptr(ptr));
  sink->out->insert(sink->out->end(), data, data + length);
}

void flush_noop(png_structp) {}

struct ReadSource {
  const std::uint8_t *data;
  std::size_t size;
  std::size_t offset;
};

void read_from_span(png_structp ptr, png_bytep out, png_size_t length) {
  auto *src = static_cast<ReadSource *>(png_get_io_ptr(ptr));
  if (src->offset + length > src->size) {
    png_error(ptr, "truncated PNG stream");
  }
  std::memcpy(out, src->data + src->offset, length);
  src->offset += length;
}

// Encodes `height` rows of `row_bytes` each starting at `pixels`. Sixteen-bit
// samples are given in host order and swapped to network order by libpng.
std::vector<std::uint8_t> encode(const void *pixels, int width, int height, int color_type,
                                 int bit_depth, std::size_t row_bytes, int compression) {
  if (width <= 0 || height <= 0) {
    throw IoError("cannot encode an empty raster as PNG");
  }
  std::vector<std::uint8_t> out;
  WriteSink sink{&out};
  ErrorState state;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, on_error, on_warning);
  if (png == nullptr) {
    throw IoError("png_create_write_struct failed");
  }
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(state.jump)) {
    png_destroy_write_struct(&png, &info);
    throw IoError(std::string("PNG encode failed: ") + state.message);
  }
  png_set_write_fn(png, &sink, write_to_vector, flush_noop);
  png_set_compression_level(png, compression);
  png_set_filter(png, 0, PNG_FILTER_NONE | PNG_FILTER_SUB | PNG_FILTER_UP);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) {
    png_set_swap(png);
  }
  auto *base = static_cast<png_bytep>(const_cast<void *>(pixels));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = base + static_cast<std::size_t>(y) * row_bytes;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

enum class Target { kRgb8, kGray8, kGray16 };

struct Decoded {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bytes;
};

Decoded decode(std::span<const std::uint8_t> bytes, Target target) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw IoError("not a PNG stream");
  }
  ReadSource src{bytes.data(), bytes.size(), 0};
  ErrorState state;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, on_error, on_warning);
  if (png == nullptr) {
    throw IoError("png_create_read_struct failed");
  }
  png_infop info = png_create_info_struct(png);
  Decoded result;
  std::vector<png_bytep> rows;
  bool wrong_depth = false;
  if (setjmp(state.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(std::string("PNG decode failed: ") + state.message);
  }
  png_set_read_fn(png, &src, read_from_span);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  }
  if ((color & PNG_COLOR_MASK_ALPHA) != 0) {
    png_set_strip_alpha(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  const bool is_gray = (color & PNG_COLOR_MASK_COLOR) == 0;
  switch (target) {
  case Target::kRgb8:
    if (depth == 16) {
      png_set_strip_16(png);
    }
    if (is_gray) {
      if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
      }
      png_set_gray_to_rgb(png);
    }
    break;
  case Target::kGray8:
    if (depth == 16) {
      png_set_strip_16(png);
    }
    if (is_gray && depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (!is_gray) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    break;
  case Target::kGray16:
    if (!is_gray) {
      wrong_depth = true;
    } else if (depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (depth == 16) {
      png_set_swap(png);
    }
    break;
  }
  if (wrong_depth) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("expected a single-channel PNG for an instance map");
  }
  png_read_update_info(png, info);
  result.width = static_cast<int>(png_get_image_width(png, info));
  result.height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  result.bytes.resize(row_bytes * static_cast<std::size_t>(result.height));
  rows.resize(static_cast<std::size_t>(result.height));
  for (int y = 0; y < result.height; ++y) {
    rows[static_cast<std::size_t>(y)] = result.bytes.data() + static_cast<std::size_t>(y) * row_bytes;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  const int out_depth = png_get_bit_depth(png, info);
  png_destroy_read_struct(&png, &info, nullptr);

  if (target == Target::kGray16 && out_depth == 8) {
    std::vector<std::uint8_t> widened(result.bytes.size() * 2);
    for (std::size_t i = 0; i < result.bytes.size(); ++i) {
      const std::uint16_t v = result.bytes[i];
      std::memcpy(widened.data() + 2 * i, &v, 2);
    }
    result.bytes = std::move(widened);
  }
  return result;
}

} // namespace

std::vector<std::uint8_t> encode_rgb(const RgbImage &image, int compression) {
  return encode(image.storage().data(), image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8,
                static_cast<std::size_t>(image.width()) * 3, compression);
}

std::vector<std::uint8_t> encode_gray8(const GrayImage &image, int compression) {
  return encode(image.storage().data(), image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 8,
                static_cast<std::size_t>(image.width()), compression);
}

std::vector<std::uint8_t> encode_gray16(const InstanceMap &image, int compression) {
  return encode(image.storage().data(), image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 16,
                static_cast<std::size_t>(image.width()) * 2, compression);
}

RgbImage decode_rgb(std::span<const std::uint8_t> bytes) {
  Decoded d = decode(bytes, Target::kRgb8);
  RgbImage image(d.width, d.height);
  std::memcpy(image.storage().data(), d.bytes.data(), image.storage().size());
  return image;
}

GrayImage decode_gray8(std::span<const std::uint8_t> bytes) {
  Decoded d = decode(bytes, Target::kGray8);
  GrayImage image(d.width, d.height);
  std::memcpy(image.storage().data(), d.bytes.data(), image.storage().size());
  return image;
}

InstanceMap decode_gray16(std::span<const std::uint8_t> bytes) {
  Decoded d = decode(bytes, Target::kGray16);
  InstanceMap image(d.width, d.height);
  std::memcpy(image.storage().data(), d.bytes.data(), image.storage().size() * 2);
  return image;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("short read on " + path.string());
  }
  return bytes;
}

void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed on " + path.string());
  }
}

void write_rgb(const std::filesystem::path &path, const RgbImage &image, int compression) {
  write_file(path, encode_rgb(image, compression));
}

void write_gray16(const std::filesystem::path &path, const InstanceMap &image, int compression) {
  write_file(path, encode_gray16(image, compression));
}

RgbImage read_rgb(const std::filesystem::path &path) { return decode_rgb(read_file(path)); }

InstanceMap read_gray16(const std::filesystem::path &path) { return decode_gray16(read_file(path)); }

} // namespace forge::png
