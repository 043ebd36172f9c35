#pragma once

#include "forge/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace forge::png {

/// zlib level used when encoding. 1 keeps the generation pipeline fast;
/// output is lossless regardless.
inline constexpr int kDefaultCompression = 1;

std::vector<std::uint8_t> encode_rgb(const RgbImage &image, int compression = kDefaultCompression);
std::vector<std::uint8_t> encode_gray8(const GrayImage &image, int compression = kDefaultCompression);
std::vector<std::uint8_t> encode_gray16(const InstanceMap &image, int compression = kDefaultCompression);

/// Decoders accept any PNG color type and convert: gray/palette/alpha inputs
/// are expanded or stripped to the requested layout.
RgbImage decode_rgb(std::span<const std::uint8_t> bytes);
GrayImage decode_gray8(std::span<const std::uint8_t> bytes);
/// Requires a 16-bit (or 8-bit, widened) single-channel PNG.
InstanceMap decode_gray16(std::span<const std::uint8_t> bytes);

void write_rgb(const std::filesystem::path &path, const RgbImage &image,
               int compression = kDefaultCompression);
void write_gray16(const std::filesystem::path &path, const InstanceMap &image,
                  int compression = kDefaultCompression);
RgbImage read_rgb(const std::filesystem::path &path);
InstanceMap read_gray16(const std::filesystem::path &path);

std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes);

} // namespace forge::png
