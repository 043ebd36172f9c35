#pragma once

#include <array>
#include <cstdint>

namespace forge::font {

constexpr int kGlyphWidth = 5;
constexpr int kGlyphHeight = 7;

/// Rows top to bottom; bit 4 is the leftmost column. Only 'A'..'Z' have
/// glyphs; anything else maps to a blank cell.
const std::array<std::uint8_t, kGlyphHeight> &glyph(char c);

inline bool glyph_bit(char c, int col, int row) {
  return ((glyph(c)[static_cast<std::size_t>(row)] >> (kGlyphWidth - 1 - col)) & 1U) != 0;
}

} // namespace forge::font
