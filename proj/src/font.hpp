#pragma once

#include <array>
#include <cstdint>

namespace docsynth::font {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
inline constexpr int kGlyphCount = 36;

/// Row bitmaps, bit 4 = leftmost column. Index 0-25: A-Z, 26-35: 0-9.
const std::array<std::uint8_t, kGlyphHeight>& glyph(int index);

}  // namespace docsynth::font
