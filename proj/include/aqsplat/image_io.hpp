#pragma once

#include "aqsplat/scene.hpp"

#include <string>

namespace aqsp {

/// 8-bit PNG export; values are clamped to [0, 1] and rounded. 1 or 3 channels.
void write_png(const std::string& path, const ImageBuffer& image);
/// Gray, gray+alpha, RGB, or RGBA input; alpha is dropped. Values scaled to [0, 1].
ImageBuffer read_png(const std::string& path);

/// Value the PNG round-trip would produce: round(clamp(v) * 255) / 255.
ImageBuffer quantize_8bit(const ImageBuffer& image);

/// Raw little-endian float32, row-major, channel-interleaved.
void write_f32(const std::string& path, const ImageBuffer& image);
ImageBuffer read_f32(const std::string& path, int width, int height, int channels);

}  // namespace aqsp
