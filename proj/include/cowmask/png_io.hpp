#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cowmask/maskgen.hpp"

namespace cowmask {

/// 8-bit image, interleaved when channels == 3.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Writes 8-bit grayscale (channels == 1) or RGB (channels == 3) PNG.
void write_png(const std::filesystem::path& path, const PngImage& image);
/// Reads any PNG, converted to 8-bit gray or RGB depending on its colour type.
PngImage read_png(const std::filesystem::path& path);

/// Mask values in [0, 1] to gray levels: 0 -> 0 (black), 1 -> 255 (white).
PngImage mask_to_png(const Mask& mask);

}  // namespace cowmask
