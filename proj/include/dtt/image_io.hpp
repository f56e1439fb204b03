#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dtt/geometry.hpp"

namespace dtt {

// 8-bit single channel image (segmentation masks).
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

// PNG encoders write with fixed settings and no timestamps, so equal pixels
// always give equal bytes. Readers throw IoError on unreadable files and
// InputError on an unexpected bit depth or channel layout.
void write_png(const std::filesystem::path &path, const RgbImage &image);
void write_png(const std::filesystem::path &path, const MaskImage &image);
void write_png(const std::filesystem::path &path, const DepthFrame &depth);

RgbImage read_rgb_png(const std::filesystem::path &path);
MaskImage read_mask_png(const std::filesystem::path &path);
DepthFrame read_depth_png(const std::filesystem::path &path);

}  // namespace dtt
