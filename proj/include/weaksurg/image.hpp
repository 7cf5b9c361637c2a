#pragma once

#include <cstdint>
#include <vector>

#include "weaksurg/common.hpp"

namespace weaksurg {

/// Interleaved 8-bit RGB image.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // size = width*height*3, row-major, RGB

  ImageU8() = default;
  ImageU8(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const ImageU8&) const = default;
};

/// Single-channel 16-bit image (instance-id masks).
struct MaskU16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;  // row-major

  MaskU16() = default;
  MaskU16(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint16_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const MaskU16&) const = default;
};

/// Binary mask stored as bytes (0/1).
struct MaskU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  MaskU8() = default;
  MaskU8(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += (v != 0);
    return n;
  }
  bool operator==(const MaskU8&) const = default;
};

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
};

/// h in [0,360), s,v in [0,1] -> rgb in [0,1].
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h);
ImageU8 crop(const ImageU8& src, const Rect& box);

/// Bilinear upsample of a patch-grid map to image resolution (grid cells are
/// sampled at their centers).
Matrix upsample_bilinear(const Matrix& grid, int out_h, int out_w);

/// Rows are flattened patches in scan order; values normalized to [-1, 1].
Matrix image_to_patch_matrix(const ImageU8& img, int patch_size);

}  // namespace weaksurg
