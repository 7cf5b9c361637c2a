#include "weaksurg/image.hpp"

#include <algorithm>
#include <cmath>

namespace weaksurg {

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - 360.0 * std::floor(h / 360.0);
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  if (hp < 1)      { r1 = c; g1 = x; }
  else if (hp < 2) { r1 = x; g1 = c; }
  else if (hp < 3) { g1 = c; b1 = x; }
  else if (hp < 4) { g1 = x; b1 = c; }
  else if (hp < 5) { r1 = x; b1 = c; }
  else             { r1 = c; b1 = x; }
  const double m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h) {
  check_config(src.width > 0 && src.height > 0, "resize: empty source");
  ImageU8 out(out_w, out_h);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
        const double bot = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
        const double v = top * (1 - wy) + bot * wy;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

ImageU8 crop(const ImageU8& src, const Rect& box) {
  check_config(box.x >= 0 && box.y >= 0 && box.x + box.w <= src.width &&
                   box.y + box.h <= src.height && box.w > 0 && box.h > 0,
               "crop: box outside image");
  ImageU8 out(box.w, box.h);
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = src.at(box.x + x, box.y + y, c);
  return out;
}

Matrix upsample_bilinear(const Matrix& grid, int out_h, int out_w) {
  const int gh = static_cast<int>(grid.rows());
  const int gw = static_cast<int>(grid.cols());
  Matrix out(out_h, out_w);
  const double sx = static_cast<double>(gw) / out_w;
  const double sy = static_cast<double>(gh) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), gh - 1);
    const int y1 = std::min(y0 + 1, gh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), gw - 1);
      const int x1 = std::min(x0 + 1, gw - 1);
      const double wx = fx - x0;
      const double top = grid(y0, x0) * (1 - wx) + grid(y0, x1) * wx;
      const double bot = grid(y1, x0) * (1 - wx) + grid(y1, x1) * wx;
      out(y, x) = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

Matrix image_to_patch_matrix(const ImageU8& img, int patch_size) {
  check_config(patch_size > 0 && img.width % patch_size == 0 && img.height % patch_size == 0,
               "patchify: image ", img.width, "x", img.height,
               " not divisible by patch size ", patch_size);
  const int gw = img.width / patch_size;
  const int gh = img.height / patch_size;
  const int dim = 3 * patch_size * patch_size;
  Matrix out(static_cast<Eigen::Index>(gw) * gh, dim);
  for (int py = 0; py < gh; ++py) {
    for (int px = 0; px < gw; ++px) {
      const Eigen::Index row = static_cast<Eigen::Index>(py) * gw + px;
      int k = 0;
      for (int dy = 0; dy < patch_size; ++dy)
        for (int dx = 0; dx < patch_size; ++dx)
          for (int c = 0; c < 3; ++c)
            out(row, k++) =
                img.at(px * patch_size + dx, py * patch_size + dy, c) / 127.5 - 1.0;
    }
  }
  return out;
}

}  // namespace weaksurg
