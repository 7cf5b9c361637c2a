#pragma once

#include <string>

#include "weaksurg/image.hpp"

namespace weaksurg {

void write_png_rgb8(const std::string& path, const ImageU8& img);
ImageU8 read_png_rgb8(const std::string& path);

void write_png_gray16(const std::string& path, const MaskU16& mask);
MaskU16 read_png_gray16(const std::string& path);

}  // namespace weaksurg
