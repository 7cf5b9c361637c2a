#include "weaksurg/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace weaksurg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Copies the message for the IoError thrown after longjmp lands back in our frame.
void png_error_handler(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<std::string*>(png_get_error_ptr(png));
  if (sink && msg) *sink = msg;
  longjmp(png_jmpbuf(png), 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

struct WriteCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteCtx() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

struct ReadCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadCtx() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

}  // namespace

void write_png_rgb8(const std::string& path, const ImageU8& img) {
  check_io(img.width > 0 && img.height > 0, "write_png_rgb8: empty image for ", path);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  check_io(fp != nullptr, "cannot open for writing: ", path);

  std::string errmsg;
  WriteCtx ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler,
                                    png_warning_handler);
  check_io(ctx.png != nullptr, "png_create_write_struct failed for ", path);
  ctx.info = png_create_info_struct(ctx.png);
  check_io(ctx.info != nullptr, "png_create_info_struct failed for ", path);

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(&img.data[static_cast<std::size_t>(y) * img.width * 3]);

  if (setjmp(png_jmpbuf(ctx.png)))
    throw IoError(strcat("png write failed: ", path, " (", errmsg, ")"));

  png_init_io(ctx.png, fp.get());
  png_set_IHDR(ctx.png, ctx.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

ImageU8 read_png_rgb8(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  check_io(fp != nullptr, "cannot open: ", path);

  std::string errmsg;
  ReadCtx ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler,
                                   png_warning_handler);
  check_io(ctx.png != nullptr, "png_create_read_struct failed for ", path);
  ctx.info = png_create_info_struct(ctx.png);
  check_io(ctx.info != nullptr, "png_create_info_struct failed for ", path);

  ImageU8 img;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(ctx.png)))
    throw IoError(strcat("png read failed: ", path, " (", errmsg, ")"));

  png_init_io(ctx.png, fp.get());
  png_read_info(ctx.png, ctx.info);
  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  check_io(png_get_bit_depth(ctx.png, ctx.info) == 8, "expected 8-bit PNG: ", path);
  check_io(png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_RGB,
           "expected RGB PNG: ", path);
  img = ImageU8(static_cast<int>(w), static_cast<int>(h));
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = &img.data[static_cast<std::size_t>(y) * w * 3];
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);
  return img;
}

void write_png_gray16(const std::string& path, const MaskU16& mask) {
  check_io(mask.width > 0 && mask.height > 0, "write_png_gray16: empty mask for ", path);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  check_io(fp != nullptr, "cannot open for writing: ", path);

  std::string errmsg;
  WriteCtx ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler,
                                    png_warning_handler);
  check_io(ctx.png != nullptr, "png_create_write_struct failed for ", path);
  ctx.info = png_create_info_struct(ctx.png);
  check_io(ctx.info != nullptr, "png_create_info_struct failed for ", path);

  // Multi-byte samples go out MSB-first per the PNG byte-order rules.
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(mask.width) * mask.height * 2);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    buf[2 * i] = static_cast<std::uint8_t>(mask.data[i] >> 8);
    buf[2 * i + 1] = static_cast<std::uint8_t>(mask.data[i] & 0xff);
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(mask.height));
  for (int y = 0; y < mask.height; ++y)
    rows[y] = &buf[static_cast<std::size_t>(y) * mask.width * 2];

  if (setjmp(png_jmpbuf(ctx.png)))
    throw IoError(strcat("png write failed: ", path, " (", errmsg, ")"));

  png_init_io(ctx.png, fp.get());
  png_set_IHDR(ctx.png, ctx.info, mask.width, mask.height, 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

MaskU16 read_png_gray16(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  check_io(fp != nullptr, "cannot open: ", path);

  std::string errmsg;
  ReadCtx ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler,
                                   png_warning_handler);
  check_io(ctx.png != nullptr, "png_create_read_struct failed for ", path);
  ctx.info = png_create_info_struct(ctx.png);
  check_io(ctx.info != nullptr, "png_create_info_struct failed for ", path);

  MaskU16 mask;
  std::vector<std::uint8_t> buf;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(ctx.png)))
    throw IoError(strcat("png read failed: ", path, " (", errmsg, ")"));

  png_init_io(ctx.png, fp.get());
  png_read_info(ctx.png, ctx.info);
  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  check_io(png_get_bit_depth(ctx.png, ctx.info) == 16, "expected 16-bit PNG: ", path);
  check_io(png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_GRAY,
           "expected grayscale PNG: ", path);
  mask = MaskU16(static_cast<int>(w), static_cast<int>(h));
  buf.resize(static_cast<std::size_t>(w) * h * 2);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = &buf[static_cast<std::size_t>(y) * w * 2];
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  return mask;
}

}  // namespace weaksurg
