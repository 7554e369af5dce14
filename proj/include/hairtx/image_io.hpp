#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hairtx/errors.hpp"
#include "hairtx/mask.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decode any 8/16-bit gray/palette/rgb/rgba PNG to packed RGB8 rows.
inline void read_png_rgb8(const std::string& path, int& height, int& width,
                          std::vector<unsigned char>& rgb) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png decode failed: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  rgb.assign(static_cast<size_t>(height) * width * 3, 0);
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<size_t>(y)] = rgb.data() + static_cast<size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

inline void write_png(const std::string& path, int height, int width, int channels,
                      const unsigned char* bytes) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for write: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(bytes + static_cast<size_t>(y) * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// 8-bit RGB PNG -> [3,H,W] image with values in [0,1].
inline Image read_image(const std::string& path) {
  int h = 0, w = 0;
  std::vector<unsigned char> rgb;
  detail::read_png_rgb8(path, h, w, rgb);
  Image img({3, h, w});
  const int hw = h * w;
  for (int i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c)
      img.data[static_cast<size_t>(c) * hw + i] = rgb[static_cast<size_t>(i) * 3 + c] / 255.0;
  return img;
}

inline void write_image(const std::string& path, const Image& img) {
  require_image(img, "write_image");
  const int h = img.dim(1), w = img.dim(2), hw = h * w;
  std::vector<unsigned char> rgb(static_cast<size_t>(hw) * 3);
  for (int i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(img.data[static_cast<size_t>(c) * hw + i], 0.0, 1.0);
      rgb[static_cast<size_t>(i) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  detail::write_png(path, h, w, 3, rgb.data());
}

/// Single-channel 8-bit PNG, threshold >127 -> 1. RGB inputs use the red
/// channel (channels are equal for grayscale-as-RGB files).
inline BinaryMask read_mask(const std::string& path) {
  int h = 0, w = 0;
  std::vector<unsigned char> rgb;
  detail::read_png_rgb8(path, h, w, rgb);
  BinaryMask m(h, w);
  for (int i = 0; i < h * w; ++i) m.v[static_cast<size_t>(i)] = rgb[static_cast<size_t>(i) * 3] > 127 ? 1 : 0;
  return m;
}

inline void write_mask(const std::string& path, const BinaryMask& m) {
  std::vector<unsigned char> g(m.v.size());
  for (size_t i = 0; i < m.v.size(); ++i) g[i] = m.v[i] ? 255 : 0;
  detail::write_png(path, m.height, m.width, 1, g.data());
}

}  // namespace hairtx
