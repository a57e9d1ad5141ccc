#pragma once

#include <png.h>

#include <cstdio>
#include <string>

#include "hd/core/types.hpp"

// 8-bit RGB for images, 16-bit grayscale for depth at a fixed scale of 256
// (value 0 marks a pixel with no depth).

namespace hd {

inline constexpr double kDepthPngScale = 256.0;

inline void save_png_rgb8(const std::string& path, const TensorF& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("save_png_rgb8: expected {3,H,W}, got " + image.shape_str());
  const int H = image.dim(1), W = image.dim(2);
  std::vector<png_byte> buf(static_cast<size_t>(H) * W * 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(std::max(static_cast<double>(image.at(c, y, x)), 0.0), 1.0);
        buf[(static_cast<size_t>(y) * W + x) * 3 + static_cast<size_t>(c)] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
  std::vector<png_bytep> rows(static_cast<size_t>(H));
  for (int y = 0; y < H; ++y) rows[static_cast<size_t>(y)] = &buf[static_cast<size_t>(y) * W * 3];

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline TensorF load_png_rgb8(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // normalize palette/gray/alpha/16-bit variants down to 8-bit RGB
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (!(png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR)) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int W = static_cast<int>(png_get_image_width(png, info));
  const int H = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<size_t>(W) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("unsupported png layout: " + path);
  }
  std::vector<png_byte> buf(static_cast<size_t>(H) * W * 3);
  std::vector<png_bytep> rows(static_cast<size_t>(H));
  for (int y = 0; y < H; ++y) rows[static_cast<size_t>(y)] = &buf[static_cast<size_t>(y) * W * 3];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  TensorF out({3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) = static_cast<float>(
            buf[(static_cast<size_t>(y) * W + x) * 3 + static_cast<size_t>(c)] / 255.0);
  return out;
}

inline void save_depth_png16(const std::string& path, const DepthMap& depth) {
  const int H = depth.depth.dim(0), W = depth.depth.dim(1);
  std::vector<std::uint16_t> buf(static_cast<size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      std::uint16_t v = 0;
      if (depth.valid.at(y, x)) {
        const long q = std::lround(static_cast<double>(depth.depth.at(y, x)) * kDepthPngScale);
        // never let a valid pixel collapse onto the no-depth marker
        v = static_cast<std::uint16_t>(std::min(std::max(q, 1L), 65535L));
      }
      buf[static_cast<size_t>(y) * W + x] = v;
    }
  std::vector<png_bytep> rows(static_cast<size_t>(H));
  for (int y = 0; y < H; ++y)
    rows[static_cast<size_t>(y)] = reinterpret_cast<png_bytep>(&buf[static_cast<size_t>(y) * W]);

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);  // host is little-endian, png stores big-endian
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline DepthMap load_depth_png16(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  if (png_get_bit_depth(png, info) != 16 ||
      png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("not a 16-bit grayscale depth png: " + path);
  }
  png_set_swap(png);
  const int W = static_cast<int>(png_get_image_width(png, info));
  const int H = static_cast<int>(png_get_image_height(png, info));
  std::vector<std::uint16_t> buf(static_cast<size_t>(H) * W);
  std::vector<png_bytep> rows(static_cast<size_t>(H));
  for (int y = 0; y < H; ++y)
    rows[static_cast<size_t>(y)] = reinterpret_cast<png_bytep>(&buf[static_cast<size_t>(y) * W]);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  TensorF depth({H, W});
  Tensor<std::uint8_t> valid({H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::uint16_t v = buf[static_cast<size_t>(y) * W + x];
      depth.at(y, x) = static_cast<float>(v / kDepthPngScale);
      valid.at(y, x) = v > 0 ? 1 : 0;
    }
  return DepthMap(std::move(depth), std::move(valid));
}

}  // namespace hd
