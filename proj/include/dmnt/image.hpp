#pragma once

// PNG read/write (libpng) and conversions to the float tensor layout.

#include <cstdio>
#include <png.h>

#include "dmnt/tensor.hpp"

namespace dmnt {

struct ImageU8 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> data;  // row-major, interleaved
};

inline void write_png(const std::string& path, const ImageU8& img) {
  check(img.channels == 1 || img.channels == 3, "write_png: 1 or 3 channels only");
  check(int64_t(img.data.size()) == int64_t(img.width) * img.height * img.channels,
        "write_png: size mismatch");
  FILE* fp = std::fopen(path.c_str(), "wb");
  check(fp != nullptr, "write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    check(false, "write_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(&img.data[size_t(y) * img.width * img.channels]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline ImageU8 read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  check(fp != nullptr, "read_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    check(false, "read_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info), depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  int channels = int(png_get_channels(png, info));

  ImageU8 img;
  img.width = int(w);
  img.height = int(h);
  img.channels = channels;
  img.data.resize(size_t(w) * h * channels);
  for (png_uint_32 y = 0; y < h; ++y)
    png_read_row(png, &img.data[size_t(y) * w * channels], nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// {H, W, 3} float tensor in [0,1] <-> 8-bit RGB.
inline ImageU8 tensor_to_u8(const Tensor& t) {
  check(t.shape.size() == 3 && t.shape[2] == 3, "tensor_to_u8: {H,W,3} expected");
  ImageU8 img;
  img.height = t.shape[0];
  img.width = t.shape[1];
  img.channels = 3;
  img.data.resize(size_t(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) {
    real x = std::clamp(t[i], real(0), real(1));
    img.data[size_t(i)] = uint8_t(std::lround(double(x) * 255.0));
  }
  return img;
}

inline Tensor u8_to_tensor(const ImageU8& img) {
  check(img.channels == 3, "u8_to_tensor: RGB expected");
  Tensor t({img.height, img.width, 3});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = real(img.data[size_t(i)]) / 255;
  return t;
}

inline ImageU8 mask_to_u8(const std::vector<uint8_t>& mask, int width, int height) {
  check(int64_t(mask.size()) == int64_t(width) * height, "mask_to_u8: size mismatch");
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = 1;
  img.data.resize(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) img.data[i] = mask[i] ? 255 : 0;
  return img;
}

inline std::vector<uint8_t> u8_to_mask(const ImageU8& img) {
  check(img.channels == 1, "u8_to_mask: grayscale expected");
  std::vector<uint8_t> m(img.data.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = img.data[i] >= 128 ? 1 : 0;
  return m;
}

}  // namespace dmnt
