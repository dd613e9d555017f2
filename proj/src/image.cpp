// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace onlyflow {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void write_png(const Image& img, const std::string& path) {
  check(img.height > 0 && img.width > 0, Errc::NonPositiveDims, "empty image: " + path);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(Errc::IoFailure, "cannot open for write: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(Errc::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(Errc::IoFailure, "png_create_info_struct failed");
  }
  std::vector<unsigned char> row_buf((size_t)img.width * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::IoFailure, "libpng write error: " + path);
  }
  png_init_io(png, fp.get());
  // Fixed filter/level so identical pixels always produce identical bytes.
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = img.at(y, x, c);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        row_buf[(size_t)x * 3 + c] = (unsigned char)std::lround(v * 255.0);
      }
    }
    png_write_row(png, row_buf.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(Errc::IoFailure, "cannot open: " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(Errc::IoFailure, "not a PNG file: " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(Errc::IoFailure, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(Errc::IoFailure, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::IoFailure, "libpng read error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int h = (int)png_get_image_height(png, info);
  const int w = (int)png_get_image_width(png, info);
  Image img(h, w);
  std::vector<unsigned char> row_buf(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row_buf.data(), nullptr);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = row_buf[(size_t)x * 3 + c] / 255.0;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

double mean_abs_diff(const Image& a, const Image& b) {
  check(a.height == b.height && a.width == b.width, Errc::ShapeMismatch, "image shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
  return a.data.empty() ? 0.0 : s / (double)a.data.size();
}

}  // namespace onlyflow
