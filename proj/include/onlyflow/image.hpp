// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "onlyflow/common.hpp"

namespace onlyflow {

// H x W x 3 image, values in [0, 1], row-major RGB.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), data((size_t)h * w * 3, fill) {}

  double& at(int y, int x, int c) { return data[((size_t)y * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return data[((size_t)y * width + x) * 3 + c]; }
};

// 8-bit RGB PNG, quantized with round-half-up. Reading expands palette,
// grayscale and 16-bit files to 8-bit RGB and drops alpha.
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

double mean_abs_diff(const Image& a, const Image& b);

}  // namespace onlyflow
