// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "onlyflow/evaluate.hpp"
#include "onlyflow/image.hpp"

namespace onlyflow::plot {

void draw_text(Image& img, int x, int y, const std::string& text, double r, double g, double b);
void draw_line(Image& img, double x0, double y0, double x1, double y1, double r, double g,
               double b);

// Three panels (flow MAD, probe accuracy, Frechet distance) against gamma.
// Output carries no timestamps; identical reports render identical bytes.
Image render_sweep(const evaluate::EvalReport& report);
void save_sweep_plot(const evaluate::EvalReport& report, const std::string& path);

}  // namespace onlyflow::plot
