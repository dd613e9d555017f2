// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace onlyflow::plot {

namespace {

// 5x7 bitmap glyphs, row bits MSB = leftmost column.
const std::map<char, std::array<uint8_t, 7>>& font() {
  static const std::map<char, std::array<uint8_t, 7>> f = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
      {'b', {0x10, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x1E}},
      {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
      {'d', {0x01, 0x01, 0x0F, 0x11, 0x11, 0x11, 0x0F}},
      {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
      {'f', {0x06, 0x08, 0x1C, 0x08, 0x08, 0x08, 0x08}},
      {'g', {0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
      {'h', {0x10, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x11}},
      {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
      {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
      {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x15, 0x15}},
      {'n', {0x00, 0x00, 0x1E, 0x11, 0x11, 0x11, 0x11}},
      {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
      {'p', {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10}},
      {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
      {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
      {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}},
      {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'w', {0x00, 0x00, 0x15, 0x15, 0x15, 0x15, 0x0A}},
      {'x', {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11}},
      {'y', {0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
  };
  return f;
}

void put_pixel(Image& img, int x, int y, double r, double g, double b) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
  img.at(y, x, 0) = r;
  img.at(y, x, 1) = g;
  img.at(y, x, 2) = b;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Panel {
  int x0, y0, w, h;
};

void draw_panel(Image& img, const Panel& p, const std::string& title,
                const std::vector<double>& xs, const std::vector<double>& ys, double cr,
                double cg, double cb) {
  // Frame.
  draw_line(img, p.x0, p.y0, p.x0, p.y0 + p.h, 0.2, 0.2, 0.2);
  draw_line(img, p.x0, p.y0 + p.h, p.x0 + p.w, p.y0 + p.h, 0.2, 0.2, 0.2);
  draw_text(img, p.x0, p.y0 - 14, title, 0.1, 0.1, 0.1);

  double ymin = ys[0], ymax = ys[0];
  for (double v : ys) {
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  if (ymax - ymin < 1e-12) {
    ymax += 1.0;
    ymin -= ymax == ymin ? 1.0 : 0.0;
  }
  const double pad = 0.08 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  double xmin = xs.front(), xmax = xs.back();
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;

  auto map_x = [&](double v) { return p.x0 + (v - xmin) / (xmax - xmin) * p.w; };
  auto map_y = [&](double v) { return p.y0 + p.h - (v - ymin) / (ymax - ymin) * p.h; };

  for (size_t i = 0; i + 1 < xs.size(); ++i) {
    draw_line(img, map_x(xs[i]), map_y(ys[i]), map_x(xs[i + 1]), map_y(ys[i + 1]), cr, cg, cb);
  }
  for (size_t i = 0; i < xs.size(); ++i) {
    const int cx = (int)std::lround(map_x(xs[i]));
    const int cy = (int)std::lround(map_y(ys[i]));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) put_pixel(img, cx + dx, cy + dy, cr, cg, cb);
    draw_text(img, cx - 8, p.y0 + p.h + 4, fmt(xs[i]), 0.25, 0.25, 0.25);
  }
  draw_text(img, p.x0 + 2, p.y0 + 2, fmt(ymax - pad), 0.35, 0.35, 0.35);
  draw_text(img, p.x0 + 2, p.y0 + p.h - 10, fmt(ymin + pad), 0.35, 0.35, 0.35);
  draw_text(img, p.x0 + p.w / 2 - 14, p.y0 + p.h + 16, "gamma", 0.1, 0.1, 0.1);
}

}  // namespace

void draw_text(Image& img, int x, int y, const std::string& text, double r, double g, double b) {
  int cx = x;
  for (char ch : text) {
    auto it = font().find(ch);
    if (it != font().end()) {
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (it->second[row] & (1 << (4 - col))) put_pixel(img, cx + col, y + row, r, g, b);
        }
      }
    }
    cx += 6;
  }
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, double r, double g,
               double b) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = (int)std::ceil(std::max(std::fabs(dx), std::fabs(dy))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = steps == 0 ? 0.0 : (double)i / steps;
    put_pixel(img, (int)std::lround(x0 + t * dx), (int)std::lround(y0 + t * dy), r, g, b);
  }
}

Image render_sweep(const evaluate::EvalReport& report) {
  check(!report.rows.empty(), Errc::EmptyEvalSet, "report has no rows");
  const int panel_w = 240, panel_h = 170;
  const int margin = 42;
  Image img(panel_h + 80, 3 * (panel_w + margin) + margin, 1.0);

  std::vector<double> xs, mad, acc, fvd;
  for (const auto& row : report.rows) {
    xs.push_back(row.gamma);
    mad.push_back(row.mad_mean);
    acc.push_back(row.probe_accuracy);
    fvd.push_back(row.frechet);
  }
  draw_panel(img, {margin, 34, panel_w, panel_h}, "flow mad", xs, mad, 0.85, 0.35, 0.1);
  draw_panel(img, {2 * margin + panel_w, 34, panel_w, panel_h}, "probe accuracy", xs, acc, 0.1,
             0.4, 0.8);
  draw_panel(img, {3 * margin + 2 * panel_w, 34, panel_w, panel_h}, "frechet distance", xs, fvd,
             0.2, 0.6, 0.3);
  return img;
}

void save_sweep_plot(const evaluate::EvalReport& report, const std::string& path) {
  write_png(render_sweep(report), path);
}

}  // namespace onlyflow::plot
