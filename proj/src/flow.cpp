// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/flow.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace onlyflow::flow {

namespace {

constexpr float kFloMagic = 202021.25f;
constexpr double kPi = 3.14159265358979323846;

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void validate(const FlowField& f) {
  check(f.frames >= 1 && f.height >= 1 && f.width >= 1, Errc::NonPositiveDims, "flow field dims");
  check(f.data.size() == (size_t)f.frames * f.height * f.width * 2, Errc::ShapeMismatch,
        "flow field buffer size");
  for (double v : f.data) {
    check(std::isfinite(v), Errc::BadRange, "non-finite flow value");
  }
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      check(f.at(0, y, x, 0) == 0.0 && f.at(0, y, x, 1) == 0.0, Errc::BadRange,
            "flow entry 0 must be zero padding");
    }
  }
  for (int t = 0; t < f.frames; ++t) {
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) {
        check(std::fabs(f.at(t, y, x, 0)) < f.width && std::fabs(f.at(t, y, x, 1)) < f.height,
              Errc::BadRange, "flow displacement exceeds frame size");
      }
    }
  }
}

FlowFrame slice(const FlowField& f, int t) {
  check(t >= 0 && t < f.frames, Errc::BadDims, "flow slice index");
  FlowFrame out(f.height, f.width);
  std::memcpy(out.data.data(), f.data.data() + (size_t)t * f.height * f.width * 2,
              sizeof(double) * out.data.size());
  return out;
}

void set_slice(FlowField& f, int t, const FlowFrame& fr) {
  check(t >= 0 && t < f.frames, Errc::BadDims, "flow slice index");
  check(fr.height == f.height && fr.width == f.width, Errc::ShapeMismatch, "flow slice shape");
  std::memcpy(f.data.data() + (size_t)t * f.height * f.width * 2, fr.data.data(),
              sizeof(double) * fr.data.size());
}

FlowFrame read_flo(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(Errc::IoFailure, "cannot open: " + path);

  float magic = 0.0f;
  int32_t w = 0, h = 0;
  if (std::fread(&magic, 4, 1, fp.get()) != 1) fail(Errc::TruncatedFile, "missing magic: " + path);
  if (magic != kFloMagic) fail(Errc::MagicMismatch, "not a .flo file: " + path);
  if (std::fread(&w, 4, 1, fp.get()) != 1 || std::fread(&h, 4, 1, fp.get()) != 1) {
    fail(Errc::TruncatedFile, "missing dimensions: " + path);
  }
  if (w <= 0 || h <= 0) fail(Errc::NonPositiveDims, "bad .flo dimensions: " + path);

  FlowFrame out(h, w);
  const size_t n = (size_t)w * h * 2;
  std::vector<float> buf(n);
  if (std::fread(buf.data(), 4, n, fp.get()) != n) {
    fail(Errc::TruncatedFile, "payload shorter than width*height*2 floats: " + path);
  }
  for (size_t i = 0; i < n; ++i) out.data[i] = buf[i];
  return out;
}

void write_flo(const FlowFrame& field, const std::string& path) {
  check(field.height > 0 && field.width > 0, Errc::NonPositiveDims, "empty flow frame");
  for (double v : field.data) {
    check(std::isfinite(v), Errc::BadRange, "flow contains non-finite values");
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(Errc::IoFailure, "cannot open for write: " + path);

  const int32_t w = field.width, h = field.height;
  const size_t n = (size_t)w * h * 2;
  std::vector<float> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = (float)field.data[i];
  if (std::fwrite(&kFloMagic, 4, 1, fp.get()) != 1 || std::fwrite(&w, 4, 1, fp.get()) != 1 ||
      std::fwrite(&h, 4, 1, fp.get()) != 1 || std::fwrite(buf.data(), 4, n, fp.get()) != n) {
    fail(Errc::IoFailure, "short write: " + path);
  }
}

void camera_flow_at(const CameraMotionSpec& spec, double x, double y, double& u, double& v) {
  switch (spec.kind) {
    case CameraKind::Pan:
      u = spec.magnitude;
      v = 0.0;
      return;
    case CameraKind::Zoom:
      u = spec.magnitude * (x - spec.center_x);
      v = spec.magnitude * (y - spec.center_y);
      return;
    case CameraKind::Rotate:
      u = spec.magnitude * -(y - spec.center_y);
      v = spec.magnitude * (x - spec.center_x);
      return;
  }
  u = v = 0.0;
}

FlowField synth_camera_flow(const CameraMotionSpec& spec, int frames, int height, int width) {
  check(frames >= 2 && height >= 1 && width >= 1, Errc::BadDims, "synth_camera_flow dims");
  check(std::isfinite(spec.magnitude), Errc::BadRange, "camera magnitude must be finite");
  if (spec.kind != CameraKind::Pan) {
    check(spec.center_x >= 0 && spec.center_x <= width - 1 && spec.center_y >= 0 &&
              spec.center_y <= height - 1,
          Errc::BadRange, "camera center outside frame");
  }
  FlowField out(frames, height, width);
  for (int t = 1; t < frames; ++t) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double u, v;
        camera_flow_at(spec, x, y, u, v);
        out.at(t, y, x, 0) = u;
        out.at(t, y, x, 1) = v;
      }
    }
  }
  return out;
}

Image warp_frame(const Image& frame, const FlowFrame& fl) {
  check(frame.height == fl.height && frame.width == fl.width, Errc::ShapeMismatch,
        "warp_frame shapes disagree");
  const int H = frame.height, W = frame.width;
  Image out(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double sx = x - fl.at(y, x, 0);
      double sy = y - fl.at(y, x, 1);
      // Border clamp.
      sx = sx < 0 ? 0 : (sx > W - 1 ? W - 1 : sx);
      sy = sy < 0 ? 0 : (sy > H - 1 ? H - 1 : sy);
      const int x0 = (int)std::floor(sx);
      const int y0 = (int)std::floor(sy);
      const int x1 = x0 + 1 < W ? x0 + 1 : W - 1;
      const int y1 = y0 + 1 < H ? y0 + 1 : H - 1;
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < 3; ++c) {
        const double top = frame.at(y0, x0, c) * (1 - fx) + frame.at(y0, x1, c) * fx;
        const double bot = frame.at(y1, x0, c) * (1 - fx) + frame.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

double flow_mad(const FlowField& a, const FlowField& b) {
  check(a.same_shape(b), Errc::ShapeMismatch, "flow_mad shapes disagree");
  if (a.frames < 2) return 0.0;
  const size_t per_frame = (size_t)a.height * a.width * 2;
  double s = 0.0;
  for (size_t i = per_frame; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
  return s / (double)((a.frames - 1) * per_frame);
}

namespace {

// 55-entry Middlebury color wheel: smooth transitions RY-YG-GC-CB-BM-MR.
struct Wheel {
  std::vector<double> r, g, b;
  Wheel() {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    auto push = [&](double rr, double gg, double bb) {
      r.push_back(rr);
      g.push_back(gg);
      b.push_back(bb);
    };
    for (int i = 0; i < RY; ++i) push(1.0, (double)i / RY, 0.0);
    for (int i = 0; i < YG; ++i) push(1.0 - (double)i / YG, 1.0, 0.0);
    for (int i = 0; i < GC; ++i) push(0.0, 1.0, (double)i / GC);
    for (int i = 0; i < CB; ++i) push(0.0, 1.0 - (double)i / CB, 1.0);
    for (int i = 0; i < BM; ++i) push((double)i / BM, 0.0, 1.0);
    for (int i = 0; i < MR; ++i) push(1.0, 0.0, 1.0 - (double)i / MR);
  }
  size_t size() const { return r.size(); }
};

const Wheel& wheel() {
  static Wheel w;
  return w;
}

}  // namespace

void color_wheel_at(double angle, double& r, double& g, double& b) {
  const Wheel& w = wheel();
  const int n = (int)w.size();
  double pos = angle / (2.0 * kPi);
  pos -= std::floor(pos);  // wrap to [0,1)
  const double fk = pos * n;
  const int k0 = std::min((int)fk, n - 1);
  const int k1 = (k0 + 1) % n;
  const double f = fk - k0;
  r = (1 - f) * w.r[k0] + f * w.r[k1];
  g = (1 - f) * w.g[k0] + f * w.g[k1];
  b = (1 - f) * w.b[k0] + f * w.b[k1];
}

Image flow_to_color(const FlowFrame& fl) {
  const int H = fl.height, W = fl.width;
  double max_mag = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double m = std::hypot(fl.at(y, x, 0), fl.at(y, x, 1));
      if (m > max_mag) max_mag = m;
    }
  }
  Image out(H, W, 1.0);
  if (max_mag == 0.0) return out;  // all white
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double u = fl.at(y, x, 0), v = fl.at(y, x, 1);
      const double m = std::hypot(u, v) / max_mag;
      double r, g, b;
      color_wheel_at(std::atan2(v, u), r, g, b);
      out.at(y, x, 0) = 1.0 - m * (1.0 - r);
      out.at(y, x, 1) = 1.0 - m * (1.0 - g);
      out.at(y, x, 2) = 1.0 - m * (1.0 - b);
    }
  }
  return out;
}

}  // namespace onlyflow::flow
