// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense optical flow: data model, Middlebury .flo I/O, synthetic parametric
// camera flows, backward warping, metrics and color-wheel rendering.

#pragma once

#include <string>
#include <vector>

#include "onlyflow/common.hpp"
#include "onlyflow/image.hpp"

namespace onlyflow::flow {

// One displacement field per frame, channel 0 = u (horizontal, pixels/frame,
// positive rightward), channel 1 = v (vertical, positive downward).
// Entry t holds the motion of pair t-1 -> t, anchored at the frame t-1 pixel
// grid; entry 0 is all-zero padding so flow and video stacks share length F.
struct FlowField {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;  // F*H*W*2, row-major

  FlowField() = default;
  FlowField(int f, int h, int w) : frames(f), height(h), width(w), data((size_t)f * h * w * 2, 0.0) {}

  double& at(int t, int y, int x, int c) { return data[(((size_t)t * height + y) * width + x) * 2 + c]; }
  double at(int t, int y, int x, int c) const { return data[(((size_t)t * height + y) * width + x) * 2 + c]; }

  bool same_shape(const FlowField& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
};

// Checks finiteness, |u| < W, |v| < H and the zero first entry.
void validate(const FlowField& f);

// A single-frame H x W x 2 field, the unit of .flo interchange.
struct FlowFrame {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // H*W*2

  FlowFrame() = default;
  FlowFrame(int h, int w) : height(h), width(w), data((size_t)h * w * 2, 0.0) {}

  double& at(int y, int x, int c) { return data[((size_t)y * width + x) * 2 + c]; }
  double at(int y, int x, int c) const { return data[((size_t)y * width + x) * 2 + c]; }
};

FlowFrame slice(const FlowField& f, int t);
void set_slice(FlowField& f, int t, const FlowFrame& fr);

// Middlebury .flo layout: float32 magic 202021.25, int32 width, int32 height,
// then H*W interleaved (u, v) float32 pairs in row-major order, all
// little-endian. File size is therefore 12 + H*W*8 bytes.
FlowFrame read_flo(const std::string& path);
void write_flo(const FlowFrame& field, const std::string& path);

enum class CameraKind { Pan, Zoom, Rotate };

struct CameraMotionSpec {
  CameraKind kind = CameraKind::Pan;
  // pan: pixels/frame along +x; zoom: scale rate/frame; rotate: radians/frame.
  double magnitude = 0.0;
  double center_x = 0.0;  // used by zoom and rotate
  double center_y = 0.0;
};

// Evaluates the camera displacement at pixel (x, y).
void camera_flow_at(const CameraMotionSpec& spec, double x, double y, double& u, double& v);

// pan: u == magnitude, v == 0; zoom: (u,v) = magnitude*((x-cx),(y-cy));
// rotate: (u,v) = magnitude*(-(y-cy),(x-cx)); frame 0 stays zero.
FlowField synth_camera_flow(const CameraMotionSpec& spec, int frames, int height, int width);

// Backward warp: output(x,y) = bilinear sample of `frame` at (x-u, y-v),
// clamped to the border. With flow entry t anchored at the frame t-1 grid,
// warping frame t-1 by entry t predicts frame t.
Image warp_frame(const Image& frame, const FlowFrame& fl);

// Mean absolute difference over frames 1..F-1, all pixels and both channels.
// Frame 0 is the padding entry and is excluded.
double flow_mad(const FlowField& a, const FlowField& b);

// Middlebury-style color wheel: angle -> hue, magnitude -> saturation
// normalized by the field's max magnitude; zero flow renders white.
Image flow_to_color(const FlowFrame& fl);

// The wheel color for a unit vector at `angle` radians (0 = +x, pure right).
void color_wheel_at(double angle, double& r, double& g, double& b);

}  // namespace onlyflow::flow
