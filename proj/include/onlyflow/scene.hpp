// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic moving-shape clips with analytically exact ground-truth flow,
// template captions, and the on-disk dataset layout
//   <root>/<clip_id>/frames/%05d.png
//   <root>/<clip_id>/flow/%05d.flo   (file t = motion t-1 -> t)
//   <root>/manifest.json

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "onlyflow/flow.hpp"
#include "onlyflow/image.hpp"

namespace onlyflow::data {

struct VideoClip {
  std::vector<Image> frames;
  std::string caption;
  std::optional<flow::FlowField> gt_flow;

  int frame_count() const { return (int)frames.size(); }
  int height() const { return frames.empty() ? 0 : frames[0].height; }
  int width() const { return frames.empty() ? 0 : frames[0].width; }
};

enum class ShapeKind { Circle, Square, Triangle };

struct ShapeSpec {
  ShapeKind kind = ShapeKind::Circle;
  std::string color;   // template vocabulary color name
  double size = 8.0;   // pixels (scene space)
  double x0 = 0.0, y0 = 0.0;
  double vx = 0.0, vy = 0.0;  // pixels/frame (scene space)
};

struct SceneSpec {
  // Background: flat color, or a vertical gradient from top to bottom.
  double bg_top[3] = {0.1, 0.1, 0.12};
  double bg_bottom[3] = {0.1, 0.1, 0.12};
  bool gradient = false;
  std::vector<ShapeSpec> shapes;  // at most 3, later entries on top
  std::optional<flow::CameraMotionSpec> camera;
  int frames = 16, height = 64, width = 64;
};

// Shape trajectories must stay >= size/2 inside bounds for every frame; a
// zoom or rotate camera is only valid with static shapes (so the stored flow
// formula is exact).
void validate(const SceneSpec& spec);

// Motion classes recognized by the label-soundness check.
enum class MotionClass { Left, Right, Up, Down, Static, Pan, Zoom, Rotate };
const char* motion_class_name(MotionClass m);

struct RenderedClip {
  VideoClip video;            // gt_flow always present
  std::string caption;
  // One mask per flow entry 1..F-1 (index t-1), H*W bytes, 1 = pixel whose
  // surface identity changes between the pair (or whose warp source leaves
  // the frame); excluded from warp-consistency checks.
  std::vector<std::vector<uint8_t>> occlusion;
  MotionClass motion_class = MotionClass::Static;
  int content_class = 0;
};

// Rendering is deterministic; the seed only tags the clip and is reserved for
// future stochastic augmentation.
RenderedClip render_clip(const SceneSpec& spec, uint64_t seed);

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

constexpr int kTokenLen = 16;
constexpr int kNullToken = 0;

const std::vector<std::string>& vocabulary();
int vocab_size();
std::vector<int> tokenize(const std::string& caption);
std::string detokenize(const std::vector<int>& tokens);

const std::vector<std::string>& color_names();
void color_rgb(const std::string& name, double& r, double& g, double& b);
int content_class_count();
int content_class_of(ShapeKind kind, const std::string& color);
std::string content_caption(ShapeKind kind, const std::string& color);

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct GenerationConfig {
  int clips = 64;
  int frames = 16, height = 64, width = 64;
  std::vector<std::string> colors = {"red", "green", "blue", "yellow", "cyan", "magenta"};
  std::vector<double> sizes;          // defaults scale with geometry if empty
  std::vector<double> speeds = {1.0, 2.0, 3.0};
  double static_probability = 0.2;    // primary shape stands still
  double second_shape_probability = 0.5;
  double gradient_probability = 0.5;
  double camera_probability = 0.25;
  std::vector<double> pan_magnitudes = {1.0, 2.0};
  std::vector<double> zoom_magnitudes = {0.03, 0.05};
  std::vector<double> rotate_magnitudes = {0.04, 0.06};
};

struct ClipRecord {
  std::string id;
  std::string caption;
  std::string frames_dir;  // relative to the dataset root
  std::string flow_dir;
  int motion_class = 0;
  int content_class = 0;
};

struct DatasetManifest {
  std::string version;
  uint64_t seed = 0;
  int frames = 0, height = 0, width = 0;
  std::vector<ClipRecord> clips;
};

// Samples one scene from the config grids; clip index selects the stream.
SceneSpec sample_scene(const GenerationConfig& cfg, uint64_t seed, int clip_index);

DatasetManifest build_dataset(const GenerationConfig& cfg, uint64_t seed, const std::string& root);
DatasetManifest load_manifest(const std::string& root);
void save_manifest(const DatasetManifest& m, const std::string& root);

VideoClip load_clip(const std::string& root, const ClipRecord& rec);
// Reads every *.png in a directory (sorted by name) as a clip.
VideoClip load_frames_dir(const std::string& dir);
void write_clip_frames(const VideoClip& clip, const std::string& dir);

}  // namespace onlyflow::data
