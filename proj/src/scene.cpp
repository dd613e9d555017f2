// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace onlyflow::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDatasetVersion = "onlyflow-dataset-v1";
constexpr int kSupersample = 4;

// 2x3 affine map p -> A*p + b.
struct Affine {
  double a00 = 1, a01 = 0, a10 = 0, a11 = 1;
  double bx = 0, by = 0;

  static Affine identity() { return {}; }

  void apply(double x, double y, double& ox, double& oy) const {
    ox = a00 * x + a01 * y + bx;
    oy = a10 * x + a11 * y + by;
  }

  Affine inverse() const {
    const double det = a00 * a11 - a01 * a10;
    Affine r;
    r.a00 = a11 / det;
    r.a01 = -a01 / det;
    r.a10 = -a10 / det;
    r.a11 = a00 / det;
    r.bx = -(r.a00 * bx + r.a01 * by);
    r.by = -(r.a10 * bx + r.a11 * by);
    return r;
  }

  Affine compose(const Affine& inner) const {  // this(inner(p))
    Affine r;
    r.a00 = a00 * inner.a00 + a01 * inner.a10;
    r.a01 = a00 * inner.a01 + a01 * inner.a11;
    r.a10 = a10 * inner.a00 + a11 * inner.a10;
    r.a11 = a10 * inner.a01 + a11 * inner.a11;
    r.bx = a00 * inner.bx + a01 * inner.by + bx;
    r.by = a10 * inner.bx + a11 * inner.by + by;
    return r;
  }

  double scale() const { return std::sqrt(std::fabs(a00 * a11 - a01 * a10)); }
};

// Per-frame camera step whose displacement field is exactly the synthetic
// flow formula: pan translates, zoom scales by (1+m) about the center, rotate
// applies I + m*J about the center.
Affine camera_step(const flow::CameraMotionSpec& cam) {
  Affine s;
  switch (cam.kind) {
    case flow::CameraKind::Pan:
      s.bx = cam.magnitude;
      break;
    case flow::CameraKind::Zoom:
      s.a00 = s.a11 = 1.0 + cam.magnitude;
      s.bx = -cam.magnitude * cam.center_x;
      s.by = -cam.magnitude * cam.center_y;
      break;
    case flow::CameraKind::Rotate:
      s.a01 = -cam.magnitude;
      s.a10 = cam.magnitude;
      s.bx = cam.magnitude * cam.center_y;
      s.by = -cam.magnitude * cam.center_x;
      break;
  }
  return s;
}

bool inside_shape(const ShapeSpec& s, double t, double x, double y) {
  const double dx = x - (s.x0 + t * s.vx);
  const double dy = y - (s.y0 + t * s.vy);
  const double h = s.size / 2.0;
  switch (s.kind) {
    case ShapeKind::Circle:
      return dx * dx + dy * dy <= h * h;
    case ShapeKind::Square:
      return std::fabs(dx) <= h && std::fabs(dy) <= h;
    case ShapeKind::Triangle:
      // Apex up: width grows linearly from the apex to the base.
      return dy >= -h && dy <= h && std::fabs(dx) <= (dy + h) / 2.0;
  }
  return false;
}

// index of the topmost shape containing scene point, or -1.
int owner_at(const SceneSpec& spec, double t, double x, double y) {
  for (int i = (int)spec.shapes.size() - 1; i >= 0; --i) {
    if (inside_shape(spec.shapes[i], t, x, y)) return i;
  }
  return -1;
}

void background_color(const SceneSpec& spec, double scene_y, double* rgb) {
  if (!spec.gradient) {
    rgb[0] = spec.bg_top[0];
    rgb[1] = spec.bg_top[1];
    rgb[2] = spec.bg_top[2];
    return;
  }
  double f = scene_y / (double)(spec.height - 1);
  f = f < 0 ? 0 : (f > 1 ? 1 : f);
  for (int c = 0; c < 3; ++c) rgb[c] = spec.bg_top[c] * (1 - f) + spec.bg_bottom[c] * f;
}

std::string direction_word(double vx, double vy) {
  if (vx == 0 && vy == 0) return "";
  if (std::fabs(vx) >= std::fabs(vy)) return vx < 0 ? "left" : "right";
  return vy < 0 ? "up" : "down";
}

const char* shape_word(ShapeKind k) {
  switch (k) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
  }
  return "circle";
}

std::string camera_phrase(const flow::CameraMotionSpec& cam) {
  switch (cam.kind) {
    case flow::CameraKind::Pan:
      return std::string("camera panning ") + (cam.magnitude < 0 ? "left" : "right");
    case flow::CameraKind::Zoom:
      return std::string("camera zooming ") + (cam.magnitude > 0 ? "in" : "out");
    case flow::CameraKind::Rotate:
      return std::string("camera rotating ") +
             (cam.magnitude > 0 ? "clockwise" : "counterclockwise");
  }
  return "";
}

}  // namespace

const std::vector<std::string>& color_names() {
  static const std::vector<std::string> names = {"red",  "orange", "yellow",  "green", "cyan",
                                                 "blue", "purple", "magenta", "white", "gray"};
  return names;
}

void color_rgb(const std::string& name, double& r, double& g, double& b) {
  static const std::map<std::string, std::array<double, 3>> table = {
      {"red", {0.90, 0.15, 0.15}},    {"orange", {0.95, 0.55, 0.10}},
      {"yellow", {0.95, 0.90, 0.15}}, {"green", {0.10, 0.75, 0.20}},
      {"cyan", {0.10, 0.80, 0.85}},   {"blue", {0.15, 0.30, 0.90}},
      {"purple", {0.55, 0.15, 0.85}}, {"magenta", {0.90, 0.15, 0.80}},
      {"white", {0.97, 0.97, 0.97}},  {"gray", {0.55, 0.55, 0.55}},
  };
  auto it = table.find(name);
  check(it != table.end(), Errc::UnknownWord, "unknown color: " + name);
  r = it->second[0];
  g = it->second[1];
  b = it->second[2];
}

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v = {"<null>"};
    for (const auto& c : color_names()) v.push_back(c);
    for (const char* w : {"circle", "square", "triangle", "moving", "standing", "still", "left",
                          "right", "up", "down", "camera", "panning", "zooming", "rotating", "in",
                          "out", "clockwise", "counterclockwise", "and"}) {
      v.push_back(w);
    }
    return v;
  }();
  return vocab;
}

int vocab_size() { return (int)vocabulary().size(); }

std::vector<int> tokenize(const std::string& caption) {
  static const std::map<std::string, int> index = [] {
    std::map<std::string, int> m;
    const auto& v = vocabulary();
    for (int i = 0; i < (int)v.size(); ++i) m[v[i]] = i;
    return m;
  }();
  std::vector<int> out(kTokenLen, kNullToken);
  std::istringstream ss(caption);
  std::string word;
  int n = 0;
  while (ss >> word) {
    auto it = index.find(word);
    check(it != index.end(), Errc::UnknownWord, "word not in template vocabulary: " + word);
    check(n < kTokenLen, Errc::BadDims, "caption longer than " + std::to_string(kTokenLen));
    out[n++] = it->second;
  }
  return out;
}

std::string detokenize(const std::vector<int>& tokens) {
  const auto& v = vocabulary();
  std::string out;
  for (int id : tokens) {
    check(id >= 0 && id < (int)v.size(), Errc::UnknownWord, "token id out of range");
    if (id == kNullToken) continue;
    if (!out.empty()) out += ' ';
    out += v[id];
  }
  return out;
}

int content_class_count() { return 3 * (int)color_names().size(); }

int content_class_of(ShapeKind kind, const std::string& color) {
  const auto& names = color_names();
  auto it = std::find(names.begin(), names.end(), color);
  check(it != names.end(), Errc::UnknownWord, "unknown color: " + color);
  return (int)kind * (int)names.size() + (int)(it - names.begin());
}

std::string content_caption(ShapeKind kind, const std::string& color) {
  return color + " " + shape_word(kind);
}

const char* motion_class_name(MotionClass m) {
  switch (m) {
    case MotionClass::Left: return "left";
    case MotionClass::Right: return "right";
    case MotionClass::Up: return "up";
    case MotionClass::Down: return "down";
    case MotionClass::Static: return "static";
    case MotionClass::Pan: return "pan";
    case MotionClass::Zoom: return "zoom";
    case MotionClass::Rotate: return "rotate";
  }
  return "static";
}

namespace {

bool shape_in_bounds(const ShapeSpec& s, const std::optional<flow::CameraMotionSpec>& camera,
                     int frames, int height, int width) {
  const Affine step = camera ? camera_step(*camera) : Affine::identity();
  Affine m = Affine::identity();
  for (int t = 0; t < frames; ++t) {
    if (t > 0) m = step.compose(m);
    const double scale = m.scale();
    double cx, cy;
    m.apply(s.x0 + t * s.vx, s.y0 + t * s.vy, cx, cy);
    const double half = scale * s.size / 2.0;
    if (cx - half < 0 || cx + half > width - 1 || cy - half < 0 || cy + half > height - 1) {
      return false;
    }
  }
  return true;
}

}  // namespace

void validate(const SceneSpec& spec) {
  check(spec.frames >= 2 && spec.height >= 1 && spec.width >= 1, Errc::BadDims,
        "scene geometry");
  check(spec.shapes.size() <= 3, Errc::ShapeOutOfBounds, "at most 3 shapes");
  if (spec.camera && spec.camera->kind != flow::CameraKind::Pan) {
    for (const auto& s : spec.shapes) {
      check(s.vx == 0 && s.vy == 0, Errc::ShapeOutOfBounds,
            "zoom/rotate cameras require static shapes");
    }
  }
  for (const auto& s : spec.shapes) {
    check(shape_in_bounds(s, spec.camera, spec.frames, spec.height, spec.width),
          Errc::ShapeOutOfBounds, "shape trajectory leaves the frame");
  }
}

RenderedClip render_clip(const SceneSpec& spec, uint64_t /*seed*/) {
  validate(spec);
  const int F = spec.frames, H = spec.height, W = spec.width;

  // Resolved shape colors.
  std::vector<std::array<double, 3>> shape_rgb(spec.shapes.size());
  for (size_t i = 0; i < spec.shapes.size(); ++i) {
    color_rgb(spec.shapes[i].color, shape_rgb[i][0], shape_rgb[i][1], shape_rgb[i][2]);
  }

  const Affine step = spec.camera ? camera_step(*spec.camera) : Affine::identity();
  std::vector<Affine> cam(F), cam_inv(F);
  cam[0] = Affine::identity();
  for (int t = 1; t < F; ++t) cam[t] = step.compose(cam[t - 1]);
  for (int t = 0; t < F; ++t) cam_inv[t] = cam[t].inverse();

  RenderedClip out;
  out.video.frames.assign(F, Image(H, W));
  out.video.gt_flow = flow::FlowField(F, H, W);
  out.occlusion.assign(F - 1, std::vector<uint8_t>((size_t)H * W, 0));

  parallel_for(F, [&](long lo, long hi) {
    for (long t = lo; t < hi; ++t) {
      Image& img = out.video.frames[t];
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double acc[3] = {0, 0, 0};
          for (int sy = 0; sy < kSupersample; ++sy) {
            for (int sx = 0; sx < kSupersample; ++sx) {
              const double px = x + (sx + 0.5) / kSupersample - 0.5;
              const double py = y + (sy + 0.5) / kSupersample - 0.5;
              double sxn, syn;
              cam_inv[t].apply(px, py, sxn, syn);
              const int owner = owner_at(spec, (double)t, sxn, syn);
              double rgb[3];
              if (owner >= 0) {
                rgb[0] = shape_rgb[owner][0];
                rgb[1] = shape_rgb[owner][1];
                rgb[2] = shape_rgb[owner][2];
              } else {
                background_color(spec, syn, rgb);
              }
              acc[0] += rgb[0];
              acc[1] += rgb[1];
              acc[2] += rgb[2];
            }
          }
          const double inv = 1.0 / (kSupersample * kSupersample);
          img.at(y, x, 0) = acc[0] * inv;
          img.at(y, x, 1) = acc[1] * inv;
          img.at(y, x, 2) = acc[2] * inv;
        }
      }
    }
  }, 1);

  // Flow entry t: velocity of the topmost shape covering the pixel at frame
  // t-1, plus the camera field evaluated at the pixel.
  flow::FlowField& fl = *out.video.gt_flow;
  parallel_for(F - 1, [&](long lo, long hi) {
    for (long i = lo; i < hi; ++i) {
      const int t = (int)i + 1;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double sxn, syn;
          cam_inv[t - 1].apply((double)x, (double)y, sxn, syn);
          const int owner = owner_at(spec, (double)(t - 1), sxn, syn);
          double u = 0, v = 0;
          if (owner >= 0) {
            u = spec.shapes[owner].vx;
            v = spec.shapes[owner].vy;
          }
          if (spec.camera) {
            double cu, cv;
            flow::camera_flow_at(*spec.camera, (double)x, (double)y, cu, cv);
            u += cu;
            v += cv;
          }
          fl.at(t, y, x, 0) = u;
          fl.at(t, y, x, 1) = v;

          // Occlusion: surface identity change between the pair, or a warp
          // source that leaves the frame.
          const double wx = x - u, wy = y - v;
          uint8_t masked = 0;
          if (wx < 0 || wx > W - 1 || wy < 0 || wy > H - 1) {
            masked = 1;
          } else {
            double cxn, cyn;
            cam_inv[t].apply((double)x, (double)y, cxn, cyn);
            const int owner_now = owner_at(spec, (double)t, cxn, cyn);
            double pxn, pyn;
            cam_inv[t - 1].apply(wx, wy, pxn, pyn);
            const int owner_prev = owner_at(spec, (double)(t - 1), pxn, pyn);
            masked = owner_now != owner_prev ? 1 : 0;
          }
          out.occlusion[t - 1][(size_t)y * W + x] = masked;
        }
      }
    }
  }, 1);

  // Caption + labels.
  std::string caption;
  for (size_t i = 0; i < spec.shapes.size(); ++i) {
    const auto& s = spec.shapes[i];
    if (!caption.empty()) caption += " and ";
    caption += s.color;
    caption += ' ';
    caption += shape_word(s.kind);
    const std::string dir = direction_word(s.vx, s.vy);
    caption += dir.empty() ? " standing still" : " moving " + dir;
  }
  if (spec.camera) {
    if (!caption.empty()) caption += ' ';
    caption += camera_phrase(*spec.camera);
  }
  out.caption = caption;
  out.video.caption = caption;

  if (spec.camera) {
    switch (spec.camera->kind) {
      case flow::CameraKind::Pan: out.motion_class = MotionClass::Pan; break;
      case flow::CameraKind::Zoom: out.motion_class = MotionClass::Zoom; break;
      case flow::CameraKind::Rotate: out.motion_class = MotionClass::Rotate; break;
    }
  } else {
    MotionClass mc = MotionClass::Static;
    for (const auto& s : spec.shapes) {
      const std::string d = direction_word(s.vx, s.vy);
      if (d == "left") mc = MotionClass::Left;
      else if (d == "right") mc = MotionClass::Right;
      else if (d == "up") mc = MotionClass::Up;
      else if (d == "down") mc = MotionClass::Down;
      else continue;
      break;  // first moving shape dominates
    }
    out.motion_class = mc;
  }
  if (!spec.shapes.empty()) {
    out.content_class = content_class_of(spec.shapes[0].kind, spec.shapes[0].color);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

SceneSpec sample_scene(const GenerationConfig& cfg, uint64_t seed, int clip_index) {
  Rng rng(hash_combine({seed, (uint64_t)clip_index, hash_str("scene")}));
  SceneSpec spec;
  spec.frames = cfg.frames;
  spec.height = cfg.height;
  spec.width = cfg.width;

  // Dark backgrounds keep shape colors separable for the content probe.
  static const double bg_palette[][3] = {
      {0.06, 0.06, 0.08}, {0.10, 0.08, 0.06}, {0.05, 0.09, 0.07}, {0.09, 0.05, 0.10}};
  const int bg = (int)rng.uniform_int(4);
  const int bg2 = (int)rng.uniform_int(4);
  for (int c = 0; c < 3; ++c) spec.bg_top[c] = bg_palette[bg][c];
  if (rng.uniform() < cfg.gradient_probability) {
    spec.gradient = true;
    for (int c = 0; c < 3; ++c) spec.bg_bottom[c] = bg_palette[bg2][c] + 0.22;
  } else {
    for (int c = 0; c < 3; ++c) spec.bg_bottom[c] = spec.bg_top[c];
  }

  std::vector<double> sizes = cfg.sizes;
  if (sizes.empty()) {
    const double base = std::min(cfg.height, cfg.width);
    sizes = {base * 0.30, base * 0.42, base * 0.55};
  }

  const bool has_camera = rng.uniform() < cfg.camera_probability;
  flow::CameraMotionSpec cam;
  if (has_camera) {
    const int kind = (int)rng.uniform_int(3);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    auto pick = [&](const std::vector<double>& v) {
      return v.empty() ? 1.0 : v[rng.uniform_int(v.size())];
    };
    if (kind == 0) {
      cam.kind = flow::CameraKind::Pan;
      cam.magnitude = sign * pick(cfg.pan_magnitudes);
    } else if (kind == 1) {
      cam.kind = flow::CameraKind::Zoom;
      cam.magnitude = sign * pick(cfg.zoom_magnitudes);
    } else {
      cam.kind = flow::CameraKind::Rotate;
      cam.magnitude = sign * pick(cfg.rotate_magnitudes);
    }
    cam.center_x = (cfg.width - 1) / 2.0;
    cam.center_y = (cfg.height - 1) / 2.0;
    spec.camera = cam;
  }
  const bool movers_allowed = !has_camera || cam.kind == flow::CameraKind::Pan;

  const int n_shapes = 1 + (rng.uniform() < cfg.second_shape_probability ? 1 : 0);
  std::vector<int> used_colors;
  for (int i = 0; i < n_shapes; ++i) {
    ShapeSpec s;
    int color_idx;
    if (i == 0) {
      // The primary subject cycles through kind x color combinations so every
      // content class is represented evenly in any contiguous index range.
      const int combos = 3 * (int)cfg.colors.size();
      const int combo = clip_index % combos;
      s.kind = (ShapeKind)(combo / (int)cfg.colors.size());
      color_idx = combo % (int)cfg.colors.size();
    } else {
      s.kind = (ShapeKind)rng.uniform_int(3);
      do {
        color_idx = (int)rng.uniform_int(cfg.colors.size());
      } while (std::count(used_colors.begin(), used_colors.end(), color_idx) &&
               cfg.colors.size() > 1);
    }
    used_colors.push_back(color_idx);
    s.color = cfg.colors[color_idx];
    // The primary subject (the labeled one) is always strictly the largest
    // shape in the scene, so content classes stay well defined.
    if (i == 0) {
      s.size = sizes.size() > 1 ? sizes[1 + rng.uniform_int(sizes.size() - 1)] : sizes[0];
    } else {
      s.size = sizes[0] * 0.7;
    }

    const bool is_static =
        !movers_allowed || i > 0 || (rng.uniform() < cfg.static_probability);
    double speed = 0.0;
    int dir = 0;
    if (!is_static) {
      speed = cfg.speeds[rng.uniform_int(cfg.speeds.size())];
      dir = (int)rng.uniform_int(4);
    }

    // Rejection-sample a start position whose whole trajectory (including
    // camera scaling and drift) stays inside; degrade speed then size when
    // the frame is too tight.
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      s.vx = is_static ? 0 : (dir == 0 ? -speed : dir == 1 ? speed : 0);
      s.vy = is_static ? 0 : (dir == 2 ? -speed : dir == 3 ? speed : 0);
      const double half = s.size / 2.0 + 0.5;
      const double hi_x = cfg.width - 1 - half, hi_y = cfg.height - 1 - half;
      if (hi_x > half && hi_y > half) {
        s.x0 = rng.uniform(half, hi_x);
        s.y0 = rng.uniform(half, hi_y);
        placed = shape_in_bounds(s, spec.camera, cfg.frames, cfg.height, cfg.width);
      }
      if (!placed && attempt % 8 == 7) {
        if (speed > 1.0 && !is_static) speed -= 1.0;
        else s.size *= 0.8;
      }
    }
    if (!placed) {  // last resort: park a small static shape in the center
      s.vx = s.vy = 0;
      s.size = std::min(cfg.height, cfg.width) * 0.2;
      s.x0 = (cfg.width - 1) / 2.0;
      s.y0 = (cfg.height - 1) / 2.0;
    }
    spec.shapes.push_back(s);
  }
  return spec;
}

DatasetManifest build_dataset(const GenerationConfig& cfg, uint64_t seed,
                              const std::string& root) {
  check(cfg.clips >= 0, Errc::BadDims, "clip count");
  std::error_code ec;
  fs::create_directories(root, ec);
  check(!ec, Errc::IoFailure, "cannot create dataset root: " + root);

  DatasetManifest manifest;
  manifest.version = kDatasetVersion;
  manifest.seed = seed;
  manifest.frames = cfg.frames;
  manifest.height = cfg.height;
  manifest.width = cfg.width;
  manifest.clips.resize(cfg.clips);

  parallel_for(cfg.clips, [&](long lo, long hi) {
    for (long i = lo; i < hi; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "clip_%05ld", i);
      const std::string id = buf;
      const SceneSpec spec = sample_scene(cfg, seed, (int)i);
      RenderedClip clip = render_clip(spec, hash_combine({seed, (uint64_t)i}));

      const fs::path clip_dir = fs::path(root) / id;
      fs::create_directories(clip_dir / "frames");
      fs::create_directories(clip_dir / "flow");
      write_clip_frames(clip.video, (clip_dir / "frames").string());
      for (int t = 1; t < cfg.frames; ++t) {
        std::snprintf(buf, sizeof(buf), "%05d.flo", t);
        flow::write_flo(flow::slice(*clip.video.gt_flow, t), (clip_dir / "flow" / buf).string());
      }
      ClipRecord rec;
      rec.id = id;
      rec.caption = clip.caption;
      rec.frames_dir = id + "/frames";
      rec.flow_dir = id + "/flow";
      rec.motion_class = (int)clip.motion_class;
      rec.content_class = clip.content_class;
      manifest.clips[i] = rec;
    }
  }, 1);

  save_manifest(manifest, root);
  return manifest;
}

void save_manifest(const DatasetManifest& m, const std::string& root) {
  json j;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["frames"] = m.frames;
  j["height"] = m.height;
  j["width"] = m.width;
  json clips = json::array();
  for (const auto& c : m.clips) {
    clips.push_back({{"id", c.id},
                     {"caption", c.caption},
                     {"frames_dir", c.frames_dir},
                     {"flow_dir", c.flow_dir},
                     {"motion_class", c.motion_class},
                     {"content_class", c.content_class}});
  }
  j["clips"] = clips;
  std::ofstream out(fs::path(root) / "manifest.json");
  check(out.good(), Errc::IoFailure, "cannot write manifest in " + root);
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& root) {
  std::ifstream in(fs::path(root) / "manifest.json");
  check(in.good(), Errc::IoFailure, "cannot open manifest in " + root);
  json j;
  in >> j;
  DatasetManifest m;
  m.version = j.at("version").get<std::string>();
  m.seed = j.at("seed").get<uint64_t>();
  m.frames = j.at("frames").get<int>();
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  for (const auto& c : j.at("clips")) {
    ClipRecord rec;
    rec.id = c.at("id").get<std::string>();
    rec.caption = c.at("caption").get<std::string>();
    rec.frames_dir = c.at("frames_dir").get<std::string>();
    rec.flow_dir = c.at("flow_dir").get<std::string>();
    rec.motion_class = c.at("motion_class").get<int>();
    rec.content_class = c.at("content_class").get<int>();
    m.clips.push_back(rec);
  }
  return m;
}

void write_clip_frames(const VideoClip& clip, const std::string& dir) {
  char buf[32];
  for (int t = 0; t < clip.frame_count(); ++t) {
    std::snprintf(buf, sizeof(buf), "%05d.png", t);
    write_png(clip.frames[t], (fs::path(dir) / buf).string());
  }
}

VideoClip load_frames_dir(const std::string& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  check(!ec, Errc::IoFailure, "cannot list " + dir);
  check(!files.empty(), Errc::IoFailure, "no PNG frames in " + dir);
  std::sort(files.begin(), files.end());
  VideoClip clip;
  for (const auto& f : files) clip.frames.push_back(read_png(f.string()));
  for (const auto& f : clip.frames) {
    check(f.height == clip.frames[0].height && f.width == clip.frames[0].width,
          Errc::ShapeMismatch, "inconsistent frame sizes in " + dir);
  }
  return clip;
}

VideoClip load_clip(const std::string& root, const ClipRecord& rec) {
  VideoClip clip = load_frames_dir((fs::path(root) / rec.frames_dir).string());
  clip.caption = rec.caption;
  const int F = clip.frame_count();
  flow::FlowField fl(F, clip.height(), clip.width());
  char buf[32];
  for (int t = 1; t < F; ++t) {
    std::snprintf(buf, sizeof(buf), "%05d.flo", t);
    flow::FlowFrame fr = flow::read_flo((fs::path(root) / rec.flow_dir / buf).string());
    flow::set_slice(fl, t, fr);
  }
  clip.gt_flow = fl;
  return clip;
}

}  // namespace onlyflow::data
