// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "onlyflow/scene.hpp"
#include "support.hpp"

using namespace onlyflow;
using namespace onlyflow::data;

namespace {

SceneSpec one_square(double vx, double vy) {
  SceneSpec spec;
  spec.frames = 6;
  spec.height = 32;
  spec.width = 32;
  ShapeSpec s;
  s.kind = ShapeKind::Square;
  s.color = "red";
  s.size = 10;
  s.x0 = 12;
  s.y0 = 14;
  s.vx = vx;
  s.vy = vy;
  spec.shapes.push_back(s);
  return spec;
}

// Mean absolute error of warp_frame(prev, flow_t) against frame t outside the
// occlusion mask.
double warp_consistency_mae(const RenderedClip& clip) {
  const auto& fl = *clip.video.gt_flow;
  double err = 0.0;
  long n = 0;
  for (int t = 1; t < clip.video.frame_count(); ++t) {
    const Image rec = flow::warp_frame(clip.video.frames[t - 1], flow::slice(fl, t));
    const Image& cur = clip.video.frames[t];
    for (int y = 0; y < cur.height; ++y) {
      for (int x = 0; x < cur.width; ++x) {
        if (clip.occlusion[t - 1][(size_t)y * cur.width + x]) continue;
        for (int c = 0; c < 3; ++c) {
          err += std::fabs(rec.at(y, x, c) - cur.at(y, x, c));
          ++n;
        }
      }
    }
  }
  REQUIRE(n > 0);
  return err / n;
}

}  // namespace

TEST_CASE("static square, no camera: flow is identically zero") {
  const RenderedClip clip = render_clip(one_square(0, 0), 1);
  for (double v : clip.video.gt_flow->data) CHECK(v == 0.0);
  CHECK(clip.motion_class == MotionClass::Static);
}

TEST_CASE("moving square: flow equals velocity on the footprint, zero outside") {
  SceneSpec spec = one_square(2, 0);
  const RenderedClip clip = render_clip(spec, 1);
  const auto& fl = *clip.video.gt_flow;
  const auto& s = spec.shapes[0];
  for (int t = 1; t < spec.frames; ++t) {
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        // Membership oracle at the frame t-1 pixel center.
        const double cx = s.x0 + (t - 1) * s.vx, cy = s.y0 + (t - 1) * s.vy;
        const bool inside =
            std::fabs(x - cx) <= s.size / 2 && std::fabs(y - cy) <= s.size / 2;
        CHECK(fl.at(t, y, x, 0) == (inside ? 2.0 : 0.0));
        CHECK(fl.at(t, y, x, 1) == 0.0);
      }
    }
  }
  CHECK(clip.motion_class == MotionClass::Right);
  CHECK(clip.caption == "red square moving right");
}

TEST_CASE("static shape + pan camera: global field") {
  SceneSpec spec = one_square(0, 0);
  spec.camera = flow::CameraMotionSpec{flow::CameraKind::Pan, -1.0, 0, 0};
  spec.shapes[0].x0 = 18;  // leave room for the leftward drift
  const RenderedClip clip = render_clip(spec, 1);
  const auto& fl = *clip.video.gt_flow;
  for (int t = 1; t < spec.frames; ++t) {
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        CHECK(fl.at(t, y, x, 0) == -1.0);
        CHECK(fl.at(t, y, x, 1) == 0.0);
      }
    }
  }
  CHECK(clip.motion_class == MotionClass::Pan);
  CHECK(clip.caption == "red square standing still camera panning left");
}

TEST_CASE("shape leaving the frame is rejected") {
  SceneSpec spec = one_square(4, 0);  // 12 + 5*4 + 5 > 31
  try {
    render_clip(spec, 1);
    FAIL("expected ShapeOutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ShapeOutOfBounds);
  }
}

TEST_CASE("warp consistency within 2/255 outside occlusion masks") {
  GenerationConfig cfg;
  cfg.frames = 6;
  cfg.height = 32;
  cfg.width = 32;
  cfg.camera_probability = 0.4;
  for (int i = 0; i < 12; ++i) {
    const SceneSpec spec = sample_scene(cfg, 99, i);
    const RenderedClip clip = render_clip(spec, 99);
    const double mae = warp_consistency_mae(clip);
    CAPTURE(i);
    CAPTURE(clip.caption);
    CHECK(mae <= 2.0 / 255.0);
  }
}

TEST_CASE("label soundness: motion class matches the dominant flow sign pattern") {
  GenerationConfig cfg;
  cfg.frames = 6;
  cfg.height = 32;
  cfg.width = 32;
  cfg.camera_probability = 0.35;
  for (int i = 0; i < 24; ++i) {
    const SceneSpec spec = sample_scene(cfg, 123, i);
    const RenderedClip clip = render_clip(spec, 123);
    const auto& fl = *clip.video.gt_flow;
    double su = 0, sv = 0, sdiv = 0, scurl = 0, amax = 0;
    const double cx = (cfg.width - 1) / 2.0, cy = (cfg.height - 1) / 2.0;
    for (int t = 1; t < fl.frames; ++t) {
      for (int y = 0; y < fl.height; ++y) {
        for (int x = 0; x < fl.width; ++x) {
          const double u = fl.at(t, y, x, 0), v = fl.at(t, y, x, 1);
          su += u;
          sv += v;
          sdiv += u * (x - cx) + v * (y - cy);
          scurl += -u * (y - cy) + v * (x - cx);
          amax = std::max({amax, std::fabs(u), std::fabs(v)});
        }
      }
    }
    CAPTURE(i);
    CAPTURE(clip.caption);
    switch (clip.motion_class) {
      case MotionClass::Static: CHECK(amax == 0.0); break;
      case MotionClass::Left:
        CHECK(su < 0);
        CHECK(std::fabs(su) >= std::fabs(sv));
        break;
      case MotionClass::Right:
        CHECK(su > 0);
        CHECK(std::fabs(su) >= std::fabs(sv));
        break;
      case MotionClass::Up:
        CHECK(sv < 0);
        CHECK(std::fabs(sv) >= std::fabs(su));
        break;
      case MotionClass::Down:
        CHECK(sv > 0);
        CHECK(std::fabs(sv) >= std::fabs(su));
        break;
      case MotionClass::Pan:
        CHECK(std::fabs(su) > 0);
        CHECK(sv == 0.0);
        break;
      case MotionClass::Zoom: CHECK(std::fabs(sdiv) > std::fabs(scurl)); break;
      case MotionClass::Rotate: CHECK(std::fabs(scurl) > std::fabs(sdiv)); break;
    }
  }
}

TEST_CASE("tokenizer") {
  SUBCASE("empty caption -> all-null sequence") {
    const std::vector<int> t = tokenize("");
    REQUIRE((int)t.size() == kTokenLen);
    for (int id : t) CHECK(id == kNullToken);
  }

  SUBCASE("four words + padding, invertible") {
    const std::vector<int> t = tokenize("red square moving left");
    int nonzero = 0;
    for (int id : t) nonzero += id != kNullToken;
    CHECK(nonzero == 4);
    CHECK(detokenize(t) == "red square moving left");
  }

  SUBCASE("tokenize(detokenize(ids)) is the identity on valid sequences") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<int> ids(kTokenLen, kNullToken);
      const int n = 1 + (int)rng.uniform_int(10);
      for (int i = 0; i < n; ++i) ids[i] = 1 + (int)rng.uniform_int(vocab_size() - 1);
      CHECK(tokenize(detokenize(ids)) == ids);
    }
  }

  SUBCASE("unknown word throws") {
    try {
      tokenize("red hexagon moving left");
      FAIL("expected UnknownWord");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UnknownWord);
    }
  }

  SUBCASE("every generated caption tokenizes") {
    GenerationConfig cfg;
    cfg.frames = 4;
    cfg.height = 32;
    cfg.width = 32;
    cfg.camera_probability = 0.5;
    cfg.second_shape_probability = 0.8;
    for (int i = 0; i < 40; ++i) {
      const RenderedClip clip = render_clip(sample_scene(cfg, 5, i), 5);
      CHECK_NOTHROW(tokenize(clip.caption));
    }
  }
}

static std::vector<char> file_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

TEST_CASE("build_dataset determinism and manifest integrity") {
  testsup::TempDir tmp("dataset");
  GenerationConfig cfg;
  cfg.clips = 6;
  cfg.frames = 4;
  cfg.height = 32;
  cfg.width = 32;

  const DatasetManifest m1 = build_dataset(cfg, 77, tmp.sub("a"));
  const DatasetManifest m2 = build_dataset(cfg, 77, tmp.sub("b"));
  REQUIRE(m1.clips.size() == 6);

  SUBCASE("same seed twice: identical manifests and identical pixel bytes") {
    CHECK(file_bytes(tmp.sub("a") + "/manifest.json") ==
          file_bytes(tmp.sub("b") + "/manifest.json"));
    for (const auto& rec : m1.clips) {
      for (int t = 0; t < cfg.frames; ++t) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "/%05d.png", t);
        CHECK(file_bytes(tmp.sub("a") + "/" + rec.frames_dir + buf) ==
              file_bytes(tmp.sub("b") + "/" + rec.frames_dir + buf));
      }
      for (int t = 1; t < cfg.frames; ++t) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "/%05d.flo", t);
        CHECK(file_bytes(tmp.sub("a") + "/" + rec.flow_dir + buf) ==
              file_bytes(tmp.sub("b") + "/" + rec.flow_dir + buf));
      }
    }
  }

  SUBCASE("different seeds differ in sampled parameters") {
    const DatasetManifest m3 = build_dataset(cfg, 78, tmp.sub("c"));
    std::multiset<std::string> caps1, caps3;
    for (const auto& r : m1.clips) caps1.insert(r.caption);
    for (const auto& r : m3.clips) caps3.insert(r.caption);
    CHECK(caps1 != caps3);
  }

  SUBCASE("all referenced paths exist; ids unique") {
    std::set<std::string> ids;
    for (const auto& rec : m1.clips) {
      CHECK(ids.insert(rec.id).second);
      CHECK(std::filesystem::exists(tmp.sub("a") + "/" + rec.frames_dir));
      CHECK(std::filesystem::exists(tmp.sub("a") + "/" + rec.flow_dir));
    }
  }

  SUBCASE("manifest round trip") {
    const DatasetManifest r = load_manifest(tmp.sub("a"));
    CHECK(r.version == m1.version);
    CHECK(r.seed == m1.seed);
    REQUIRE(r.clips.size() == m1.clips.size());
    for (size_t i = 0; i < r.clips.size(); ++i) {
      CHECK(r.clips[i].id == m1.clips[i].id);
      CHECK(r.clips[i].caption == m1.clips[i].caption);
      CHECK(r.clips[i].motion_class == m1.clips[i].motion_class);
      CHECK(r.clips[i].content_class == m1.clips[i].content_class);
    }
  }

  SUBCASE("clip loading restores geometry and flow") {
    const VideoClip clip = load_clip(tmp.sub("a"), m1.clips[0]);
    CHECK(clip.frame_count() == cfg.frames);
    CHECK(clip.height() == cfg.height);
    CHECK(clip.width() == cfg.width);
    REQUIRE(clip.gt_flow.has_value());
    CHECK(clip.gt_flow->frames == cfg.frames);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x)
        for (int c = 0; c < 2; ++c) CHECK(clip.gt_flow->at(0, y, x, c) == 0.0);
  }
}

TEST_CASE("N=0 gives an empty valid manifest") {
  testsup::TempDir tmp("dataset0");
  GenerationConfig cfg;
  cfg.clips = 0;
  const DatasetManifest m = build_dataset(cfg, 1, tmp.sub("d"));
  CHECK(m.clips.empty());
  const DatasetManifest r = load_manifest(tmp.sub("d"));
  CHECK(r.clips.empty());
}

TEST_CASE("content classes and captions") {
  CHECK(content_class_count() == 30);
  CHECK(content_class_of(ShapeKind::Circle, "red") == 0);
  CHECK(content_class_of(ShapeKind::Square, "red") == 10);
  CHECK(content_caption(ShapeKind::Triangle, "blue") == "blue triangle");
}
