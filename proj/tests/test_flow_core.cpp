// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "onlyflow/flow.hpp"
#include "support.hpp"

using namespace onlyflow;
using namespace onlyflow::flow;

namespace {

FlowFrame random_frame(int h, int w, uint64_t seed, double scale) {
  FlowFrame f(h, w);
  Rng rng(seed);
  for (auto& v : f.data) v = scale * (rng.uniform() - 0.5);
  return f;
}

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("flo round trip is bit-exact") {
  testsup::TempDir tmp("flo_rt");
  const FlowFrame f = random_frame(9, 13, 42, 8.0);
  const std::string path = tmp.sub("a.flo");
  write_flo(f, path);
  const FlowFrame g = read_flo(path);
  REQUIRE(g.height == f.height);
  REQUIRE(g.width == f.width);
  // Values survive the float32 payload exactly after one write/read cycle.
  write_flo(g, tmp.sub("b.flo"));
  const auto bytes_a = read_file_bytes(path);
  const auto bytes_b = read_file_bytes(tmp.sub("b.flo"));
  CHECK(bytes_a == bytes_b);
  const FlowFrame h = read_flo(tmp.sub("b.flo"));
  CHECK(std::memcmp(h.data.data(), g.data.data(), sizeof(double) * g.data.size()) == 0);
}

TEST_CASE("hand-built 28-byte fixture decodes to the specified field") {
  testsup::TempDir tmp("flo_fixture");
  const std::string path = tmp.sub("fixture.flo");
  {
    std::ofstream out(path, std::ios::binary);
    const float magic = 202021.25f;
    const int32_t w = 2, h = 1;
    const float payload[4] = {1.0f, 0.0f, 2.0f, -1.0f};  // (u,v) interleaved
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(payload), 16);
  }
  REQUIRE(std::filesystem::file_size(path) == 28);
  const FlowFrame f = read_flo(path);
  REQUIRE(f.width == 2);
  REQUIRE(f.height == 1);
  CHECK(f.at(0, 0, 0) == 1.0);
  CHECK(f.at(0, 0, 1) == 0.0);
  CHECK(f.at(0, 1, 0) == 2.0);
  CHECK(f.at(0, 1, 1) == -1.0);
}

TEST_CASE("flo error cases") {
  testsup::TempDir tmp("flo_err");

  SUBCASE("magic 0.0 -> MagicMismatch") {
    const std::string path = tmp.sub("bad_magic.flo");
    std::ofstream out(path, std::ios::binary);
    const float magic = 0.0f;
    const int32_t w = 1, h = 1;
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.close();
    try {
      read_flo(path);
      FAIL("expected MagicMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MagicMismatch);
    }
  }

  SUBCASE("short payload -> TruncatedFile") {
    const std::string path = tmp.sub("short.flo");
    std::ofstream out(path, std::ios::binary);
    const float magic = 202021.25f;
    const int32_t w = 4, h = 4;
    const float one = 1.0f;
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&one), 4);
    out.close();
    try {
      read_flo(path);
      FAIL("expected TruncatedFile");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TruncatedFile);
    }
  }

  SUBCASE("non-positive dims -> NonPositiveDims") {
    const std::string path = tmp.sub("dims.flo");
    std::ofstream out(path, std::ios::binary);
    const float magic = 202021.25f;
    const int32_t w = 0, h = 3;
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.close();
    try {
      read_flo(path);
      FAIL("expected NonPositiveDims");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonPositiveDims);
    }
  }

  SUBCASE("NaN rejected before write") {
    FlowFrame f(2, 2);
    f.at(1, 1, 0) = std::nan("");
    const std::string path = tmp.sub("nan.flo");
    CHECK_THROWS_AS(write_flo(f, path), Error);
    CHECK(!std::filesystem::exists(path));
  }
}

TEST_CASE("zero 4x4 field writes a 140-byte file") {
  testsup::TempDir tmp("flo_size");
  const FlowFrame f(4, 4);
  write_flo(f, tmp.sub("z.flo"));
  CHECK(std::filesystem::file_size(tmp.sub("z.flo")) == 12 + 4 * 4 * 8);
}

TEST_CASE("synth_camera_flow formulas") {
  SUBCASE("pan magnitude -2 is constant on frames >= 1") {
    const FlowField f = synth_camera_flow({CameraKind::Pan, -2.0, 0, 0}, 4, 5, 7);
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 7; ++x) {
        CHECK(f.at(0, y, x, 0) == 0.0);
        for (int t = 1; t < 4; ++t) {
          CHECK(f.at(t, y, x, 0) == -2.0);
          CHECK(f.at(t, y, x, 1) == 0.0);
        }
      }
    }
  }

  SUBCASE("zoom magnitude 0 is the zero field") {
    const FlowField f = synth_camera_flow({CameraKind::Zoom, 0.0, 3, 3}, 3, 8, 8);
    for (double v : f.data) CHECK(v == 0.0);
  }

  SUBCASE("rotate 0.1 about (8,8): flow at (x=8,y=12) = (-0.4, 0)") {
    const FlowField f = synth_camera_flow({CameraKind::Rotate, 0.1, 8, 8}, 2, 16, 16);
    CHECK(f.at(1, 12, 8, 0) == doctest::Approx(-0.4).epsilon(1e-12));
    CHECK(f.at(1, 12, 8, 1) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("F < 2 -> BadDims") {
    try {
      synth_camera_flow({CameraKind::Pan, 1.0, 0, 0}, 1, 4, 4);
      FAIL("expected BadDims");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadDims);
    }
  }
}

TEST_CASE("warp_frame") {
  SUBCASE("zero flow is the identity") {
    Image img(6, 6);
    Rng rng(7);
    for (auto& v : img.data) v = rng.uniform();
    const Image out = warp_frame(img, FlowFrame(6, 6));
    CHECK(mean_abs_diff(out, img) == 0.0);
  }

  SUBCASE("constant integer flow matches a brute-force gather with clamp") {
    const int H = 8, W = 9;
    Image img(H, W);
    Rng rng(8);
    for (auto& v : img.data) v = rng.uniform();
    FlowFrame fl(H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) fl.at(y, x, 0) = 1.0;
    const Image out = warp_frame(img, fl);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int sx = std::max(0, std::min(W - 1, x - 1));
        for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == img.at(y, sx, c));
      }
    }
  }

  SUBCASE("half-pixel shift of a linear ramp hits exact midpoints") {
    const int H = 4, W = 8;
    Image img(H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = x / 8.0;
    FlowFrame fl(H, W);
    for (auto& v : fl.data) v = 0.0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) fl.at(y, x, 0) = 0.5;
    const Image out = warp_frame(img, fl);
    // interior: value at x - 0.5 on the ramp = (x - 0.5)/8
    for (int y = 0; y < H; ++y) {
      for (int x = 1; x < W; ++x) {
        CHECK(out.at(y, x, 0) == doctest::Approx((x - 0.5) / 8.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("shape mismatch throws") {
    CHECK_THROWS_AS(warp_frame(Image(4, 4), FlowFrame(5, 4)), Error);
  }
}

TEST_CASE("flow_mad") {
  FlowField a(3, 4, 4), b(3, 4, 4);
  CHECK(flow_mad(a, b) == 0.0);

  for (int t = 1; t < 3; ++t)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) a.at(t, y, x, 0) = 1.0;
  CHECK(flow_mad(a, b) == doctest::Approx(0.5));
  CHECK(flow_mad(b, a) == doctest::Approx(0.5));

  SUBCASE("pseudometric properties on random triples") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      FlowField x(2, 3, 3), y(2, 3, 3), z(2, 3, 3);
      for (int i = 9 * 2; i < 2 * 9 * 2; ++i) {
        x.data[i] = rng.uniform(-3, 3);
        y.data[i] = rng.uniform(-3, 3);
        z.data[i] = rng.uniform(-3, 3);
      }
      const double dxy = flow_mad(x, y), dyx = flow_mad(y, x);
      const double dxz = flow_mad(x, z), dzy = flow_mad(z, y);
      CHECK(dxy >= 0.0);
      CHECK(dxy == doctest::Approx(dyx).epsilon(1e-15));
      CHECK(dxy <= dxz + dzy + 1e-12);
      CHECK(flow_mad(x, x) == 0.0);
    }
  }

  SUBCASE("shape mismatch throws") {
    FlowField c(3, 4, 5);
    CHECK_THROWS_AS(flow_mad(a, c), Error);
  }
}

TEST_CASE("flow_to_color") {
  SUBCASE("zero field renders white") {
    const Image img = flow_to_color(FlowFrame(5, 5));
    for (double v : img.data) CHECK(v == 1.0);
  }

  SUBCASE("pure-right unit flow hits the wheel color at angle 0") {
    FlowFrame f(1, 2);
    f.at(0, 0, 0) = 1.0;   // (u,v) = (1,0), the max-magnitude pixel
    f.at(0, 1, 0) = 1.0;
    const Image img = flow_to_color(f);
    double r, g, b;
    color_wheel_at(0.0, r, g, b);
    CHECK(img.at(0, 0, 0) == doctest::Approx(r));
    CHECK(img.at(0, 0, 1) == doctest::Approx(g));
    CHECK(img.at(0, 0, 2) == doctest::Approx(b));
    CHECK(r == 1.0);  // angle 0 = start of the red-yellow arc
    CHECK(g == 0.0);
    CHECK(b == 0.0);
  }

  SUBCASE("output stays in [0,1] for random fields") {
    const FlowFrame f = random_frame(7, 7, 21, 40.0);
    const Image img = flow_to_color(f);
    for (double v : img.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("warp consistency of synthetic camera flow on a gradient image") {
  // Rigid pan: warping the previous frame by the flow entry must reproduce
  // the current frame away from the border band that samples outside.
  const int H = 16, W = 16;
  Image prev(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) prev.at(y, x, c) = (x + y * 0.5) / (H + W);
  const FlowField fl = synth_camera_flow({CameraKind::Pan, 2.0, 0, 0}, 2, H, W);
  // current frame = previous shifted right by 2
  Image cur(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        cur.at(y, x, c) = prev.at(y, std::max(0, x - 2), c);
  const Image rec = warp_frame(prev, slice(fl, 1));
  double err = 0;
  long n = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 2; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        err += std::fabs(rec.at(y, x, c) - cur.at(y, x, c));
        ++n;
      }
    }
  }
  CHECK(err / n < 1e-12);
}
