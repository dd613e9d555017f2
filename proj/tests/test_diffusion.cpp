// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "onlyflow/checkpoint.hpp"
#include "onlyflow/diffusion.hpp"
#include "support.hpp"

using namespace onlyflow;
using namespace onlyflow::nn;
using namespace onlyflow::model;

namespace {

UNetConfig tiny_unet() {
  UNetConfig cfg;
  cfg.latent_factor = 1;
  cfg.stage_channels = {8, 8, 16, 16};
  cfg.heads = 2;
  cfg.frames = 2;
  cfg.text_dim = 12;
  return cfg;
}

MotionEncoderConfig tiny_encoder() {
  MotionEncoderConfig cfg;
  cfg.unshuffle_ratio = 1;
  cfg.stage_channels = {8, 8, 16, 16};
  cfg.heads = 2;
  cfg.frames = 2;
  return cfg;
}

ScheduleParams tiny_sched() { return ScheduleParams{0.001, 0.2, 40}; }

data::VideoClip random_clip(int F, int H, int W, uint64_t seed) {
  data::VideoClip clip;
  Rng rng(seed);
  for (int f = 0; f < F; ++f) {
    Image img(H, W);
    for (auto& v : img.data) v = rng.uniform();
    clip.frames.push_back(img);
  }
  return clip;
}

}  // namespace

TEST_CASE("make_schedule") {
  SUBCASE("paper defaults: alpha_bar(1) = 0.99915") {
    const NoiseSchedule s = make_schedule(1000, 0.00085, 0.012);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.99915).epsilon(1e-12));
    CHECK(s.betas.front() == doctest::Approx(0.00085));
    CHECK(s.betas.back() == doctest::Approx(0.012));
    for (int t = 2; t <= 1000; ++t) {
      CHECK(s.beta(t) > s.beta(t - 1));        // strictly increasing betas
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));  // strictly decreasing products
      CHECK(s.alpha_bar(t) > 0.0);
    }
    CHECK(s.alpha_bar(0) == s.alpha_bar(1));  // boundary convention
  }

  SUBCASE("T=1") {
    const NoiseSchedule s = make_schedule(1, 0.01, 0.02);
    CHECK(s.T == 1);
    CHECK(s.beta(1) == doctest::Approx(0.01));
  }

  SUBCASE("bad ranges") {
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.1), Error);
    CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), Error);
    CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), Error);
    CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), Error);
  }
}

TEST_CASE("q_sample") {
  const NoiseSchedule s = make_schedule(1000, 0.00085, 0.012);
  const Tensor z0 = testsup::random_tensor({2, 2, 2, 3}, 1);
  const Tensor zero = Tensor::zeros(z0.shape());

  SUBCASE("t=0 limit returns z0") {
    const Tensor z = q_sample(z0, 0, zero, s);
    for (long i = 0; i < z.numel(); ++i) CHECK(z[i] == z0[i]);
  }

  SUBCASE("eps=0 scales by sqrt(alpha_bar)") {
    const Tensor z = q_sample(z0, 500, zero, s);
    const double sa = std::sqrt(s.alpha_bar(500));
    for (long i = 0; i < z.numel(); ++i) CHECK(z[i] == doctest::Approx(sa * z0[i]));
  }

  SUBCASE("Monte Carlo moments at t in {1, 500, 1000} within 3 standard errors") {
    const int n = 10000;
    Rng rng(2);
    const double z0v = 0.7;
    const Tensor z0s = Tensor::from({1}, {z0v});
    for (int t : {1, 500, 1000}) {
      double sum = 0, sum_sq = 0;
      for (int i = 0; i < n; ++i) {
        const Tensor eps = Tensor::from({1}, {rng.normal()});
        const double z = q_sample(z0s, t, eps, s)[0];
        sum += z;
        sum_sq += z * z;
      }
      const double mean = sum / n;
      const double var = sum_sq / n - mean * mean;
      const double expect_mean = std::sqrt(s.alpha_bar(t)) * z0v;
      const double expect_var = 1.0 - s.alpha_bar(t);
      const double se_mean = std::sqrt(expect_var / n);
      const double se_var = expect_var * std::sqrt(2.0 / (n - 1));
      CAPTURE(t);
      CHECK(std::fabs(mean - expect_mean) <= 3.0 * se_mean + 1e-12);
      CHECK(std::fabs(var - expect_var) <= 3.0 * se_var + 1e-12);
    }
  }

  SUBCASE("shape mismatch / bad t") {
    CHECK_THROWS_AS(q_sample(z0, 1, Tensor::zeros({1}), s), Error);
    CHECK_THROWS_AS(q_sample(z0, 1001, zero, s), Error);
  }
}

TEST_CASE("latent codec") {
  SUBCASE("round trip is exact on random clips") {
    const data::VideoClip clip = random_clip(3, 8, 8, 3);
    const Tensor v = video_to_tensor(clip);
    for (int r : {1, 2}) {
      const Tensor z = latent_encode(v, r);
      const Tensor back = latent_decode(z, r);
      REQUIRE(back.numel() == v.numel());
      for (long i = 0; i < v.numel(); ++i) CHECK(back[i] == v[i]);
    }
  }

  SUBCASE("shape contract 16x64x64x3, r=2 -> 16x32x32x12") {
    Tensor v({16, 64, 64, 3});
    const Tensor z = latent_encode(v, 2);
    CHECK(z.shape() == std::vector<int>{16, 32, 32, 12});
  }
}

TEST_CASE("cfg_eps") {
  const Tensor c = testsup::random_tensor({2, 3}, 4);
  const Tensor u = testsup::random_tensor({2, 3}, 5);
  const Tensor e1 = cfg_eps(c, u, 1.0);
  for (long i = 0; i < c.numel(); ++i) CHECK(e1[i] == c[i]);
  const Tensor e0 = cfg_eps(c, u, 0.0);
  for (long i = 0; i < c.numel(); ++i) CHECK(e0[i] == u[i]);
  // linearity in s
  const Tensor ea = cfg_eps(c, u, 2.0);
  const Tensor eb = cfg_eps(c, u, 3.0);
  for (long i = 0; i < c.numel(); ++i) {
    const double slope1 = ea[i] - e1[i];
    const double slope2 = (eb[i] - e1[i]) / 2.0;
    CHECK(slope1 == doctest::Approx(slope2).epsilon(1e-12));
  }
}

TEST_CASE("inject") {
  SUBCASE("gamma 0 returns h exactly") {
    const Tensor h = testsup::random_tensor({2, 2, 2, 4}, 6);
    const Tensor c = testsup::random_tensor({2, 2, 2, 4}, 7);
    Var w = constant(testsup::random_tensor({4, 4}, 8));
    Var b = constant(testsup::random_tensor({4}, 9));
    const Var out = inject_features(constant(h), constant(c), 0.0, w, b);
    for (long i = 0; i < h.numel(); ++i) CHECK(out->val[i] == h[i]);
  }

  SUBCASE("zero-initialized map returns h for any gamma") {
    const Tensor h = testsup::random_tensor({2, 2, 2, 4}, 10);
    const Tensor c = testsup::random_tensor({2, 2, 2, 4}, 11);
    Var w = constant(Tensor::zeros({4, 4}));
    Var b = constant(Tensor::zeros({4}));
    const Var out = inject_features(constant(h), constant(c), 0.7, w, b);
    for (long i = 0; i < h.numel(); ++i) CHECK(out->val[i] == h[i]);
  }

  SUBCASE("hand-computed 1-token 2-channel case") {
    // W = [[1,0],[0,2]], b = 0, gamma = 0.5, h = (1,1), c = (1,3):
    // h' = (1,1) + 0.5 * ((c+h) W) = (1,1) + 0.5*(2, 8) = (2, 5)
    const Tensor h = Tensor::from({1, 1, 1, 2}, {1, 1});
    const Tensor c = Tensor::from({1, 1, 1, 2}, {1, 3});
    Var w = constant(Tensor::from({2, 2}, {1, 0, 0, 2}));
    Var b = constant(Tensor::zeros({2}));
    const Var out = inject_features(constant(h), constant(c), 0.5, w, b);
    CHECK(out->val[0] == doctest::Approx(2.0));
    CHECK(out->val[1] == doctest::Approx(5.0));
  }
}

TEST_CASE("unet forward") {
  const UNetConfig ucfg = tiny_unet();
  const MotionEncoderConfig ecfg = tiny_encoder();
  VideoModel m(ucfg, ecfg, tiny_sched(), /*with_motion=*/true, 31);
  const std::vector<int> tokens = data::tokenize("red square moving left");
  const Tensor z = testsup::random_tensor({2, 8, 8, 3}, 12);

  flow::FlowField fl(2, 8, 8);
  Rng rng(13);
  for (size_t i = 8 * 8 * 2; i < fl.data.size(); ++i) fl.data[i] = rng.normal();

  SUBCASE("output shape equals input shape") {
    nn::NoGradGuard no_grad;
    const Var out = m.unet->forward(constant(z), 5, tokens, nullptr, 0.0);
    CHECK(out->val.shape() == z.shape());
  }

  SUBCASE("motion absent == motion present at gamma 0, bit for bit") {
    nn::NoGradGuard no_grad;
    const std::vector<Var> c = m.encoder->encode(fl);
    const Var a = m.unet->forward(constant(z), 7, tokens, nullptr, 0.0);
    const Var b = m.unet->forward(constant(z), 7, tokens, &c, 0.0);
    for (long i = 0; i < a->val.numel(); ++i) CHECK(a->val[i] == b->val[i]);
  }

  SUBCASE("zero-init merge layers: gamma has no effect before training") {
    nn::NoGradGuard no_grad;
    const std::vector<Var> c = m.encoder->encode(fl);
    const Var a = m.unet->forward(constant(z), 9, tokens, nullptr, 0.0);
    const Var b = m.unet->forward(constant(z), 9, tokens, &c, 1.0);
    for (long i = 0; i < a->val.numel(); ++i) {
      CHECK(std::fabs(a->val[i] - b->val[i]) <= 1e-12);
    }
  }

  SUBCASE("finiteness for finite inputs") {
    nn::NoGradGuard no_grad;
    const std::vector<Var> c = m.encoder->encode(fl);
    const Var out = m.unet->forward(constant(z), 40, tokens, &c, 1.0);
    for (long i = 0; i < out->val.numel(); ++i) REQUIRE(std::isfinite(out->val[i]));
  }
}

TEST_CASE("unet gradient oracle on a 2-frame 8x8 config") {
  // Composite check for the whole denoiser: d loss / d z matches central
  // finite differences at double precision.
  const UNetConfig ucfg = tiny_unet();
  VideoModel m(ucfg, tiny_encoder(), tiny_sched(), /*with_motion=*/true, 32);
  // Fill every zero-initialized parameter so all paths carry gradient.
  Rng rng(33);
  m.params.for_each([&](Parameter& p) {
    bool all_zero = true;
    for (long i = 0; i < p.value.numel() && all_zero; ++i) all_zero = p.value[i] == 0.0;
    if (all_zero) {
      for (long i = 0; i < p.value.numel(); ++i) p.value[i] = 0.1 * rng.normal();
    }
  });
  const std::vector<int> tokens = data::tokenize("blue circle moving up");
  flow::FlowField fl(2, 8, 8);
  for (size_t i = 8 * 8 * 2; i < fl.data.size(); ++i) fl.data[i] = 0.3;

  Tensor z0 = testsup::random_tensor({2, 8, 8, 3}, 34);
  const Tensor target = testsup::random_tensor({2, 8, 8, 3}, 35);

  auto loss_of = [&](const Tensor& z) {
    Var v = input(z);
    const std::vector<Var> c = m.encoder->encode(constant(
        MotionEncoder::normalized_flow_tensor(fl)), 8, 8);
    Var out = m.unet->forward(v, 11, tokens, &c, 0.8);
    return std::pair(mse(out, constant(target)), v);
  };
  auto [loss, leaf_z] = loss_of(z0);
  backward(loss);
  const Tensor analytic = leaf_z->grad;

  Rng pick(36);
  double max_rel = 0.0;
  for (int s = 0; s < 10; ++s) {
    const long i = (long)pick.uniform_int((uint64_t)z0.numel());
    const double orig = z0[i];
    const double h = 1e-5;
    z0[i] = orig + h;
    const double up = loss_of(z0).first->val[0];
    z0[i] = orig - h;
    const double dn = loss_of(z0).first->val[0];
    z0[i] = orig;
    const double numeric = (up - dn) / (2 * h);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  CHECK(max_rel <= 1e-3);
}

TEST_CASE("unet parameter gradient matches finite differences") {
  const UNetConfig ucfg = tiny_unet();
  VideoModel m(ucfg, tiny_encoder(), tiny_sched(), false, 37);
  const std::vector<int> tokens = data::tokenize("green triangle moving down");
  const Tensor z = testsup::random_tensor({2, 8, 8, 3}, 38);
  const Tensor target = testsup::random_tensor({2, 8, 8, 3}, 39);

  Parameter& w = m.params.get("unet.down1.res.c1.w");
  auto loss_of = [&]() {
    Var out = m.unet->forward(constant(z), 3, tokens, nullptr, 0.0);
    return mse(out, constant(target));
  };
  m.params.for_each([](Parameter& p) {
    if (p.grad.defined()) p.grad.fill(0.0);
  });
  Var loss = loss_of();
  backward(loss);
  const Tensor analytic = w.grad.clone();

  Rng pick(40);
  double max_rel = 0.0;
  for (int s = 0; s < 8; ++s) {
    const long i = (long)pick.uniform_int((uint64_t)w.value.numel());
    const double orig = w.value[i];
    const double h = 1e-5;
    w.value[i] = orig + h;
    const double up = loss_of()->val[0];
    w.value[i] = orig - h;
    const double dn = loss_of()->val[0];
    w.value[i] = orig;
    const double numeric = (up - dn) / (2 * h);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  CHECK(max_rel <= 1e-3);
}

TEST_CASE("sampling") {
  const UNetConfig ucfg = tiny_unet();
  VideoModel m(ucfg, tiny_encoder(), tiny_sched(), /*with_motion=*/true, 41);
  flow::FlowField fl = flow::synth_camera_flow({flow::CameraKind::Pan, -2, 0, 0}, 2, 8, 8);

  SampleConfig scfg;
  scfg.frames = 2;
  scfg.height = 8;
  scfg.width = 8;
  scfg.steps = 6;
  scfg.guidance = 2.0;
  scfg.seed = 77;

  SUBCASE("deterministic across runs") {
    scfg.sampler = SamplerKind::Pndm;
    const data::VideoClip a = sample(m, "red square moving left", &fl, scfg);
    const data::VideoClip b = sample(m, "red square moving left", &fl, scfg);
    for (int f = 0; f < 2; ++f) {
      for (size_t i = 0; i < a.frames[f].data.size(); ++i) {
        CHECK(a.frames[f].data[i] == b.frames[f].data[i]);
      }
    }
  }

  SUBCASE("gamma 0 with flow equals no flow at the same seed") {
    scfg.gamma = 0.0;
    const data::VideoClip a = sample(m, "red square moving left", &fl, scfg);
    const data::VideoClip b = sample(m, "red square moving left", nullptr, scfg);
    double max_diff = 0;
    for (int f = 0; f < 2; ++f) {
      for (size_t i = 0; i < a.frames[f].data.size(); ++i) {
        max_diff = std::max(max_diff, std::fabs(a.frames[f].data[i] - b.frames[f].data[i]));
      }
    }
    CHECK(max_diff <= 1e-5);
  }

  SUBCASE("ancestral steps = T and pndm stay finite and in range on an untrained model") {
    scfg.sampler = SamplerKind::Ancestral;
    scfg.steps = 40;  // = T for the tiny schedule
    const data::VideoClip a = sample(m, "blue circle moving up", &fl, scfg);
    for (const auto& frame : a.frames) {
      for (double v : frame.data) {
        REQUIRE(std::isfinite(v));
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
    }
    scfg.sampler = SamplerKind::Pndm;
    scfg.steps = 12;
    const data::VideoClip b = sample(m, "blue circle moving up", &fl, scfg);
    for (const auto& frame : b.frames) {
      for (double v : frame.data) {
        REQUIRE(std::isfinite(v));
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
    }
  }

  SUBCASE("steps beyond T throw") {
    scfg.steps = 41;
    CHECK_THROWS_AS(sample(m, "red square moving left", &fl, scfg), Error);
  }
}

TEST_CASE("checkpoint round trip restores bit-identical parameters") {
  testsup::TempDir tmp("ckpt");
  VideoModel m(tiny_unet(), tiny_encoder(), tiny_sched(), true, 42);
  const std::string p1 = tmp.sub("a.ofck"), p2 = tmp.sub("b.ofck");
  save_checkpoint(m, p1);
  VideoModel r1 = load_checkpoint(p1);
  save_checkpoint(r1, p2);
  VideoModel r2 = load_checkpoint(p2);

  // After one save/load cycle values are float32-representable; the second
  // cycle must reproduce them bit-identically, and the files byte-identically.
  r1.params.for_each([&](const Parameter& p) {
    const Parameter* q = r2.params.find(p.name);
    REQUIRE(q != nullptr);
    for (long i = 0; i < p.value.numel(); ++i) REQUIRE(p.value[i] == q->value[i]);
  });
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::vector<char> b1((std::istreambuf_iterator<char>(f1)),
                             std::istreambuf_iterator<char>());
  const std::vector<char> b2((std::istreambuf_iterator<char>(f2)),
                             std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(r2.stage == "motion");
  CHECK(r2.ucfg.stage_channels == m.ucfg.stage_channels);
}

TEST_CASE("assembly checks") {
  UNetConfig u = tiny_unet();
  MotionEncoderConfig e = tiny_encoder();
  e.unshuffle_ratio = 2;
  CHECK_THROWS_AS(check_assembly(u, e), Error);
  e = tiny_encoder();
  e.stage_channels = {8, 8, 16, 32};
  CHECK_THROWS_AS(check_assembly(u, e), Error);
}
