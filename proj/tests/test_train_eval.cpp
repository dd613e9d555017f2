// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "onlyflow/evaluate.hpp"
#include "onlyflow/plot.hpp"
#include "onlyflow/train.hpp"
#include "support.hpp"

using namespace onlyflow;
using namespace onlyflow::nn;
using namespace onlyflow::model;
using namespace onlyflow::train;

namespace {

UNetConfig tiny_unet() {
  UNetConfig cfg;
  cfg.latent_factor = 2;
  cfg.stage_channels = {8, 8, 16, 16};
  cfg.heads = 2;
  cfg.frames = 2;
  cfg.text_dim = 12;
  return cfg;
}

MotionEncoderConfig tiny_encoder() {
  MotionEncoderConfig cfg;
  cfg.unshuffle_ratio = 2;
  cfg.stage_channels = {8, 8, 16, 16};
  cfg.heads = 2;
  cfg.frames = 2;
  return cfg;
}

ScheduleParams tiny_sched() { return ScheduleParams{0.001, 0.2, 40}; }

data::GenerationConfig tiny_dataset() {
  data::GenerationConfig cfg;
  cfg.clips = 8;
  cfg.frames = 2;
  cfg.height = 16;
  cfg.width = 16;
  cfg.camera_probability = 0.25;
  return cfg;
}

MemoryClips make_clips(const data::GenerationConfig& cfg, uint64_t seed,
                       std::vector<int>* classes = nullptr) {
  std::vector<data::VideoClip> clips;
  for (int i = 0; i < cfg.clips; ++i) {
    data::RenderedClip rc = data::render_clip(data::sample_scene(cfg, seed, i), seed);
    if (classes) classes->push_back(rc.content_class);
    clips.push_back(std::move(rc.video));
  }
  return MemoryClips(std::move(clips));
}

}  // namespace

TEST_CASE("strip_motion_phrases keeps content words only") {
  CHECK(strip_motion_phrases("red square moving left") == "red square");
  CHECK(strip_motion_phrases("red square standing still camera panning left") == "red square");
  CHECK(strip_motion_phrases("blue circle moving up and green triangle standing still") ==
        "blue circle and green triangle");
  CHECK(strip_motion_phrases("") == "");
}

TEST_CASE("diffusion loss matches a hand-rolled per-element computation") {
  const NoiseSchedule sched = make_schedule(tiny_sched());
  const int t = 17;

  // Noisy-latent formula on the 2x4x4 case.
  {
    const Tensor z0 = testsup::random_tensor({2, 4, 4, 1}, 51, 0.3);
    const Tensor eps = testsup::random_tensor({2, 4, 4, 1}, 52);
    const Tensor z_t = q_sample(z0, t, eps, sched);
    const double sa = std::sqrt(sched.alpha_bar(t)), sb = std::sqrt(1 - sched.alpha_bar(t));
    for (long i = 0; i < z0.numel(); ++i) {
      CHECK(std::fabs(z_t[i] - (sa * z0[i] + sb * eps[i])) <= 1e-15);
    }
  }

  // Loss reduction against the model prediction, at the smallest geometry the
  // 4-scale denoiser supports (8x8 latent).
  UNetConfig ucfg = tiny_unet();
  ucfg.latent_factor = 1;
  MotionEncoderConfig ecfg = tiny_encoder();
  ecfg.unshuffle_ratio = 1;
  VideoModel m(ucfg, ecfg, tiny_sched(), false, 50);

  const Tensor z0 = testsup::random_tensor({2, 8, 8, 3}, 51, 0.3);
  const Tensor eps = testsup::random_tensor({2, 8, 8, 3}, 52);
  const std::vector<int> tokens = data::tokenize("red square moving left");
  const Tensor z_t = q_sample(z0, t, eps, sched);

  Tensor eps_hat;
  {
    nn::NoGradGuard no_grad;
    eps_hat = m.unet->forward(constant(z_t), t, tokens, nullptr, 0.0)->val;
  }
  double hand = 0.0;
  for (long i = 0; i < eps.numel(); ++i) {
    const double d = eps_hat[i] - eps[i];
    hand += d * d;
  }
  hand /= eps.numel();
  {
    nn::NoGradGuard no_grad;
    const Var loss = diffusion_loss(m, z0, t, eps, tokens, nullptr, 0.0, "mse");
    CHECK(std::fabs(loss->val[0] - hand) <= 1e-6);
  }
  {
    nn::NoGradGuard no_grad;
    const Var loss = diffusion_loss(m, z0, t, eps, tokens, nullptr, 0.0, "l2");
    CHECK(std::fabs(loss->val[0] - std::sqrt(hand * eps.numel())) <= 1e-6);
  }
}

TEST_CASE("backbone training decreases the loss (500 toy steps, 3 seeds)") {
  const data::GenerationConfig dcfg = tiny_dataset();
  double first_sum = 0.0, last_sum = 0.0;
  for (uint64_t seed : {101, 202, 303}) {
    MemoryClips clips = make_clips(dcfg, seed);
    VideoModel m(tiny_unet(), tiny_encoder(), tiny_sched(), false, seed);
    TrainConfig tcfg;
    tcfg.steps = 500;
    tcfg.batch_size = 2;
    tcfg.learning_rate = 3e-4;
    tcfg.seed = seed;
    const TrainResult r = train_backbone(m, clips, tcfg, "");
    REQUIRE((long)r.loss_curve.size() == tcfg.steps);
    // Average the first/last 25 steps to damp per-batch noise.
    double head = 0, tail = 0;
    for (int i = 0; i < 25; ++i) {
      head += r.loss_curve[i].second;
      tail += r.loss_curve[r.loss_curve.size() - 1 - i].second;
    }
    first_sum += head / 25;
    last_sum += tail / 25;
  }
  CHECK(last_sum / 3.0 < first_sum / 3.0);
}

TEST_CASE("training determinism for a fixed seed") {
  const data::GenerationConfig dcfg = tiny_dataset();
  MemoryClips clips = make_clips(dcfg, 7);
  TrainConfig tcfg;
  tcfg.steps = 5;
  tcfg.batch_size = 2;
  tcfg.seed = 9;
  VideoModel a(tiny_unet(), tiny_encoder(), tiny_sched(), false, 1);
  VideoModel b(tiny_unet(), tiny_encoder(), tiny_sched(), false, 1);
  const TrainResult ra = train_backbone(a, clips, tcfg, "");
  const TrainResult rb = train_backbone(b, clips, tcfg, "");
  for (size_t i = 0; i < ra.loss_curve.size(); ++i) {
    CHECK(ra.loss_curve[i].second == rb.loss_curve[i].second);
  }
  a.params.for_each([&](const Parameter& p) {
    const Parameter* q = b.params.find(p.name);
    for (long i = 0; i < p.value.numel(); ++i) REQUIRE(p.value[i] == q->value[i]);
  });
}

TEST_CASE("stage 2: freeze, trainable set, and gradient clipping") {
  const data::GenerationConfig dcfg = tiny_dataset();
  MemoryClips clips = make_clips(dcfg, 11);

  VideoModel backbone(tiny_unet(), tiny_encoder(), tiny_sched(), false, 2);
  {  // brief stage-1 run so the backbone is not at init
    TrainConfig t1;
    t1.steps = 10;
    t1.batch_size = 2;
    t1.seed = 3;
    train_backbone(backbone, clips, t1, "");
  }
  VideoModel m = init_motion_from_backbone(backbone, tiny_encoder(), 44);

  // Snapshot backbone parameter bytes.
  std::map<std::string, Tensor> before;
  m.params.for_each([&](const Parameter& p) {
    if (p.name.rfind("unet.", 0) == 0 || p.name.rfind("text.", 0) == 0) {
      before[p.name] = p.value.clone();
    }
  });

  TrainConfig t2;
  t2.steps = 20;
  t2.batch_size = 2;
  t2.seed = 5;
  t2.learning_rate = 1e-3;
  estimator::EstimatorConfig est;
  est.backend = estimator::Backend::GroundTruth;
  double max_post_norm = 0.0;
  const TrainResult r = train_motion(m, clips, est, t2, "",
                                     [&](long, double, double, double post) {
                                       max_post_norm = std::max(max_post_norm, post);
                                     });
  REQUIRE((long)r.loss_curve.size() == t2.steps);

  SUBCASE("every backbone parameter is bit-identical") {
    for (const auto& [name, snap] : before) {
      const Parameter* p = m.params.find(name);
      REQUIRE(p != nullptr);
      REQUIRE(std::memcmp(p->value.data(), snap.data(), sizeof(double) * snap.numel()) == 0);
    }
  }

  SUBCASE("encoder and every merge layer changed") {
    VideoModel fresh = init_motion_from_backbone(backbone, tiny_encoder(), 44);
    long enc_changed = 0, enc_total = 0;
    m.params.for_each([&](const Parameter& p) {
      if (p.name.rfind("enc.", 0) == 0) {
        const Parameter* q = fresh.params.find(p.name);
        for (long i = 0; i < p.value.numel(); ++i) {
          enc_total++;
          if (p.value[i] != q->value[i]) enc_changed++;
        }
      }
    });
    CHECK(enc_changed > 0);
    for (int k = 0; k < 4; ++k) {
      const Parameter& w = m.params.get("inject.down" + std::to_string(k) + ".t.w");
      double sum = 0;
      for (long i = 0; i < w.value.numel(); ++i) sum += std::fabs(w.value[i]);
      CAPTURE(k);
      CHECK(sum > 0.0);
    }
  }

  SUBCASE("post-clip gradient norm never exceeds the limit") {
    CHECK(max_post_norm <= 0.4 + 1e-6);
    CHECK(max_post_norm > 0.0);
  }
}

TEST_CASE("train_motion requires a motion-stage model") {
  VideoModel m(tiny_unet(), tiny_encoder(), tiny_sched(), false, 3);
  MemoryClips clips = make_clips(tiny_dataset(), 13);
  TrainConfig cfg;
  cfg.steps = 1;
  estimator::EstimatorConfig est;
  try {
    train_motion(m, clips, est, cfg, "");
    FAIL("expected MissingBackbone");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingBackbone);
  }
}

TEST_CASE("empty dataset") {
  VideoModel m(tiny_unet(), tiny_encoder(), tiny_sched(), false, 4);
  MemoryClips clips{std::vector<data::VideoClip>{}};
  TrainConfig cfg;
  cfg.steps = 1;
  try {
    train_backbone(m, clips, cfg, "");
    FAIL("expected DatasetEmpty");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DatasetEmpty);
  }
}

// ---------------------------------------------------------------------------
// Frechet
// ---------------------------------------------------------------------------

TEST_CASE("frechet distance") {
  using namespace onlyflow::evaluate;

  SUBCASE("identical sets give ~0") {
    Rng rng(14);
    std::vector<std::vector<double>> feats;
    for (int i = 0; i < 24; ++i) {
      std::vector<double> f(4);
      for (auto& v : f) v = rng.normal();
      feats.push_back(f);
    }
    CHECK(frechet_from_sets(feats, feats) <= 1e-6);
  }

  SUBCASE("unit gaussians with means d apart: distance = d^2") {
    GaussianStats a, b;
    a.dim = b.dim = 3;
    a.mean = {0, 0, 0};
    b.mean = {2, 0, 0};  // d = 2
    a.cov = b.cov = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    CHECK(frechet_distance(a, b) == doctest::Approx(4.0).epsilon(1e-9));
  }

  SUBCASE("anisotropic closed form") {
    // diag covariances: tr(S1 + S2 - 2 sqrt(S1 S2)) = sum (sqrt(s1)-sqrt(s2))^2
    GaussianStats a, b;
    a.dim = b.dim = 2;
    a.mean = {0, 0};
    b.mean = {1, -1};
    a.cov = {4, 0, 0, 9};
    b.cov = {1, 0, 0, 16};
    const double expect = 2.0 + ((2 - 1) * (2 - 1) + (3 - 4) * (3 - 4));
    CHECK(frechet_distance(a, b) == doctest::Approx(expect).epsilon(1e-9));
  }

  SUBCASE("between-cluster distance exceeds within-cluster splits") {
    Rng rng(15);
    auto cluster = [&](double center, int n) {
      std::vector<std::vector<double>> out;
      for (int i = 0; i < n; ++i) {
        std::vector<double> f(3);
        for (auto& v : f) v = center + 0.3 * rng.normal();
        out.push_back(f);
      }
      return out;
    };
    const auto a1 = cluster(0.0, 12), a2 = cluster(0.0, 12);
    const auto b1 = cluster(2.0, 12);
    CHECK(frechet_from_sets(a1, b1) > frechet_from_sets(a1, a2));
  }

  SUBCASE("too few samples throws") {
    std::vector<std::vector<double>> tiny(3, std::vector<double>(4, 0.0));
    try {
      frechet_from_sets(tiny, tiny);
      FAIL("expected TooFewSamples");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TooFewSamples);
    }
  }

  SUBCASE("jacobi eigendecomposition reconstructs the matrix") {
    Rng rng(16);
    const int n = 5;
    std::vector<double> m((size_t)n * n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        m[(size_t)i * n + j] = m[(size_t)j * n + i] = rng.normal();
      }
    }
    std::vector<double> vals, vecs;
    symmetric_eigen(m, n, vals, vecs);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0;
        for (int k = 0; k < n; ++k) {
          acc += vecs[(size_t)i * n + k] * vals[k] * vecs[(size_t)j * n + k];
        }
        CHECK(acc == doctest::Approx(m[(size_t)i * n + j]).epsilon(1e-8));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Probe + sweep plumbing
// ---------------------------------------------------------------------------

TEST_CASE("probe gate: undertrained probe rejects evaluation") {
  using namespace onlyflow::evaluate;
  data::GenerationConfig dcfg = tiny_dataset();
  dcfg.clips = 4;
  std::vector<int> classes;
  MemoryClips clips = make_clips(dcfg, 17, &classes);

  ProbeConfig pcfg;
  pcfg.steps = 1;  // deliberately undertrained
  pcfg.seed = 18;
  ContentProbe probe(pcfg, dcfg.height, dcfg.width);
  probe.train(clips, classes, clips, classes);

  VideoModel m(tiny_unet(), tiny_encoder(), tiny_sched(), true, 19);
  SweepConfig scfg;
  scfg.gammas = {0.0};
  scfg.sample_steps = 2;
  try {
    eval_sweep(m, clips, classes, probe, scfg);
    FAIL("expected ProbeUnderTrained");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ProbeUnderTrained);
  }
}

TEST_CASE("probe reaches the accuracy gate on real frames") {
  using namespace onlyflow::evaluate;
  data::GenerationConfig dcfg;
  dcfg.clips = 48;
  dcfg.frames = 2;
  dcfg.height = 32;
  dcfg.width = 32;
  dcfg.camera_probability = 0.25;
  dcfg.second_shape_probability = 0.0;  // single labeled subject per clip
  dcfg.colors = {"red", "green", "blue"};
  std::vector<int> classes;
  MemoryClips clips = make_clips(dcfg, 20, &classes);
  std::vector<int> train_classes(classes.begin(), classes.begin() + 36);
  std::vector<int> hold_classes(classes.begin() + 36, classes.end());
  std::vector<data::VideoClip> train_vec, hold_vec;
  for (int i = 0; i < 36; ++i) train_vec.push_back(clips.get(i));
  for (int i = 36; i < 48; ++i) hold_vec.push_back(clips.get(i));

  ProbeConfig pcfg;
  pcfg.steps = 500;
  pcfg.seed = 21;
  ContentProbe probe(pcfg, dcfg.height, dcfg.width);
  const double acc = probe.train(MemoryClips(train_vec), train_classes, MemoryClips(hold_vec),
                                 hold_classes);
  CHECK(acc >= 0.95);

  SUBCASE("clip features have the configured dimension") {
    const auto f = probe.clip_features(hold_vec[0]);
    CHECK((int)f.size() == pcfg.feature_dim);
  }
}

TEST_CASE("eval report JSON round trip is lossless") {
  using namespace onlyflow::evaluate;
  testsup::TempDir tmp("report");
  EvalReport r;
  r.clip_count = 32;
  r.estimator_backend = "block_match";
  r.seed = 123456789ULL;
  r.sampler = "pndm";
  r.sample_steps = 50;
  r.guidance = 7.5;
  Rng rng(22);
  for (double g : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    EvalRow row;
    row.gamma = g;
    row.mad_mean = rng.normal();
    row.mad_std = std::fabs(rng.normal());
    row.probe_accuracy = rng.uniform();
    row.frechet = std::fabs(rng.normal()) * 10;
    r.rows.push_back(row);
  }
  save_report(r, tmp.sub("r.json"));
  const EvalReport q = load_report(tmp.sub("r.json"));
  REQUIRE(q.rows.size() == r.rows.size());
  for (size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(q.rows[i].gamma == r.rows[i].gamma);
    CHECK(q.rows[i].mad_mean == r.rows[i].mad_mean);
    CHECK(q.rows[i].mad_std == r.rows[i].mad_std);
    CHECK(q.rows[i].probe_accuracy == r.rows[i].probe_accuracy);
    CHECK(q.rows[i].frechet == r.rows[i].frechet);
  }
  CHECK(q.seed == r.seed);
  CHECK(q.guidance == r.guidance);

  SUBCASE("sweep plot renders deterministically") {
    plot::save_sweep_plot(r, tmp.sub("a.png"));
    plot::save_sweep_plot(r, tmp.sub("b.png"));
    std::ifstream f1(tmp.sub("a.png"), std::ios::binary), f2(tmp.sub("b.png"), std::ios::binary);
    const std::vector<char> b1((std::istreambuf_iterator<char>(f1)),
                               std::istreambuf_iterator<char>());
    const std::vector<char> b2((std::istreambuf_iterator<char>(f2)),
                               std::istreambuf_iterator<char>());
    CHECK(!b1.empty());
    CHECK(b1 == b2);
  }
}

TEST_CASE("loss csv") {
  testsup::TempDir tmp("csv");
  TrainResult r;
  r.loss_curve = {{0, 1.5}, {1, 1.25}};
  write_loss_csv(r, tmp.sub("loss.csv"));
  std::ifstream in(tmp.sub("loss.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,loss");
  std::getline(in, line);
  CHECK(line == "0,1.5");
}
