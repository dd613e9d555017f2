// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace onlyflow::evaluate {

using model::VideoModel;
using nlohmann::json;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Probe
// ---------------------------------------------------------------------------

ContentProbe::ContentProbe(const ProbeConfig& cfg, int height, int width) : cfg_(cfg) {
  check(height >= 8 && width >= 8, Errc::BadDims, "probe input too small");
  const uint64_t seed = cfg.seed;
  conv1_ = nn::Conv2dLayer(params_, "probe.c1", 3, 3, 16, 1, 1, seed);
  conv2_ = nn::Conv2dLayer(params_, "probe.c2", 3, 16, 32, 2, 1, seed);
  conv3_ = nn::Conv2dLayer(params_, "probe.c3", 3, 32, 48, 2, 1, seed);
  fc1_ = nn::LinearLayer(params_, "probe.fc1", 96, cfg.feature_dim, seed);
  fc2_ = nn::LinearLayer(params_, "probe.fc2", cfg.feature_dim, data::content_class_count(), seed);
}

Var ContentProbe::logits_batch(const Var& x, Var* features_out) const {
  Var h = nn::silu(conv1_(x));
  h = nn::silu(conv2_(h));
  h = nn::silu(conv3_(h));
  // Mean pooling tracks color mass; max pooling keeps silhouette evidence.
  Var pooled = nn::concat_lastdim(nn::mean_hw(h), nn::max_hw(h));  // [B, 96]
  Var feat = nn::silu(fc1_(pooled));
  if (features_out) *features_out = feat;
  return fc2_(feat);
}

namespace {

Tensor frames_to_batch(const std::vector<const Image*>& frames) {
  const int B = (int)frames.size();
  const int H = frames[0]->height, W = frames[0]->width;
  Tensor t({B, H, W, 3});
  double* d = t.data();
  for (int b = 0; b < B; ++b) {
    std::copy(frames[b]->data.begin(), frames[b]->data.end(), d + (long)b * H * W * 3);
  }
  return t;
}

// Border-clamped translate + optional horizontal flip; content classes are
// invariant to both, and the augmentation closes the position/size gap
// between the train clips and unseen layouts.
Image augment_frame(const Image& src, Rng& rng) {
  const int dx = (int)rng.uniform_int(9) - 4;
  const int dy = (int)rng.uniform_int(9) - 4;
  const bool flip = rng.uniform() < 0.5;
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      int sx = std::min(std::max(x - dx, 0), src.width - 1);
      const int sy = std::min(std::max(y - dy, 0), src.height - 1);
      if (flip) sx = src.width - 1 - sx;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace

double ContentProbe::train(const train::ClipSource& train_clips,
                           const std::vector<int>& train_classes,
                           const train::ClipSource& holdout,
                           const std::vector<int>& holdout_classes) {
  check(train_clips.size() > 0 && holdout.size() > 0, Errc::DatasetEmpty, "probe needs clips");
  check((int)train_classes.size() == train_clips.size() &&
            (int)holdout_classes.size() == holdout.size(),
        Errc::ShapeMismatch, "probe label count");

  // Materialize frames (clips are small at probe resolution).
  std::vector<Image> frames;
  std::vector<int> labels;
  for (int i = 0; i < train_clips.size(); ++i) {
    const data::VideoClip clip = train_clips.get(i);
    for (const auto& f : clip.frames) {
      frames.push_back(f);
      labels.push_back(train_classes[i]);
    }
  }

  nn::AdamConfig acfg;
  acfg.lr = cfg_.lr;
  acfg.clip_norm = 0.0;
  acfg.weight_decay = 1e-4;
  nn::Adam opt(params_.trainable(), acfg);
  for (long step = 0; step < cfg_.steps; ++step) {
    Rng rng(hash_combine({cfg_.seed, (uint64_t)step, hash_str("probe-step")}));
    std::vector<Image> batch_imgs;
    std::vector<const Image*> batch;
    std::vector<int> targets;
    batch_imgs.reserve(cfg_.batch);
    for (int b = 0; b < cfg_.batch; ++b) {
      const size_t i = rng.uniform_int(frames.size());
      batch_imgs.push_back(augment_frame(frames[i], rng));
      targets.push_back(labels[i]);
    }
    for (const auto& img : batch_imgs) batch.push_back(&img);
    opt.zero_grad();
    Var loss = nn::cross_entropy(logits_batch(nn::constant(frames_to_batch(batch)), nullptr),
                                 targets);
    nn::backward(loss);
    opt.step(1.0);
  }

  long correct = 0, total = 0;
  for (int i = 0; i < holdout.size(); ++i) {
    const data::VideoClip clip = holdout.get(i);
    for (const auto& f : clip.frames) {
      if (classify(f) == holdout_classes[i]) ++correct;
      ++total;
    }
  }
  real_accuracy_ = total > 0 ? (double)correct / total : 0.0;
  return real_accuracy_;
}

int ContentProbe::classify(const Image& frame) const {
  nn::NoGradGuard no_grad;
  Var logits = logits_batch(nn::constant(frames_to_batch({&frame})), nullptr);
  const double* d = logits->val.data();
  const int C = logits->val.dim(1);
  int best = 0;
  for (int c = 1; c < C; ++c) {
    if (d[c] > d[best]) best = c;
  }
  return best;
}

std::vector<double> ContentProbe::features(const Image& frame) const {
  nn::NoGradGuard no_grad;
  Var feat;
  logits_batch(nn::constant(frames_to_batch({&frame})), &feat);
  return std::vector<double>(feat->val.data(), feat->val.data() + feat->val.numel());
}

std::vector<double> ContentProbe::clip_features(const data::VideoClip& clip) const {
  std::vector<double> acc(cfg_.feature_dim, 0.0);
  for (const auto& f : clip.frames) {
    const std::vector<double> v = features(f);
    for (int i = 0; i < cfg_.feature_dim; ++i) acc[i] += v[i];
  }
  for (auto& v : acc) v /= (double)clip.frame_count();
  return acc;
}

// ---------------------------------------------------------------------------
// Frechet
// ---------------------------------------------------------------------------

void symmetric_eigen(std::vector<double> a, int n, std::vector<double>& values,
                     std::vector<double>& vectors) {
  vectors.assign((size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i) vectors[(size_t)i * n + i] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[(size_t)p * n + q] * a[(size_t)p * n + q];
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[(size_t)p * n + q];
        if (std::fabs(apq) < 1e-18) continue;
        const double app = a[(size_t)p * n + p], aqq = a[(size_t)q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[(size_t)k * n + p], akq = a[(size_t)k * n + q];
          a[(size_t)k * n + p] = c * akp - s * akq;
          a[(size_t)k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[(size_t)p * n + k], aqk = a[(size_t)q * n + k];
          a[(size_t)p * n + k] = c * apk - s * aqk;
          a[(size_t)q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vectors[(size_t)k * n + p], vkq = vectors[(size_t)k * n + q];
          vectors[(size_t)k * n + p] = c * vkp - s * vkq;
          vectors[(size_t)k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (int i = 0; i < n; ++i) values[i] = a[(size_t)i * n + i];
}

namespace {

// B = V f(L) V^T for symmetric A = V L V^T.
std::vector<double> symmetric_apply(const std::vector<double>& a, int n, double (*f)(double)) {
  std::vector<double> vals, vecs;
  symmetric_eigen(a, n, vals, vecs);
  std::vector<double> out((size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double fv = f(std::max(0.0, vals[i]));
    for (int r = 0; r < n; ++r) {
      const double vr = vecs[(size_t)r * n + i] * fv;
      for (int c = 0; c < n; ++c) out[(size_t)r * n + c] += vr * vecs[(size_t)c * n + i];
    }
  }
  return out;
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int n) {
  std::vector<double> out((size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double av = a[(size_t)i * n + k];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out[(size_t)i * n + j] += av * b[(size_t)k * n + j];
    }
  return out;
}

double sqrt_clamped(double x) { return std::sqrt(x < 0 ? 0 : x); }

}  // namespace

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features) {
  check(!features.empty(), Errc::TooFewSamples, "no feature vectors");
  GaussianStats g;
  g.dim = (int)features[0].size();
  const int n = (int)features.size(), d = g.dim;
  g.mean.assign(d, 0.0);
  for (const auto& f : features) {
    check((int)f.size() == d, Errc::ShapeMismatch, "feature dim mismatch");
    for (int i = 0; i < d; ++i) g.mean[i] += f[i];
  }
  for (auto& m : g.mean) m /= n;
  g.cov.assign((size_t)d * d, 0.0);
  for (const auto& f : features) {
    for (int i = 0; i < d; ++i) {
      const double di = f[i] - g.mean[i];
      for (int j = 0; j < d; ++j) g.cov[(size_t)i * d + j] += di * (f[j] - g.mean[j]);
    }
  }
  const double denom = n > 1 ? n - 1 : 1;
  for (auto& c : g.cov) c /= denom;
  for (int i = 0; i < d; ++i) g.cov[(size_t)i * d + i] += 1e-6;
  return g;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  check(a.dim == b.dim, Errc::ShapeMismatch, "gaussian dims differ");
  const int d = a.dim;
  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }
  // tr((S1 S2)^{1/2}) via the symmetric product sqrt(S1)^T S2 sqrt(S1).
  const std::vector<double> root_a = symmetric_apply(a.cov, d, sqrt_clamped);
  const std::vector<double> inner = matmul_sq(matmul_sq(root_a, b.cov, d), root_a, d);
  std::vector<double> vals, vecs;
  symmetric_eigen(inner, d, vals, vecs);
  double tr_sqrt = 0.0;
  for (double v : vals) tr_sqrt += sqrt_clamped(v);
  double tr_sum = 0.0;
  for (int i = 0; i < d; ++i) tr_sum += a.cov[(size_t)i * d + i] + b.cov[(size_t)i * d + i];
  return mean_term + tr_sum - 2.0 * tr_sqrt;
}

double frechet_from_sets(const std::vector<std::vector<double>>& real,
                         const std::vector<std::vector<double>>& generated) {
  check(!real.empty() && !generated.empty(), Errc::TooFewSamples, "empty feature sets");
  const int d = (int)real[0].size();
  check((int)real.size() >= 2 * d && (int)generated.size() >= 2 * d, Errc::TooFewSamples,
        "need at least 2x feature-dim samples per set");
  return frechet_distance(fit_gaussian(real), fit_gaussian(generated));
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

json report_to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"gamma", row.gamma},
                    {"mad_mean", row.mad_mean},
                    {"mad_std", row.mad_std},
                    {"probe_accuracy", row.probe_accuracy},
                    {"frechet", row.frechet}});
  }
  return json{{"rows", rows},
              {"clip_count", r.clip_count},
              {"estimator_backend", r.estimator_backend},
              {"seed", r.seed},
              {"sampler", r.sampler},
              {"sample_steps", r.sample_steps},
              {"guidance", r.guidance}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  for (const auto& row : j.at("rows")) {
    EvalRow er;
    er.gamma = row.at("gamma").get<double>();
    er.mad_mean = row.at("mad_mean").get<double>();
    er.mad_std = row.at("mad_std").get<double>();
    er.probe_accuracy = row.at("probe_accuracy").get<double>();
    er.frechet = row.at("frechet").get<double>();
    r.rows.push_back(er);
  }
  r.clip_count = j.at("clip_count").get<int>();
  r.estimator_backend = j.at("estimator_backend").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.sampler = j.at("sampler").get<std::string>();
  r.sample_steps = j.at("sample_steps").get<int>();
  r.guidance = j.at("guidance").get<double>();
  return r;
}

void save_report(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), Errc::IoFailure, "cannot write report: " + path);
  out << report_to_json(r).dump(2) << "\n";
}

EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), Errc::IoFailure, "cannot open report: " + path);
  json j;
  in >> j;
  return report_from_json(j);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

EvalReport eval_sweep(const VideoModel& model, const train::ClipSource& eval_clips,
                      const std::vector<int>& content_classes, const ContentProbe& probe,
                      const SweepConfig& cfg) {
  const int n_clips = eval_clips.size();
  check(n_clips >= 1, Errc::EmptyEvalSet, "evaluation set is empty");
  check((int)content_classes.size() == n_clips, Errc::ShapeMismatch, "class count");
  check(!cfg.gammas.empty(), Errc::EmptyEvalSet, "gamma list is empty");
  check(probe.real_accuracy() >= probe.config().min_real_accuracy, Errc::ProbeUnderTrained,
        "probe accuracy on real frames below the gate");

  // Generated clips are always measured with block matching.
  estimator::EstimatorConfig gen_est = cfg.estimator;
  gen_est.backend = estimator::Backend::BlockMatch;

  struct ClipEval {
    std::vector<double> mad;        // per gamma
    std::vector<double> acc;        // per gamma
    std::vector<std::vector<double>> gen_feat;  // per gamma
    std::vector<double> real_feat;
  };
  std::vector<ClipEval> evals(n_clips);
  const int n_gamma = (int)cfg.gammas.size();

  parallel_for(n_clips, [&](long lo, long hi) {
    for (long i = lo; i < hi; ++i) {
      const data::VideoClip clip = eval_clips.get((int)i);
      const flow::FlowField cond_flow = estimator::estimate(clip, cfg.estimator);
      ClipEval& ce = evals[i];
      ce.mad.resize(n_gamma);
      ce.acc.resize(n_gamma);
      ce.gen_feat.resize(n_gamma);
      ce.real_feat = probe.clip_features(clip);
      for (int gi = 0; gi < n_gamma; ++gi) {
        model::SampleConfig scfg;
        scfg.sampler = cfg.sampler;
        scfg.steps = cfg.sample_steps;
        scfg.guidance = cfg.guidance;
        scfg.gamma = cfg.gammas[gi];
        scfg.seed = hash_combine({cfg.seed, (uint64_t)i, hash_str("eval-clip")});
        scfg.frames = clip.frame_count();
        scfg.height = clip.height();
        scfg.width = clip.width();
        const data::VideoClip gen = model::sample(model, clip.caption, &cond_flow, scfg);
        const flow::FlowField gen_flow = estimator::estimate(gen, gen_est);
        ce.mad[gi] = flow::flow_mad(cond_flow, gen_flow);
        long correct = 0;
        for (const auto& f : gen.frames) {
          if (probe.classify(f) == content_classes[i]) ++correct;
        }
        ce.acc[gi] = (double)correct / gen.frame_count();
        ce.gen_feat[gi] = probe.clip_features(gen);
      }
    }
  }, 1);

  EvalReport report;
  report.clip_count = n_clips;
  report.estimator_backend = estimator::backend_name(cfg.estimator.backend);
  report.seed = cfg.seed;
  report.sampler = model::sampler_name(cfg.sampler);
  report.sample_steps = cfg.sample_steps;
  report.guidance = cfg.guidance;

  std::vector<std::vector<double>> real_feats;
  for (const auto& ce : evals) real_feats.push_back(ce.real_feat);

  for (int gi = 0; gi < n_gamma; ++gi) {
    EvalRow row;
    row.gamma = cfg.gammas[gi];
    double sum = 0.0, sum_sq = 0.0, acc = 0.0;
    std::vector<std::vector<double>> gen_feats;
    for (const auto& ce : evals) {
      sum += ce.mad[gi];
      sum_sq += ce.mad[gi] * ce.mad[gi];
      acc += ce.acc[gi];
      gen_feats.push_back(ce.gen_feat[gi]);
    }
    row.mad_mean = sum / n_clips;
    row.mad_std = n_clips > 1
                      ? std::sqrt(std::max(0.0, sum_sq / n_clips - row.mad_mean * row.mad_mean))
                      : 0.0;
    row.probe_accuracy = acc / n_clips;
    row.frechet = (int)real_feats.size() >= 2 * probe.config().feature_dim
                      ? frechet_from_sets(real_feats, gen_feats)
                      : -1.0;
    report.rows.push_back(row);
  }
  return report;
}

double mean_horizontal_flow(const data::VideoClip& clip, const estimator::EstimatorConfig& est) {
  estimator::EstimatorConfig bm = est;
  bm.backend = estimator::Backend::BlockMatch;
  const flow::FlowField fl = estimator::estimate(clip, bm);
  double sum = 0.0;
  long count = 0;
  for (int t = 1; t < fl.frames; ++t) {
    for (int y = 0; y < fl.height; ++y) {
      for (int x = 0; x < fl.width; ++x) {
        sum += fl.at(t, y, x, 0);
        ++count;
      }
    }
  }
  return count > 0 ? sum / count : 0.0;
}

}  // namespace onlyflow::evaluate
