// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Metric harness for the conditioning-strength sweep: flow fidelity (mean
// absolute flow difference), a content-probe alignment score, and a Frechet
// distance over probe features. One generated set per (clip, gamma) feeds all
// three metrics.

#pragma once

#include "onlyflow/estimator.hpp"
#include "onlyflow/train.hpp"

namespace onlyflow::evaluate {

// ---------------------------------------------------------------------------
// Content probe: small per-frame convolutional classifier over
// shape-kind x color classes; its penultimate layer doubles as the feature
// extractor for the Frechet metric.
// ---------------------------------------------------------------------------

struct ProbeConfig {
  int feature_dim = 16;
  long steps = 400;
  int batch = 32;
  double lr = 3e-3;
  uint64_t seed = 7;
  double min_real_accuracy = 0.95;  // gate below which results are meaningless
};

class ContentProbe {
 public:
  ContentProbe(const ProbeConfig& cfg, int height, int width);

  // Trains on frames of `train` clips, evaluates on frames of `holdout`;
  // returns holdout accuracy.
  double train(const train::ClipSource& train, const std::vector<int>& train_classes,
               const train::ClipSource& holdout, const std::vector<int>& holdout_classes);

  int classify(const Image& frame) const;
  std::vector<double> features(const Image& frame) const;        // [feature_dim]
  std::vector<double> clip_features(const data::VideoClip& clip) const;  // frame mean

  double real_accuracy() const { return real_accuracy_; }
  const ProbeConfig& config() const { return cfg_; }

 private:
  nn::Var logits_batch(const nn::Var& x, nn::Var* features_out) const;

  ProbeConfig cfg_;
  nn::ParamStore params_;
  nn::Conv2dLayer conv1_, conv2_, conv3_;
  nn::LinearLayer fc1_, fc2_;
  double real_accuracy_ = 0.0;
};

// ---------------------------------------------------------------------------
// Frechet distance between Gaussian fits
// ---------------------------------------------------------------------------

struct GaussianStats {
  std::vector<double> mean;
  std::vector<double> cov;  // dim x dim, row-major
  int dim = 0;
};

// 1e-6 diagonal regularization is applied to both covariances.
GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features);
double frechet_distance(const GaussianStats& a, const GaussianStats& b);
// Feature-set form; throws TooFewSamples below 2x the feature dimension.
double frechet_from_sets(const std::vector<std::vector<double>>& real,
                         const std::vector<std::vector<double>>& generated);

// Symmetric eigendecomposition (cyclic Jacobi); exposed for tests.
void symmetric_eigen(std::vector<double> a, int n, std::vector<double>& values,
                     std::vector<double>& vectors);

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct EvalRow {
  double gamma = 0.0;
  double mad_mean = 0.0;
  double mad_std = 0.0;
  double probe_accuracy = 0.0;
  double frechet = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  int clip_count = 0;
  std::string estimator_backend;
  uint64_t seed = 0;
  std::string sampler;
  int sample_steps = 0;
  double guidance = 0.0;
};

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
void save_report(const EvalReport& r, const std::string& path);
EvalReport load_report(const std::string& path);

struct SweepConfig {
  std::vector<double> gammas = {0.0, 0.25, 0.5, 0.75, 1.0};
  model::SamplerKind sampler = model::SamplerKind::Pndm;
  int sample_steps = 50;
  double guidance = 7.5;
  uint64_t seed = 0;
  // Backend for the conditioning flow of the input clips. Generated clips are
  // always measured with block matching (they have no stored ground truth).
  estimator::EstimatorConfig estimator;
};

// Per-clip sampling fans out over the worker pool against the read-only
// model; identical seeds give identical reports.
EvalReport eval_sweep(const model::VideoModel& model, const train::ClipSource& eval_clips,
                      const std::vector<int>& content_classes, const ContentProbe& probe,
                      const SweepConfig& cfg);

// Mean horizontal displacement of the block-matched flow of a clip (frames
// 1..F-1, all pixels). Used by the camera-steering check.
double mean_horizontal_flow(const data::VideoClip& clip, const estimator::EstimatorConfig& est);

}  // namespace onlyflow::evaluate
