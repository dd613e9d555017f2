// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: stage "backbone" trains the U-net and text embeddings
// on the diffusion loss with conditioning disabled; stage "motion" freezes
// them and trains only the motion encoder and the merge linear layers at
// conditioning strength 1.

#pragma once

#include <functional>

#include "onlyflow/checkpoint.hpp"
#include "onlyflow/estimator.hpp"

namespace onlyflow::train {

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 1e-4;  // constant
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 5e-8;
  double weight_decay = 1e-2;
  double grad_clip = 0.4;
  double text_dropout = 0.10;        // null the whole caption (classifier-free)
  double motion_phrase_dropout = 0.30;  // keep only content words of the caption
  double flow_dropout = 0.0;         // stage 2: drop the flow condition
  double gamma_train = 1.0;
  long steps = 1000;
  uint64_t seed = 0;
  long checkpoint_every = 0;         // 0 = final only
  std::string loss_norm = "mse";     // "mse" or "l2" (unsquared per-sample norm)
};

void validate(const TrainConfig& cfg);

// Deterministic random access to training clips; implementations may decode
// from disk. Every clip carries its ground-truth flow when available.
class ClipSource {
 public:
  virtual ~ClipSource() = default;
  virtual int size() const = 0;
  virtual data::VideoClip get(int index) const = 0;
};

class MemoryClips : public ClipSource {
 public:
  explicit MemoryClips(std::vector<data::VideoClip> clips) : clips_(std::move(clips)) {}
  int size() const override { return (int)clips_.size(); }
  data::VideoClip get(int index) const override { return clips_[index]; }

 private:
  std::vector<data::VideoClip> clips_;
};

class DiskClips : public ClipSource {
 public:
  DiskClips(std::string root, std::vector<data::ClipRecord> records)
      : root_(std::move(root)), records_(std::move(records)) {}
  int size() const override { return (int)records_.size(); }
  data::VideoClip get(int index) const override {
    return data::load_clip(root_, records_[index]);
  }
  const std::vector<data::ClipRecord>& records() const { return records_; }

 private:
  std::string root_;
  std::vector<data::ClipRecord> records_;
};

// step, mean batch loss, pre-clip grad norm, post-clip grad norm
using StepHook = std::function<void(long, double, double, double)>;

struct TrainResult {
  std::vector<std::pair<long, double>> loss_curve;
};

// Computes the training objective for one (clip, timestep, noise) triple;
// shared by both stages and by the loss unit tests.
nn::Var diffusion_loss(const model::VideoModel& model, const nn::Tensor& z0, int t,
                       const nn::Tensor& eps, const std::vector<int>& tokens,
                       const std::vector<nn::Var>* motion, double gamma,
                       const std::string& loss_norm);

TrainResult train_backbone(model::VideoModel& model, const ClipSource& clips,
                           const TrainConfig& cfg, const std::string& out_ckpt,
                           const StepHook& hook = nullptr);

// Backbone parameters are frozen (never touched by the optimizer); the flow
// fed to the encoder comes from the configured estimator backend, memoized
// per clip.
TrainResult train_motion(model::VideoModel& model, const ClipSource& clips,
                         const estimator::EstimatorConfig& est, const TrainConfig& cfg,
                         const std::string& out_ckpt, const StepHook& hook = nullptr);

// Builds the stage-2 model: fresh motion encoder and zero-initialized merge
// layers on top of the backbone's parameters.
model::VideoModel init_motion_from_backbone(const model::VideoModel& backbone,
                                            const model::MotionEncoderConfig& ecfg,
                                            uint64_t seed);

// Keeps only content words (colors, shape kinds, "and") of a caption.
std::string strip_motion_phrases(const std::string& caption);

void write_loss_csv(const TrainResult& r, const std::string& path);

}  // namespace onlyflow::train
