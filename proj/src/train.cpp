// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace onlyflow::train {

using model::VideoModel;
using nn::Tensor;
using nn::Var;

void validate(const TrainConfig& cfg) {
  check(cfg.batch_size >= 1, Errc::BadRange, "batch size");
  check(cfg.steps >= 1, Errc::BadRange, "steps must be positive");
  check(cfg.text_dropout >= 0 && cfg.text_dropout <= 1, Errc::BadRange, "text dropout");
  check(cfg.flow_dropout >= 0 && cfg.flow_dropout <= 1, Errc::BadRange, "flow dropout");
  check(cfg.motion_phrase_dropout >= 0 && cfg.motion_phrase_dropout <= 1, Errc::BadRange,
        "motion phrase dropout");
  check(cfg.loss_norm == "mse" || cfg.loss_norm == "l2", Errc::BadRange,
        "loss_norm must be mse or l2");
}

std::string strip_motion_phrases(const std::string& caption) {
  static const std::vector<std::string> content_words = [] {
    std::vector<std::string> w = data::color_names();
    w.insert(w.end(), {"circle", "square", "triangle", "and"});
    return w;
  }();
  std::istringstream ss(caption);
  std::string word, out;
  while (ss >> word) {
    if (std::find(content_words.begin(), content_words.end(), word) == content_words.end()) {
      continue;
    }
    if (!out.empty()) out += ' ';
    out += word;
  }
  // A trailing "and" can survive when the second clause was motion-only.
  while (out.size() >= 4 && out.compare(out.size() - 4, 4, " and") == 0) {
    out.erase(out.size() - 4);
  }
  return out;
}

Var diffusion_loss(const VideoModel& model, const Tensor& z0, int t, const Tensor& eps,
                   const std::vector<int>& tokens, const std::vector<Var>* motion, double gamma,
                   const std::string& loss_norm) {
  const model::NoiseSchedule sched = model::make_schedule(model.sched);
  const Tensor z_t = model::q_sample(z0, t, eps, sched);
  Var eps_hat = model.unet->forward(nn::constant(z_t), t, tokens, motion, gamma);
  Var target = nn::constant(eps);
  if (loss_norm == "l2") return nn::l2_norm(nn::sub(eps_hat, target));
  return nn::mse(eps_hat, target);
}

namespace {

struct LoopContext {
  const ClipSource& clips;
  const TrainConfig& cfg;
  VideoModel& model;
  bool stage_motion;
  const estimator::EstimatorConfig* est = nullptr;
  // Stage-2 flow tensors (normalized), memoized per clip.
  std::map<int, Tensor> flow_cache;
};

Tensor conditioning_flow_tensor(LoopContext& ctx, int clip_idx, const data::VideoClip& clip) {
  auto it = ctx.flow_cache.find(clip_idx);
  if (it != ctx.flow_cache.end()) return it->second;
  const flow::FlowField fl = estimator::estimate(clip, *ctx.est);
  Tensor t = model::MotionEncoder::normalized_flow_tensor(fl);
  ctx.flow_cache.emplace(clip_idx, t);
  return t;
}

TrainResult run_loop(LoopContext& ctx, const std::string& out_ckpt, const StepHook& hook) {
  const TrainConfig& cfg = ctx.cfg;
  validate(cfg);
  check(ctx.clips.size() > 0, Errc::DatasetEmpty, "training needs at least one clip");

  nn::AdamConfig acfg;
  acfg.lr = cfg.learning_rate;
  acfg.beta1 = cfg.adam_beta1;
  acfg.beta2 = cfg.adam_beta2;
  acfg.eps = cfg.adam_eps;
  acfg.weight_decay = cfg.weight_decay;
  acfg.clip_norm = cfg.grad_clip;
  nn::Adam opt(ctx.model.params.trainable(), acfg);

  const model::NoiseSchedule sched = model::make_schedule(ctx.model.sched);
  const int r = ctx.model.ucfg.latent_factor;
  const std::vector<int> null_tokens(data::kTokenLen, data::kNullToken);

  TrainResult result;
  result.loss_curve.reserve(cfg.steps);

  for (long step = 0; step < cfg.steps; ++step) {
    Rng rng(hash_combine({cfg.seed, (uint64_t)step, hash_str("train-step")}));
    opt.zero_grad();
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int clip_idx = (int)rng.uniform_int(ctx.clips.size());
      const data::VideoClip clip = ctx.clips.get(clip_idx);
      const Tensor video = model::video_to_tensor(clip);
      const Tensor z0 = model::latent_encode(video, r);
      const int t = 1 + (int)rng.uniform_int(sched.T);
      Tensor eps(z0.shape());
      {
        double* d = eps.data();
        for (long i = 0; i < eps.numel(); ++i) d[i] = rng.normal();
      }

      std::vector<int> tokens;
      const double u_text = rng.uniform();
      const double u_phrase = rng.uniform();
      if (u_text < cfg.text_dropout) {
        tokens = null_tokens;
      } else if (u_phrase < cfg.motion_phrase_dropout) {
        tokens = data::tokenize(strip_motion_phrases(clip.caption));
      } else {
        tokens = data::tokenize(clip.caption);
      }

      std::vector<Var> motion;
      const std::vector<Var>* mp = nullptr;
      double gamma = 0.0;
      if (ctx.stage_motion) {
        const double u_flow = rng.uniform();
        if (u_flow >= cfg.flow_dropout) {
          const Tensor ft = conditioning_flow_tensor(ctx, clip_idx, clip);
          motion = ctx.model.encoder->encode(nn::constant(ft), clip.height(), clip.width());
          mp = &motion;
          gamma = cfg.gamma_train;
        }
      }

      Var loss = diffusion_loss(ctx.model, z0, t, eps, tokens, mp, gamma, cfg.loss_norm);
      loss_sum += loss->val[0];
      nn::backward(loss);
    }
    const auto [pre_norm, post_norm] = opt.step(1.0 / cfg.batch_size);
    const double mean_loss = loss_sum / cfg.batch_size;
    result.loss_curve.push_back({step, mean_loss});
    if (hook) hook(step, mean_loss, pre_norm, post_norm);
    if (!out_ckpt.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      model::save_checkpoint(ctx.model, out_ckpt);
    }
  }
  if (!out_ckpt.empty()) model::save_checkpoint(ctx.model, out_ckpt);
  return result;
}

}  // namespace

TrainResult train_backbone(VideoModel& model, const ClipSource& clips, const TrainConfig& cfg,
                           const std::string& out_ckpt, const StepHook& hook) {
  check(model.stage == "backbone", Errc::ConfigMismatch, "model is not a backbone-stage model");
  LoopContext ctx{clips, cfg, model, /*stage_motion=*/false, nullptr, {}};
  return run_loop(ctx, out_ckpt, hook);
}

TrainResult train_motion(VideoModel& model, const ClipSource& clips,
                         const estimator::EstimatorConfig& est, const TrainConfig& cfg,
                         const std::string& out_ckpt, const StepHook& hook) {
  check(model.stage == "motion", Errc::MissingBackbone,
        "stage-2 training needs a model initialized from a backbone checkpoint");
  check(model.has_motion(), Errc::MissingBackbone, "model has no motion encoder");
  // Only the motion encoder and the merge linear layers train.
  model.params.set_trainable_prefix("unet.", false);
  model.params.set_trainable_prefix("text.", false);
  model.params.set_trainable_prefix("enc.", true);
  model.params.set_trainable_prefix("inject.", true);
  LoopContext ctx{clips, cfg, model, /*stage_motion=*/true, nullptr, {}};
  ctx.est = &est;
  return run_loop(ctx, out_ckpt, hook);
}

VideoModel init_motion_from_backbone(const VideoModel& backbone,
                                     const model::MotionEncoderConfig& ecfg, uint64_t seed) {
  check(backbone.stage == "backbone", Errc::MissingBackbone,
        "expected a backbone-stage checkpoint");
  VideoModel m(backbone.ucfg, ecfg, backbone.sched, /*with_motion=*/true, seed);
  backbone.params.for_each([&](const nn::Parameter& p) {
    nn::Parameter* dst = m.params.find(p.name);
    check(dst != nullptr, Errc::ConfigMismatch, "backbone parameter missing in stage-2 model");
    check(dst->value.same_shape(p.value), Errc::ConfigMismatch, "shape drift for " + p.name);
    std::copy(p.value.data(), p.value.data() + p.value.numel(), dst->value.data());
  });
  return m;
}

void write_loss_csv(const TrainResult& r, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), Errc::IoFailure, "cannot write loss curve: " + path);
  out << "step,loss\n";
  char buf[64];
  for (const auto& [step, loss] : r.loss_curve) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g\n", step, loss);
    out << buf;
  }
}

}  // namespace onlyflow::train
