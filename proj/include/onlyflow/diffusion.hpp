// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Factorized spatio-temporal U-net with motion-feature injection, the exact
// space-to-depth latent, the DDPM forward process, and PNDM / ancestral
// samplers with classifier-free guidance.

#pragma once

#include <memory>
#include <optional>

#include "onlyflow/motion_encoder.hpp"
#include "onlyflow/scene.hpp"

namespace onlyflow::model {

// ---------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------

struct ScheduleParams {
  double beta_start = 0.00085;
  double beta_end = 0.012;
  int steps = 1000;
};

struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;       // index t-1 holds beta_t, t in 1..T
  std::vector<double> alphas;      // 1 - beta
  std::vector<double> alpha_bars;  // running products

  double beta(int t) const { return betas[t - 1]; }
  // Lookup with the boundary convention alpha_bar(0) == alpha_bar(1).
  double alpha_bar(int t) const { return alpha_bars[t <= 1 ? 0 : t - 1]; }
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end);
inline NoiseSchedule make_schedule(const ScheduleParams& p) {
  return make_schedule(p.steps, p.beta_start, p.beta_end);
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps. t = 0 returns z0 (the
// no-noise limit); otherwise 1 <= t <= T.
nn::Tensor q_sample(const nn::Tensor& z0, int t, const nn::Tensor& eps,
                    const NoiseSchedule& sched);

// eps_uncond + s * (eps_cond - eps_uncond)
nn::Tensor cfg_eps(const nn::Tensor& eps_cond, const nn::Tensor& eps_uncond, double s);

// ---------------------------------------------------------------------------
// Latent codec: exact space-to-depth, decode(encode(v)) == v bitwise.
// ---------------------------------------------------------------------------

nn::Tensor video_to_tensor(const data::VideoClip& clip);        // [F,H,W,3]
data::VideoClip tensor_to_video(const nn::Tensor& t, bool clamp01);

nn::Tensor latent_encode(const nn::Tensor& video, int latent_factor);
nn::Tensor latent_decode(const nn::Tensor& z, int latent_factor);

// ---------------------------------------------------------------------------
// U-net
// ---------------------------------------------------------------------------

enum class InjectVariant { T, ST };

struct UNetConfig {
  int latent_factor = 2;  // must equal the motion encoder's unshuffle ratio
  std::vector<int> stage_channels = {32, 64, 128, 128};
  int heads = 8;
  int frames = 16;
  InjectVariant variant = InjectVariant::T;
  bool inject_up_path = false;
  int vocab = 0;       // 0 -> caption template vocabulary size
  int text_dim = 64;
  int max_tokens = 16;
};

void validate(const UNetConfig& cfg);

class UNet {
 public:
  UNet(nn::ParamStore& ps, const UNetConfig& cfg, bool with_motion, uint64_t seed);

  // z_t: [F, h, w, Cz]; motion: the encoder features (null = unconditional);
  // gamma scales the injected signal, 0 bypasses injection entirely.
  nn::Var forward(const nn::Var& z_t, int t, const std::vector<int>& tokens,
                  const std::vector<nn::Var>* motion, double gamma) const;

  const UNetConfig& config() const { return cfg_; }
  bool with_motion() const { return with_motion_; }

 private:
  struct StageAttn {
    nn::SpatialAttentionBlock spatial;
    nn::CrossAttentionBlock cross;
    nn::TemporalAttentionBlock temporal;
  };
  struct InjectSite {
    nn::LinearLayer temporal;  // zero-initialized merge maps
    nn::LinearLayer spatial;   // only for the ST variant
  };

  nn::Var inject(const nn::Var& h, const nn::Var& c, double gamma,
                 const nn::LinearLayer& lin) const;
  nn::Var run_stage_attn(const StageAttn& attn, nn::Var x, const nn::Var& text,
                         const std::vector<nn::Var>* motion, double gamma,
                         const InjectSite* site, int k) const;

  UNetConfig cfg_;
  bool with_motion_ = false;
  int time_dim_ = 0;
  nn::Parameter* text_table_ = nullptr;
  nn::LinearLayer time_mlp1_, time_mlp2_;
  nn::Conv2dLayer stem_;
  std::vector<nn::ResNetBlock> down_res_;
  std::vector<StageAttn> down_attn_;
  nn::ResNetBlock mid_res1_, mid_res2_;
  StageAttn mid_attn_;
  std::vector<nn::ResNetBlock> up_res_;
  std::vector<StageAttn> up_attn_;
  std::vector<nn::Conv2dLayer> up_conv_;  // after nearest-neighbor upsample
  nn::GroupNormLayer head_norm_;
  nn::Conv2dLayer head_conv_;
  std::vector<InjectSite> inject_down_, inject_up_;
};

// Standalone form of the merge operation, h + gamma * (W (c + h) + b), used
// by the unit tests; W is [C, C], b is [C].
nn::Var inject_features(const nn::Var& h, const nn::Var& c, double gamma, const nn::Var& w,
                        const nn::Var& b);

// ---------------------------------------------------------------------------
// Assembled model
// ---------------------------------------------------------------------------

struct VideoModel {
  nn::ParamStore params;
  UNetConfig ucfg;
  MotionEncoderConfig ecfg;
  ScheduleParams sched;
  std::string stage = "backbone";  // or "motion"
  std::unique_ptr<UNet> unet;
  std::unique_ptr<MotionEncoder> encoder;  // present iff stage == "motion"

  VideoModel() = default;
  VideoModel(const UNetConfig& u, const MotionEncoderConfig& e, const ScheduleParams& s,
             bool with_motion, uint64_t seed);
  VideoModel(VideoModel&&) = default;
  VideoModel& operator=(VideoModel&&) = default;

  bool has_motion() const { return encoder != nullptr; }
};

// heads/channel agreement, 4 stages, encoder ratio == latent factor.
void check_assembly(const UNetConfig& u, const MotionEncoderConfig& e);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

enum class SamplerKind { Pndm, Ancestral };

struct SampleConfig {
  SamplerKind sampler = SamplerKind::Pndm;
  int steps = 50;
  double guidance = 7.5;
  double gamma = 1.0;
  uint64_t seed = 0;
  int frames = 16, height = 64, width = 64;
};

// Deterministic given (model parameters, config, prompt, flow). The flow may
// be null; gamma = 0 or a null flow disables conditioning. Output frames are
// decoded through the latent codec and clamped to [0, 1].
data::VideoClip sample(const VideoModel& model, const std::string& prompt,
                       const flow::FlowField* flow_cond, const SampleConfig& cfg);

const char* sampler_name(SamplerKind k);
SamplerKind sampler_from_name(const std::string& s);
const char* variant_name(InjectVariant v);
InjectVariant variant_from_name(const std::string& s);

}  // namespace onlyflow::model
