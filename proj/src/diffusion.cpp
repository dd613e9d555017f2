// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/diffusion.hpp"

#include <cmath>
#include <deque>

namespace onlyflow::model {

using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Schedule / forward process
// ---------------------------------------------------------------------------

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  check(T >= 1, Errc::BadRange, "schedule needs at least one step");
  check(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, Errc::BadRange,
        "need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b =
        T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (double)i / (double)(T - 1);
    s.betas[i] = b;
    s.alphas[i] = 1.0 - b;
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
  }
  return s;
}

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  check(z0.same_shape(eps), Errc::ShapeMismatch, "q_sample eps shape");
  check(t >= 0 && t <= sched.T, Errc::BadRange, "q_sample timestep");
  if (t == 0) return z0.clone();
  const double ab = sched.alpha_bar(t);
  const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
  Tensor out(z0.shape());
  const double* pz = z0.data();
  const double* pe = eps.data();
  double* po = out.data();
  const long n = out.numel();
  for (long i = 0; i < n; ++i) po[i] = sa * pz[i] + sb * pe[i];
  return out;
}

Tensor cfg_eps(const Tensor& eps_cond, const Tensor& eps_uncond, double s) {
  check(eps_cond.same_shape(eps_uncond), Errc::ShapeMismatch, "cfg_eps shapes");
  if (s == 1.0) return eps_cond.clone();
  if (s == 0.0) return eps_uncond.clone();
  Tensor out(eps_cond.shape());
  const double* pc = eps_cond.data();
  const double* pu = eps_uncond.data();
  double* po = out.data();
  const long n = out.numel();
  for (long i = 0; i < n; ++i) po[i] = pu[i] + s * (pc[i] - pu[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Latent codec
// ---------------------------------------------------------------------------

Tensor video_to_tensor(const data::VideoClip& clip) {
  check(clip.frame_count() >= 1, Errc::TooFewFrames, "empty clip");
  const int F = clip.frame_count(), H = clip.height(), W = clip.width();
  Tensor t({F, H, W, 3});
  double* d = t.data();
  for (int f = 0; f < F; ++f) {
    std::copy(clip.frames[f].data.begin(), clip.frames[f].data.end(), d + (long)f * H * W * 3);
  }
  return t;
}

data::VideoClip tensor_to_video(const Tensor& t, bool clamp01) {
  check(t.ndim() == 4 && t.dim(3) == 3, Errc::ShapeMismatch, "video tensor must be [F,H,W,3]");
  data::VideoClip clip;
  const int F = t.dim(0), H = t.dim(1), W = t.dim(2);
  const double* d = t.data();
  for (int f = 0; f < F; ++f) {
    Image img(H, W);
    for (long i = 0; i < (long)H * W * 3; ++i) {
      double v = d[(long)f * H * W * 3 + i];
      if (clamp01) v = v < 0 ? 0 : (v > 1 ? 1 : v);
      img.data[i] = v;
    }
    clip.frames.push_back(std::move(img));
  }
  return clip;
}

Tensor latent_encode(const Tensor& video, int latent_factor) {
  return nn::pixel_unshuffle_val(video, latent_factor);
}

Tensor latent_decode(const Tensor& z, int latent_factor) {
  return nn::pixel_shuffle_val(z, latent_factor);
}

// ---------------------------------------------------------------------------
// U-net
// ---------------------------------------------------------------------------

void validate(const UNetConfig& cfg) {
  check(cfg.stage_channels.size() == 4, Errc::ConfigMismatch, "u-net needs exactly 4 stages");
  check(cfg.latent_factor >= 1, Errc::BadRange, "latent factor");
  for (int c : cfg.stage_channels) {
    check(c % cfg.heads == 0, Errc::HeadMismatch, "heads must divide stage channels");
  }
  check(cfg.text_dim >= 1 && cfg.max_tokens >= 1, Errc::BadRange, "text config");
  check(cfg.frames >= 1, Errc::BadRange, "frames");
}

void check_assembly(const UNetConfig& u, const MotionEncoderConfig& e) {
  validate(u);
  validate(e);
  check(u.latent_factor == e.unshuffle_ratio, Errc::ConfigMismatch,
        "encoder unshuffle ratio must equal the u-net latent factor");
  check(u.stage_channels == e.stage_channels, Errc::ConfigMismatch,
        "encoder and u-net stage channels must match");
  check(u.frames == e.frames, Errc::ConfigMismatch, "frame counts must match");
}

namespace {

Tensor timestep_embedding(int t, int dim) {
  Tensor out({dim});
  double* po = out.data();
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / (double)dim);
    po[2 * i] = std::sin(t * freq);
    po[2 * i + 1] = std::cos(t * freq);
  }
  return out;
}

}  // namespace

UNet::UNet(nn::ParamStore& ps, const UNetConfig& cfg, bool with_motion, uint64_t seed)
    : cfg_(cfg), with_motion_(with_motion) {
  validate(cfg);
  const auto& C = cfg.stage_channels;
  const int Cz = 3 * cfg.latent_factor * cfg.latent_factor;
  const int vocab = cfg.vocab > 0 ? cfg.vocab : data::vocab_size();
  time_dim_ = 4 * C[0];
  if (time_dim_ % 2 != 0) ++time_dim_;

  text_table_ = &ps.create("text.embed", {vocab, cfg.text_dim}, nn::Init::Normal02, seed);
  time_mlp1_ = nn::LinearLayer(ps, "unet.time.l1", time_dim_, time_dim_, seed);
  time_mlp2_ = nn::LinearLayer(ps, "unet.time.l2", time_dim_, time_dim_, seed);
  stem_ = nn::Conv2dLayer(ps, "unet.stem", 3, Cz, C[0], 1, 1, seed);

  auto make_attn = [&](const std::string& prefix, int ch) {
    return StageAttn{nn::SpatialAttentionBlock(ps, prefix + ".sattn", ch, cfg.heads, seed),
                     nn::CrossAttentionBlock(ps, prefix + ".cattn", ch, cfg.text_dim, cfg.heads,
                                             seed),
                     nn::TemporalAttentionBlock(ps, prefix + ".tattn", ch, cfg.heads, seed)};
  };

  int prev = C[0];
  for (int k = 0; k < 4; ++k) {
    const std::string prefix = "unet.down" + std::to_string(k);
    down_res_.emplace_back(ps, prefix + ".res", prev, C[k], k >= 1, time_dim_, seed);
    down_attn_.push_back(make_attn(prefix, C[k]));
    prev = C[k];
  }
  mid_res1_ = nn::ResNetBlock(ps, "unet.mid.res1", C[3], C[3], false, time_dim_, seed);
  mid_attn_ = make_attn("unet.mid", C[3]);
  mid_res2_ = nn::ResNetBlock(ps, "unet.mid.res2", C[3], C[3], false, time_dim_, seed);

  for (int k = 3; k >= 0; --k) {
    const std::string prefix = "unet.up" + std::to_string(k);
    up_res_.emplace_back(ps, prefix + ".res", 2 * C[k], C[k], false, time_dim_, seed);
    up_attn_.push_back(make_attn(prefix, C[k]));
    if (k > 0) {
      up_conv_.emplace_back(ps, prefix + ".upconv", 3, C[k], C[k - 1], 1, 1, seed);
    }
  }
  head_norm_ = nn::GroupNormLayer(ps, "unet.head.norm", C[0], seed);
  head_conv_ = nn::Conv2dLayer(ps, "unet.head.conv", 3, C[0], Cz, 1, 1, seed, nn::Init::Zero);

  if (with_motion) {
    for (int k = 0; k < 4; ++k) {
      InjectSite site;
      site.temporal = nn::LinearLayer(ps, "inject.down" + std::to_string(k) + ".t", C[k], C[k],
                                      seed, nn::Init::Zero);
      if (cfg.variant == InjectVariant::ST) {
        site.spatial = nn::LinearLayer(ps, "inject.down" + std::to_string(k) + ".s", C[k], C[k],
                                       seed, nn::Init::Zero);
      }
      inject_down_.push_back(site);
    }
    if (cfg.inject_up_path) {
      for (int k = 0; k < 4; ++k) {
        InjectSite site;
        site.temporal = nn::LinearLayer(ps, "inject.up" + std::to_string(k) + ".t", C[k], C[k],
                                        seed, nn::Init::Zero);
        if (cfg.variant == InjectVariant::ST) {
          site.spatial = nn::LinearLayer(ps, "inject.up" + std::to_string(k) + ".s", C[k], C[k],
                                         seed, nn::Init::Zero);
        }
        inject_up_.push_back(site);
      }
    }
  }
}

Var inject_features(const Var& h, const Var& c, double gamma, const Var& w, const Var& b) {
  check(h->val.same_shape(c->val), Errc::ShapeMismatch, "inject: feature/latent shape mismatch");
  if (gamma == 0.0) return h;
  Var merged = nn::linear(nn::add(c, h), w, &b);
  return nn::add(h, nn::scale(merged, gamma));
}

Var UNet::inject(const Var& h, const Var& c, double gamma, const nn::LinearLayer& lin) const {
  check(h->val.same_shape(c->val), Errc::ShapeMismatch,
        "inject: motion feature " + nn::shape_str(c->val.shape()) + " vs latent " +
            nn::shape_str(h->val.shape()));
  if (gamma == 0.0) return h;
  Var bv = nn::leaf(*lin.b);
  Var merged = nn::linear(nn::add(c, h), nn::leaf(*lin.w), &bv);
  return nn::add(h, nn::scale(merged, gamma));
}

Var UNet::run_stage_attn(const StageAttn& attn, Var x, const Var& text,
                         const std::vector<nn::Var>* motion, double gamma, const InjectSite* site,
                         int k) const {
  const bool conditioned = motion != nullptr && gamma != 0.0 && site != nullptr;
  if (conditioned && cfg_.variant == InjectVariant::ST) {
    x = inject(x, (*motion)[k], gamma, site->spatial);
  }
  x = attn.spatial(x);
  x = attn.cross(x, text);
  if (conditioned) {
    x = inject(x, (*motion)[k], gamma, site->temporal);
  }
  const nn::Tensor pos = nn::sinusoidal_positions(x->val.dim(0), x->val.dim(3));
  x = attn.temporal(x, pos);
  return x;
}

Var UNet::forward(const Var& z_t, int t, const std::vector<int>& tokens,
                  const std::vector<nn::Var>* motion, double gamma) const {
  check(z_t->val.ndim() == 4, Errc::ShapeMismatch, "z_t must be [F,h,w,C]");
  const int Cz = 3 * cfg_.latent_factor * cfg_.latent_factor;
  check(z_t->val.dim(3) == Cz, Errc::ConfigMismatch, "latent channels mismatch");
  check((int)tokens.size() == cfg_.max_tokens, Errc::ConfigMismatch, "token sequence length");
  if (motion != nullptr && gamma != 0.0) {
    check(with_motion_, Errc::ConfigMismatch, "model built without motion conditioning");
    check(motion->size() == 4, Errc::ConfigMismatch, "need 4 motion features");
  }
  const std::vector<nn::Var>* m = (motion != nullptr && gamma != 0.0) ? motion : nullptr;

  // Conditioning streams.
  Var temb = nn::constant(timestep_embedding(t, time_dim_));
  temb = time_mlp2_(nn::silu(time_mlp1_(temb)));
  Var text = nn::embedding(nn::leaf(*text_table_), tokens);

  // Latents sit in [0,1]; center them at the stem.
  Var x = stem_(nn::add_scalar(z_t, -0.5));

  std::vector<Var> skips;
  for (int k = 0; k < 4; ++k) {
    x = down_res_[k](x, &temb);
    x = run_stage_attn(down_attn_[k], x, text, m, gamma,
                       inject_down_.empty() ? nullptr : &inject_down_[k], k);
    skips.push_back(x);
  }

  x = mid_res1_(x, &temb);
  x = run_stage_attn(mid_attn_, x, text, nullptr, 0.0, nullptr, 0);
  x = mid_res2_(x, &temb);

  for (int i = 0; i < 4; ++i) {
    const int k = 3 - i;
    x = nn::concat_lastdim(x, skips[k]);
    x = up_res_[i](x, &temb);
    const InjectSite* site =
        (cfg_.inject_up_path && !inject_up_.empty()) ? &inject_up_[k] : nullptr;
    x = run_stage_attn(up_attn_[i], x, text, m, gamma, site, k);
    if (k > 0) {
      x = up_conv_[i](nn::upsample_nearest2(x));
    }
  }
  x = head_conv_(nn::silu(head_norm_(x)));
  return x;
}

VideoModel::VideoModel(const UNetConfig& u, const MotionEncoderConfig& e, const ScheduleParams& s,
                       bool with_motion, uint64_t seed)
    : ucfg(u), ecfg(e), sched(s), stage(with_motion ? "motion" : "backbone") {
  if (with_motion) check_assembly(u, e);
  else validate(u);
  unet = std::make_unique<UNet>(params, u, with_motion, seed);
  if (with_motion) {
    encoder = std::make_unique<MotionEncoder>(params, e, hash_combine({seed, hash_str("enc")}));
  }
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

namespace {

Tensor randn_like(const std::vector<int>& shape, Rng& rng) {
  Tensor t(shape);
  double* d = t.data();
  const long n = t.numel();
  for (long i = 0; i < n; ++i) d[i] = rng.normal();
  return t;
}

Tensor axpby(double a, const Tensor& x, double b, const Tensor& y) {
  Tensor out(x.shape());
  const double* px = x.data();
  const double* py = y.data();
  double* po = out.data();
  const long n = out.numel();
  for (long i = 0; i < n; ++i) po[i] = a * px[i] + b * py[i];
  return out;
}

// PNDM transfer function between noise levels.
Tensor pndm_phi(const Tensor& x, const Tensor& eps, double ab_t, double ab_prev) {
  const double sample_coeff = std::sqrt(ab_prev / ab_t);
  const double denom = ab_t * std::sqrt(1.0 - ab_prev) + std::sqrt(ab_t * (1.0 - ab_t) * ab_prev);
  const double eps_coeff = (ab_prev - ab_t) / denom;
  return axpby(sample_coeff, x, -eps_coeff, eps);
}

std::vector<int> timestep_grid(int T, int steps) {
  check(steps >= 1 && steps <= T, Errc::StepsExceedT,
        "sampler steps must be in [1, T], got " + std::to_string(steps));
  const int stride = T / steps;
  std::vector<int> grid(steps);
  for (int i = 0; i < steps; ++i) grid[i] = T - i * stride;
  return grid;
}

}  // namespace

data::VideoClip sample(const VideoModel& model, const std::string& prompt,
                       const flow::FlowField* flow_cond, const SampleConfig& cfg) {
  nn::NoGradGuard no_grad;
  const NoiseSchedule sched = make_schedule(model.sched);
  const int r = model.ucfg.latent_factor;
  check(cfg.height % (r * 8) == 0 && cfg.width % (r * 8) == 0, Errc::IndivisibleDims,
        "sample dims must be divisible by latent_factor*8");
  const double gamma = (flow_cond == nullptr) ? 0.0 : cfg.gamma;

  // Encode the conditioning flow once; features are constants w.r.t. sampling.
  std::vector<Var> motion;
  if (flow_cond != nullptr && gamma != 0.0) {
    check(model.has_motion(), Errc::ConfigMismatch,
          "checkpoint has no motion encoder; sample without --flow or at gamma 0");
    check(flow_cond->frames == cfg.frames && flow_cond->height == cfg.height &&
              flow_cond->width == cfg.width,
          Errc::ShapeMismatch, "conditioning flow does not match the sample geometry");
    motion = model.encoder->encode(*flow_cond);
  }
  const std::vector<Var>* mp = motion.empty() ? nullptr : &motion;

  const std::vector<int> tokens = data::tokenize(prompt);
  const std::vector<int> null_tokens(data::kTokenLen, data::kNullToken);

  auto eps_fn = [&](const Tensor& x, int t) -> Tensor {
    Var xin = nn::constant(x);
    Tensor cond = model.unet->forward(xin, t, tokens, mp, gamma)->val;
    if (cfg.guidance == 1.0) return cond;
    Tensor uncond = model.unet->forward(xin, t, null_tokens, mp, gamma)->val;
    return cfg_eps(cond, uncond, cfg.guidance);
  };

  Rng rng(hash_combine({cfg.seed, hash_str("sample")}));
  const std::vector<int> zshape = {cfg.frames, cfg.height / r, cfg.width / r, 3 * r * r};
  Tensor x = randn_like(zshape, rng);

  const std::vector<int> grid = timestep_grid(sched.T, cfg.steps);

  if (cfg.sampler == SamplerKind::Ancestral) {
    for (size_t i = 0; i < grid.size(); ++i) {
      const int t = grid[i];
      const int t_prev = (i + 1 < grid.size()) ? grid[i + 1] : 0;
      const double ab_t = sched.alpha_bar(t);
      const double ab_prev = sched.alpha_bar(t_prev);
      const Tensor eps = eps_fn(x, t);
      // Posterior step between the selected levels (eta = 1).
      Tensor x0 = axpby(1.0 / std::sqrt(ab_t), x, -std::sqrt(1.0 - ab_t) / std::sqrt(ab_t), eps);
      const double var =
          (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
      const double sigma = std::sqrt(std::max(0.0, var));
      const double dir_coeff = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
      x = axpby(std::sqrt(ab_prev), x0, dir_coeff, eps);
      if (i + 1 < grid.size()) {
        Tensor noise = randn_like(zshape, rng);
        x = axpby(1.0, x, sigma, noise);
      }
    }
  } else {
    // PNDM: 12 pseudo-Runge-Kutta warmup calls covering the first 3 steps,
    // then 4th-order linear multistep on the remainder.
    std::deque<Tensor> ets;
    const int warmup = std::min<int>(3, (int)grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
      const int t = grid[i];
      const int t_prev = (i + 1 < grid.size()) ? grid[i + 1] : 0;
      const double ab_t = sched.alpha_bar(t);
      const double ab_prev = sched.alpha_bar(t_prev);
      if ((int)i < warmup) {
        const int t_mid = t - (t - t_prev) / 2;
        const double ab_mid = sched.alpha_bar(t_mid);
        const Tensor e1 = eps_fn(x, t);
        ets.push_back(e1);
        const Tensor x1 = pndm_phi(x, e1, ab_t, ab_mid);
        const Tensor e2 = eps_fn(x1, t_mid);
        const Tensor x2 = pndm_phi(x, e2, ab_t, ab_mid);
        const Tensor e3 = eps_fn(x2, t_mid);
        const Tensor x3 = pndm_phi(x, e3, ab_t, ab_prev);
        const Tensor e4 = eps_fn(x3, t_prev);
        Tensor eprime(e1.shape());
        {
          const double* p1 = e1.data();
          const double* p2 = e2.data();
          const double* p3 = e3.data();
          const double* p4 = e4.data();
          double* po = eprime.data();
          const long n = eprime.numel();
          for (long j = 0; j < n; ++j)
            po[j] = (p1[j] + 2.0 * p2[j] + 2.0 * p3[j] + p4[j]) / 6.0;
        }
        x = pndm_phi(x, eprime, ab_t, ab_prev);
      } else {
        const Tensor e = eps_fn(x, t);
        ets.push_back(e);
        while (ets.size() > 4) ets.pop_front();
        Tensor eprime(e.shape());
        if (ets.size() >= 4) {
          const double* p0 = ets[3].data();  // newest
          const double* p1 = ets[2].data();
          const double* p2 = ets[1].data();
          const double* p3 = ets[0].data();
          double* po = eprime.data();
          const long n = eprime.numel();
          for (long j = 0; j < n; ++j)
            po[j] = (55.0 * p0[j] - 59.0 * p1[j] + 37.0 * p2[j] - 9.0 * p3[j]) / 24.0;
        } else {
          eprime = e;
        }
        x = pndm_phi(x, eprime, ab_t, ab_prev);
      }
    }
  }

  Tensor video = latent_decode(x, r);
  data::VideoClip clip = tensor_to_video(video, /*clamp01=*/true);
  clip.caption = prompt;
  return clip;
}

const char* sampler_name(SamplerKind k) { return k == SamplerKind::Pndm ? "pndm" : "ancestral"; }

SamplerKind sampler_from_name(const std::string& s) {
  if (s == "pndm") return SamplerKind::Pndm;
  if (s == "ancestral") return SamplerKind::Ancestral;
  fail(Errc::InvalidArgument, "unknown sampler: " + s);
}

const char* variant_name(InjectVariant v) { return v == InjectVariant::T ? "T" : "ST"; }

InjectVariant variant_from_name(const std::string& s) {
  if (s == "T") return InjectVariant::T;
  if (s == "ST") return InjectVariant::ST;
  fail(Errc::InvalidArgument, "unknown injection variant: " + s);
}

}  // namespace onlyflow::model
