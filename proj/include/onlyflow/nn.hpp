// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter registry and the layer vocabulary shared by the motion encoder,
// the U-net and the evaluation probe.

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "onlyflow/autodiff.hpp"

namespace onlyflow::nn {

enum class Init { Zero, One, FanIn, FanInRelu, Normal02 };

// Named parameters, ordered by name. Each parameter is initialized from a
// stream derived from (seed, name), so values do not depend on creation order.
class ParamStore {
 public:
  Parameter& create(const std::string& name, std::vector<int> shape, Init init, uint64_t seed);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& get(const std::string& name);

  template <typename F>
  void for_each(F&& f) {
    for (auto& [name, p] : params_) f(*p);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [name, p] : params_) f(*p);
  }

  size_t size() const { return params_.size(); }
  long total_values() const;
  void set_trainable_prefix(const std::string& prefix, bool trainable);
  std::vector<Parameter*> trainable();

 private:
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

// Group count for channel-grouped normalization: 8 when it divides C,
// otherwise the largest power of two that does.
int norm_groups(int channels);

struct LinearLayer {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  LinearLayer() = default;
  LinearLayer(ParamStore& ps, const std::string& prefix, int in, int out, uint64_t seed,
              Init init = Init::FanIn, bool bias = true);
  Var operator()(const Var& x) const;
};

struct Conv2dLayer {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int stride = 1;
  int pad = 0;
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& ps, const std::string& prefix, int kernel, int in, int out, int stride,
              int pad, uint64_t seed, Init init = Init::FanInRelu);
  Var operator()(const Var& x) const;
};

struct GroupNormLayer {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  int groups = 1;
  GroupNormLayer() = default;
  GroupNormLayer(ParamStore& ps, const std::string& prefix, int channels, uint64_t seed);
  Var operator()(const Var& x) const;
};

struct LayerNormLayer {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  LayerNormLayer() = default;
  LayerNormLayer(ParamStore& ps, const std::string& prefix, int channels, uint64_t seed);
  Var operator()(const Var& x) const;
};

// Projections around attention_core. Output projection is zero-initialized so
// a fresh block is the identity (residual added by the caller).
struct MhaLayer {
  LinearLayer q, k, v, o;
  int heads = 1;
  MhaLayer() = default;
  MhaLayer(ParamStore& ps, const std::string& prefix, int channels, int context_dim, int heads,
           uint64_t seed);
  // qx: [B, S, C]; kvx: [Bk, T, context_dim], Bk in {B, 1}.
  Var operator()(const Var& qx, const Var& kvx) const;
};

// Pre-norm temporal self-attention over the frame axis, one sequence per
// spatial location: x + O(attend(LN(x) + positions)). Positions are added
// after the norm and are not part of the residual.
struct TemporalAttentionBlock {
  LayerNormLayer norm;
  MhaLayer mha;
  TemporalAttentionBlock() = default;
  TemporalAttentionBlock(ParamStore& ps, const std::string& prefix, int channels, int heads,
                         uint64_t seed);
  // x: [F, H, W, C]; positions: [F, C] table (pass empty to skip).
  Var operator()(const Var& x, const Tensor& positions) const;
};

// Pre-norm per-frame self-attention over spatial tokens.
struct SpatialAttentionBlock {
  LayerNormLayer norm;
  MhaLayer mha;
  SpatialAttentionBlock() = default;
  SpatialAttentionBlock(ParamStore& ps, const std::string& prefix, int channels, int heads,
                        uint64_t seed);
  Var operator()(const Var& x) const;  // x: [F, H, W, C]
};

// Pre-norm cross-attention from spatial tokens to a shared context sequence.
struct CrossAttentionBlock {
  LayerNormLayer norm;
  MhaLayer mha;
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParamStore& ps, const std::string& prefix, int channels, int context_dim,
                      int heads, uint64_t seed);
  Var operator()(const Var& x, const Var& context) const;  // context: [T, context_dim]
};

// Per-frame 2D ResNet block: norm-act-conv3x3 twice plus a 1x1-conv skip.
// With `downsample` a stride-2 average pool is applied once at block entry.
// The optional time embedding is projected and added after the first conv.
struct ResNetBlock {
  GroupNormLayer n1, n2;
  Conv2dLayer c1, c2, skip;
  LinearLayer time_proj;
  bool downsample = false;
  bool has_time = false;
  ResNetBlock() = default;
  ResNetBlock(ParamStore& ps, const std::string& prefix, int in, int out, bool downsample,
              int time_dim, uint64_t seed);
  Var operator()(const Var& x, const Var* time_emb) const;
};

// AdamW step over the trainable parameters; returns the pre-clip global
// gradient norm. Gradients are averaged by `grad_scale` and clipped to
// `clip_norm` (<= 0 disables) before the moment update; weight decay is
// decoupled.
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 5e-8;
  double weight_decay = 1e-2;
  double clip_norm = 0.4;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);
  void zero_grad();
  // Returns {pre_clip_norm, post_clip_norm} of the scaled gradient.
  std::pair<double, double> step(double grad_scale = 1.0);
  long step_count() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace onlyflow::nn
