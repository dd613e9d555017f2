// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/nn.hpp"

#include <cmath>

namespace onlyflow::nn {

Parameter& ParamStore::create(const std::string& name, std::vector<int> shape, Init init,
                              uint64_t seed) {
  check(params_.find(name) == params_.end(), Errc::InvalidArgument, "duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(shape);
  Rng rng(hash_combine({seed, hash_str(name)}));
  double* d = p->value.data();
  const long n = p->value.numel();
  switch (init) {
    case Init::Zero:
      break;
    case Init::One:
      for (long i = 0; i < n; ++i) d[i] = 1.0;
      break;
    case Init::Normal02:
      for (long i = 0; i < n; ++i) d[i] = 0.02 * rng.normal();
      break;
    case Init::FanIn:
    case Init::FanInRelu: {
      long fan_in = 1;
      for (size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
      const double gain = init == Init::FanInRelu ? 2.0 : 1.0;
      const double std = std::sqrt(gain / (double)fan_in);
      for (long i = 0; i < n; ++i) d[i] = std * rng.normal();
      break;
    }
  }
  Parameter& ref = *p;
  params_[name] = std::move(p);
  return ref;
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : it->second.get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : it->second.get();
}

Parameter& ParamStore::get(const std::string& name) {
  Parameter* p = find(name);
  check(p != nullptr, Errc::InvalidArgument, "unknown parameter " + name);
  return *p;
}

long ParamStore::total_values() const {
  long n = 0;
  for_each([&](const Parameter& p) { n += p.value.numel(); });
  return n;
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  for (auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) p->trainable = trainable;
  }
}

std::vector<Parameter*> ParamStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

int norm_groups(int channels) {
  if (channels % 8 == 0) return 8;
  int g = 1;
  while (g * 2 <= channels && channels % (g * 2) == 0) g *= 2;
  return g;
}

LinearLayer::LinearLayer(ParamStore& ps, const std::string& prefix, int in, int out, uint64_t seed,
                         Init init, bool bias) {
  w = &ps.create(prefix + ".w", {in, out}, init, seed);
  if (bias) b = &ps.create(prefix + ".b", {out}, Init::Zero, seed);
}

Var LinearLayer::operator()(const Var& x) const {
  Var wv = leaf(*w);
  if (!b) return linear(x, wv, nullptr);
  Var bv = leaf(*b);
  return linear(x, wv, &bv);
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& prefix, int kernel, int in, int out,
                         int stride_, int pad_, uint64_t seed, Init init)
    : stride(stride_), pad(pad_) {
  w = &ps.create(prefix + ".w", {kernel, kernel, in, out}, init, seed);
  b = &ps.create(prefix + ".b", {out}, Init::Zero, seed);
}

Var Conv2dLayer::operator()(const Var& x) const {
  Var wv = leaf(*w);
  Var bv = leaf(*b);
  return conv2d(x, wv, &bv, stride, pad);
}

GroupNormLayer::GroupNormLayer(ParamStore& ps, const std::string& prefix, int channels,
                               uint64_t seed)
    : groups(norm_groups(channels)) {
  gamma = &ps.create(prefix + ".g", {channels}, Init::One, seed);
  beta = &ps.create(prefix + ".b", {channels}, Init::Zero, seed);
}

Var GroupNormLayer::operator()(const Var& x) const {
  return group_norm(x, groups, leaf(*gamma), leaf(*beta));
}

LayerNormLayer::LayerNormLayer(ParamStore& ps, const std::string& prefix, int channels,
                               uint64_t seed) {
  gamma = &ps.create(prefix + ".g", {channels}, Init::One, seed);
  beta = &ps.create(prefix + ".b", {channels}, Init::Zero, seed);
}

Var LayerNormLayer::operator()(const Var& x) const {
  return layer_norm(x, leaf(*gamma), leaf(*beta));
}

MhaLayer::MhaLayer(ParamStore& ps, const std::string& prefix, int channels, int context_dim,
                   int heads_, uint64_t seed)
    : heads(heads_) {
  check(channels % heads_ == 0, Errc::HeadMismatch,
        "heads must divide channels: " + std::to_string(heads_) + " vs " +
            std::to_string(channels));
  q = LinearLayer(ps, prefix + ".q", channels, channels, seed, Init::FanIn, false);
  k = LinearLayer(ps, prefix + ".k", context_dim, channels, seed, Init::FanIn, false);
  v = LinearLayer(ps, prefix + ".v", context_dim, channels, seed, Init::FanIn, false);
  o = LinearLayer(ps, prefix + ".o", channels, channels, seed, Init::Zero, true);
}

Var MhaLayer::operator()(const Var& qx, const Var& kvx) const {
  return o(attention_core(q(qx), k(kvx), v(kvx), heads));
}

TemporalAttentionBlock::TemporalAttentionBlock(ParamStore& ps, const std::string& prefix,
                                               int channels, int heads, uint64_t seed)
    : norm(ps, prefix + ".norm", channels, seed),
      mha(ps, prefix + ".attn", channels, channels, heads, seed) {}

Var TemporalAttentionBlock::operator()(const Var& x, const Tensor& positions) const {
  const int F = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  Var tokens = transpose01(reshape(x, {F, H * W, C}));  // [HW, F, C]
  Var n = norm(tokens);
  if (positions.defined()) {
    check(positions.dim(0) == F && positions.dim(1) == C, Errc::ShapeMismatch,
          "temporal positions shape");
    n = add_rows(n, constant(positions));
  }
  Var y = add(tokens, mha(n, n));
  return reshape(transpose01(y), {F, H, W, C});
}

SpatialAttentionBlock::SpatialAttentionBlock(ParamStore& ps, const std::string& prefix,
                                             int channels, int heads, uint64_t seed)
    : norm(ps, prefix + ".norm", channels, seed),
      mha(ps, prefix + ".attn", channels, channels, heads, seed) {}

Var SpatialAttentionBlock::operator()(const Var& x) const {
  const int F = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  Var tokens = reshape(x, {F, H * W, C});
  Var n = norm(tokens);
  Var y = add(tokens, mha(n, n));
  return reshape(y, {F, H, W, C});
}

CrossAttentionBlock::CrossAttentionBlock(ParamStore& ps, const std::string& prefix, int channels,
                                         int context_dim, int heads, uint64_t seed)
    : norm(ps, prefix + ".norm", channels, seed),
      mha(ps, prefix + ".attn", channels, context_dim, heads, seed) {}

Var CrossAttentionBlock::operator()(const Var& x, const Var& context) const {
  const int F = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  check(context->val.ndim() == 2, Errc::ShapeMismatch, "cross-attn context must be [T, D]");
  const int T = context->val.dim(0), D = context->val.dim(1);
  Var tokens = reshape(x, {F, H * W, C});
  Var n = norm(tokens);
  Var ctx = reshape(context, {1, T, D});
  Var y = add(tokens, mha(n, ctx));
  return reshape(y, {F, H, W, C});
}

ResNetBlock::ResNetBlock(ParamStore& ps, const std::string& prefix, int in, int out,
                         bool downsample_, int time_dim, uint64_t seed)
    : n1(ps, prefix + ".n1", in, seed),
      n2(ps, prefix + ".n2", out, seed),
      c1(ps, prefix + ".c1", 3, in, out, 1, 1, seed),
      c2(ps, prefix + ".c2", 3, out, out, 1, 1, seed, Init::Zero),
      skip(ps, prefix + ".skip", 1, in, out, 1, 0, seed, Init::FanIn),
      downsample(downsample_),
      has_time(time_dim > 0) {
  if (has_time) time_proj = LinearLayer(ps, prefix + ".temb", time_dim, out, seed);
}

Var ResNetBlock::operator()(const Var& x, const Var* time_emb) const {
  Var in = x;
  if (downsample) {
    check(x->val.dim(1) % 2 == 0 && x->val.dim(2) % 2 == 0, Errc::OddSpatialDims,
          "downsampling block needs even spatial dims, got " + shape_str(x->val.shape()));
    in = avg_pool2(x);
  }
  Var h = c1(silu(n1(in)));
  if (has_time && time_emb) h = add_channels(h, time_proj(*time_emb));
  h = c2(silu(n2(h)));
  return add(h, skip(in));
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (Parameter* p : params_) {
    if (!p->grad.defined()) p->grad = Tensor::zeros(p->value.shape());
    if (!p->adam_m.defined()) p->adam_m = Tensor::zeros(p->value.shape());
    if (!p->adam_v.defined()) p->adam_v = Tensor::zeros(p->value.shape());
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->grad.fill(0.0);
}

std::pair<double, double> Adam::step(double grad_scale) {
  double sq = 0.0;
  for (Parameter* p : params_) {
    const double* g = p->grad.data();
    const long n = p->grad.numel();
    for (long i = 0; i < n; ++i) {
      const double v = g[i] * grad_scale;
      sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  double clip_scale = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
  const double total_scale = grad_scale * clip_scale;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, (double)t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, (double)t_);
  for (Parameter* p : params_) {
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* m = p->adam_m.data();
    double* v = p->adam_v.data();
    const long n = p->value.numel();
    for (long i = 0; i < n; ++i) {
      const double gi = g[i] * total_scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
  return {norm, std::min(norm, norm * clip_scale)};
}

}  // namespace onlyflow::nn
