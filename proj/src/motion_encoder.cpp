// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/motion_encoder.hpp"

namespace onlyflow::model {

void validate(const MotionEncoderConfig& cfg) {
  check(cfg.unshuffle_ratio >= 1, Errc::BadRange, "unshuffle ratio");
  check(cfg.stage_channels.size() == 4, Errc::ConfigMismatch, "encoder needs exactly 4 stages");
  check(cfg.blocks_per_stage >= 1, Errc::BadRange, "blocks per stage");
  check(cfg.frames >= 1, Errc::BadRange, "frames");
  for (int c : cfg.stage_channels) {
    check(c >= 1, Errc::BadRange, "stage channels");
    check(c % cfg.heads == 0, Errc::HeadMismatch, "heads must divide every stage channel count");
  }
}

std::vector<int> feature_shape(const MotionEncoderConfig& cfg, int frames, int height, int width,
                               int k) {
  check(k >= 0 && k < 4, Errc::BadDims, "feature index");
  const int div = cfg.unshuffle_ratio << k;
  check(height % div == 0 && width % div == 0, Errc::IndivisibleDims,
        "flow dims must be divisible by ratio * 2^k");
  return {frames, height / div, width / div, cfg.stage_channels[k]};
}

MotionEncoder::MotionEncoder(nn::ParamStore& ps, const MotionEncoderConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
  validate(cfg);
  const int in_ch = 2 * cfg.unshuffle_ratio * cfg.unshuffle_ratio;
  stem_ = nn::Conv2dLayer(ps, "enc.stem", 3, in_ch, cfg.stage_channels[0], 1, 1, seed);
  stages_.resize(4);
  int prev = cfg.stage_channels[0];
  for (int k = 0; k < 4; ++k) {
    const int ch = cfg.stage_channels[k];
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const std::string prefix =
          "enc.stage" + std::to_string(k) + ".block" + std::to_string(b);
      const bool down = (k >= 1 && b == 0);
      StageBlock sb{
          nn::ResNetBlock(ps, prefix + ".res", b == 0 ? prev : ch, ch, down, /*time_dim=*/0,
                          seed),
          nn::TemporalAttentionBlock(ps, prefix + ".tattn", ch, cfg.heads, seed)};
      stages_[k].push_back(std::move(sb));
    }
    prev = ch;
  }
}

nn::Tensor MotionEncoder::flow_to_tensor(const flow::FlowField& fl) {
  nn::Tensor t({fl.frames, fl.height, fl.width, 2});
  std::copy(fl.data.begin(), fl.data.end(), t.data());
  return t;
}

nn::Tensor MotionEncoder::normalized_flow_tensor(const flow::FlowField& fl) {
  // Frame-relative units keep the encoder resolution-agnostic.
  nn::Tensor t({fl.frames, fl.height, fl.width, 2});
  double* d = t.data();
  const double inv_w = 1.0 / fl.width, inv_h = 1.0 / fl.height;
  for (long i = 0; i < t.numel(); i += 2) {
    d[i] = fl.data[i] * inv_w;
    d[i + 1] = fl.data[i + 1] * inv_h;
  }
  return t;
}

std::vector<nn::Var> MotionEncoder::encode(const flow::FlowField& fl) const {
  return encode(nn::constant(normalized_flow_tensor(fl)), fl.height, fl.width);
}

std::vector<nn::Var> MotionEncoder::encode(const nn::Var& flow_tensor, int height,
                                           int width) const {
  const int r = cfg_.unshuffle_ratio;
  check(height % (r * 8) == 0 && width % (r * 8) == 0, Errc::IndivisibleDims,
        "flow dims must be divisible by ratio*8 for the 4-scale ladder");
  nn::Var x = nn::pixel_unshuffle(flow_tensor, r);
  x = stem_(x);
  std::vector<nn::Var> features;
  const int frames = flow_tensor->val.dim(0);
  for (int k = 0; k < 4; ++k) {
    const nn::Tensor pos = nn::sinusoidal_positions(frames, cfg_.stage_channels[k]);
    for (const auto& block : stages_[k]) {
      x = block.res(x, nullptr);
      x = block.attn(x, pos);
    }
    features.push_back(x);
  }
  return features;
}

}  // namespace onlyflow::model
