// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Trainable encoder mapping a flow field to four multi-scale motion features,
// one per U-net resolution. Displacements are normalized by frame size, the
// field is space-to-depth rearranged, then each stage runs two
// {resnet, temporal attention} pairs; the stage output after the final
// temporal attention is the feature c_k. Stage 1 keeps the unshuffled
// resolution; stages 2..4 downsample once at their first resnet, giving the
// /1, /2, /4, /8 ladder the U-net expects.

#pragma once

#include "onlyflow/flow.hpp"
#include "onlyflow/nn.hpp"

namespace onlyflow::model {

struct MotionEncoderConfig {
  int unshuffle_ratio = 2;                           // full-scale preset: 8
  std::vector<int> stage_channels = {32, 64, 128, 128};  // full-scale: 320,640,1280,1280
  int heads = 8;
  int frames = 16;
  int blocks_per_stage = 2;
};

void validate(const MotionEncoderConfig& cfg);

// Shape of feature k (0-based) for a flow of the given size.
std::vector<int> feature_shape(const MotionEncoderConfig& cfg, int frames, int height, int width,
                               int k);

class MotionEncoder {
 public:
  // Creates parameters under "enc." in the store.
  MotionEncoder(nn::ParamStore& ps, const MotionEncoderConfig& cfg, uint64_t seed);

  // Returns the four features, each [F, H_k, W_k, C_k].
  std::vector<nn::Var> encode(const flow::FlowField& fl) const;
  std::vector<nn::Var> encode(const nn::Var& flow_tensor, int height, int width) const;

  const MotionEncoderConfig& config() const { return cfg_; }

  // Raw F x H x W x 2 tensor, and the frame-size-normalized variant the
  // encoder consumes (u / W, v / H).
  static nn::Tensor flow_to_tensor(const flow::FlowField& fl);
  static nn::Tensor normalized_flow_tensor(const flow::FlowField& fl);

 private:
  MotionEncoderConfig cfg_;
  nn::Conv2dLayer stem_;
  struct StageBlock {
    nn::ResNetBlock res;
    nn::TemporalAttentionBlock attn;
  };
  std::vector<std::vector<StageBlock>> stages_;
};

}  // namespace onlyflow::model
