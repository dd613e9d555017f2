// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// The optical flow predictor behind the conditioning pipeline: a ground-truth
// passthrough and an exhaustively verifiable integer block matcher.

#pragma once

#include "onlyflow/flow.hpp"
#include "onlyflow/scene.hpp"

namespace onlyflow::estimator {

enum class Backend { GroundTruth, BlockMatch };

struct EstimatorConfig {
  Backend backend = Backend::BlockMatch;
  int window = 7;    // odd, >= 3
  int max_disp = 4;  // >= 1
};

void validate(const EstimatorConfig& cfg);

// 0.299 R + 0.587 G + 0.114 B.
std::vector<double> grayscale(const Image& frame);

// Dense field for each consecutive pair; entry 0 is zero padding. The block
// matcher picks, per pixel of the earlier frame, the integer displacement in
// [-max_disp, max_disp]^2 minimizing windowed SSD on grayscale frames
// (windows clipped to the image, cost normalized by the valid pixel count);
// ties break by smallest |u|+|v|, then smallest v, then smallest u.
flow::FlowField estimate(const data::VideoClip& video, const EstimatorConfig& cfg);

// One pair; exposed for oracle comparison in tests.
flow::FlowFrame block_match_pair(const std::vector<double>& prev_gray,
                                 const std::vector<double>& next_gray, int height, int width,
                                 const EstimatorConfig& cfg);

const char* backend_name(Backend b);
Backend backend_from_name(const std::string& name);

}  // namespace onlyflow::estimator
