// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/estimator.hpp"

#include <cmath>

namespace onlyflow::estimator {

void validate(const EstimatorConfig& cfg) {
  check(cfg.window >= 3 && cfg.window % 2 == 1, Errc::BadRange, "window must be odd and >= 3");
  check(cfg.max_disp >= 1, Errc::BadRange, "max_disp must be >= 1");
}

std::vector<double> grayscale(const Image& frame) {
  std::vector<double> g((size_t)frame.height * frame.width);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      g[(size_t)y * frame.width + x] =
          0.299 * frame.at(y, x, 0) + 0.587 * frame.at(y, x, 1) + 0.114 * frame.at(y, x, 2);
    }
  }
  return g;
}

flow::FlowFrame block_match_pair(const std::vector<double>& prev_gray,
                                 const std::vector<double>& next_gray, int H, int W,
                                 const EstimatorConfig& cfg) {
  validate(cfg);
  flow::FlowFrame out(H, W);
  const int hw = cfg.window / 2;
  const int D = cfg.max_disp;

  parallel_for(H, [&](long lo, long hi) {
    for (long y = lo; y < hi; ++y) {
      for (int x = 0; x < W; ++x) {
        double best_cost = 0.0;
        int best_u = 0, best_v = 0;
        bool first = true;
        for (int dv = -D; dv <= D; ++dv) {
          for (int du = -D; du <= D; ++du) {
            double cost = 0.0;
            long count = 0;
            for (int wy = -hw; wy <= hw; ++wy) {
              const long py = y + wy;
              const long qy = py + dv;
              if (py < 0 || py >= H || qy < 0 || qy >= H) continue;
              const double* prow = prev_gray.data() + py * W;
              const double* nrow = next_gray.data() + qy * W;
              for (int wx = -hw; wx <= hw; ++wx) {
                const long px = x + wx;
                const long qx = px + du;
                if (px < 0 || px >= W || qx < 0 || qx >= W) continue;
                const double d = prow[px] - nrow[qx];
                cost += d * d;
                ++count;
              }
            }
            if (count == 0) continue;
            cost /= (double)count;
            // Strict ordering: cost, then |u|+|v|, then v, then u.
            bool better = false;
            if (first || cost < best_cost) {
              better = true;
            } else if (cost == best_cost) {
              const int l1 = std::abs(du) + std::abs(dv);
              const int best_l1 = std::abs(best_u) + std::abs(best_v);
              if (l1 < best_l1 || (l1 == best_l1 && (dv < best_v || (dv == best_v && du < best_u)))) {
                better = true;
              }
            }
            if (better) {
              best_cost = cost;
              best_u = du;
              best_v = dv;
              first = false;
            }
          }
        }
        out.at((int)y, x, 0) = best_u;
        out.at((int)y, x, 1) = best_v;
      }
    }
  }, 1);
  return out;
}

flow::FlowField estimate(const data::VideoClip& video, const EstimatorConfig& cfg) {
  const int F = video.frame_count();
  check(F >= 2, Errc::TooFewFrames, "estimate needs at least 2 frames");
  if (cfg.backend == Backend::GroundTruth) {
    check(video.gt_flow.has_value(), Errc::InvalidArgument,
          "ground_truth backend on a clip without stored flow");
    return *video.gt_flow;
  }
  validate(cfg);
  const int H = video.height(), W = video.width();
  flow::FlowField out(F, H, W);
  std::vector<std::vector<double>> gray(F);
  for (int t = 0; t < F; ++t) gray[t] = grayscale(video.frames[t]);
  for (int t = 1; t < F; ++t) {
    flow::set_slice(out, t, block_match_pair(gray[t - 1], gray[t], H, W, cfg));
  }
  return out;
}

const char* backend_name(Backend b) {
  return b == Backend::GroundTruth ? "ground_truth" : "block_match";
}

Backend backend_from_name(const std::string& name) {
  if (name == "ground_truth") return Backend::GroundTruth;
  if (name == "block_match") return Backend::BlockMatch;
  fail(Errc::InvalidArgument, "unknown estimator backend: " + name);
}

}  // namespace onlyflow::estimator
