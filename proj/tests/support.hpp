// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared test fixtures: temp directories, finite-difference gradient checks,
// tiny model configs.

#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "onlyflow/autodiff.hpp"
#include "onlyflow/nn.hpp"

namespace testsup {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    namespace fs = std::filesystem;
    path_ = (fs::temp_directory_path() / ("onlyflow_" + tag + "_" + std::to_string(::getpid())))
                .string();
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::string& path() const { return path_; }
  std::string sub(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

// Central finite differences on sampled coordinates of `target` against the
// analytic gradient of the scalar produced by `loss_fn`. The loss closure
// must rebuild the graph from current parameter/input values on every call.
struct GradCheckResult {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  long checked = 0;
};

inline GradCheckResult finite_diff_check(onlyflow::nn::Tensor& target,
                                         const std::function<double()>& loss_value,
                                         const std::function<onlyflow::nn::Tensor()>& grad_of_target,
                                         int samples = 24, double h = 1e-5, uint64_t seed = 99) {
  using onlyflow::nn::Tensor;
  onlyflow::Rng rng(seed);
  const Tensor analytic = grad_of_target();
  GradCheckResult res;
  const long n = target.numel();
  for (int s = 0; s < samples; ++s) {
    const long i = (long)rng.uniform_int((uint64_t)n);
    const double orig = target[i];
    target[i] = orig + h;
    const double up = loss_value();
    target[i] = orig - h;
    const double dn = loss_value();
    target[i] = orig;
    const double numeric = (up - dn) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(a - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
    ++res.checked;
  }
  return res;
}

inline onlyflow::nn::Tensor random_tensor(std::vector<int> shape, uint64_t seed,
                                          double scale = 1.0) {
  onlyflow::nn::Tensor t(std::move(shape));
  onlyflow::Rng rng(seed);
  for (long i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

}  // namespace testsup
