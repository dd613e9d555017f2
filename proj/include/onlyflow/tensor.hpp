// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "onlyflow/common.hpp"

namespace onlyflow::nn {

// Dense double-precision tensor with shared storage. Copies are shallow;
// every op allocates a fresh output and never mutates its inputs, so sharing
// is safe. clone() deep-copies.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)),
        store_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}
  Tensor(std::vector<int> shape, std::shared_ptr<std::vector<double>> store)
      : shape_(std::move(shape)), store_(std::move(store)) {
    check((long)store_->size() == count(shape_), Errc::ShapeMismatch, "tensor storage size");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : *t.store_) x = v;
    return t;
  }
  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    check(count(shape) == (long)values.size(), Errc::ShapeMismatch, "tensor literal size");
    return Tensor(std::move(shape), std::make_shared<std::vector<double>>(std::move(values)));
  }

  bool defined() const { return store_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[i]; }
  int ndim() const { return (int)shape_.size(); }
  long numel() const { return store_ ? (long)store_->size() : 0; }
  double* data() { return store_->data(); }
  const double* data() const { return store_->data(); }
  double& operator[](long i) { return (*store_)[i]; }
  double operator[](long i) const { return (*store_)[i]; }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.store_ = std::make_shared<std::vector<double>>(*store_);
    return t;
  }

  Tensor reshaped(std::vector<int> shape) const {
    check(count(shape) == numel(), Errc::ShapeMismatch, "reshape numel mismatch");
    return Tensor(std::move(shape), store_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) {
    for (auto& x : *store_) x = v;
  }

  static long count(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) {
      check(d > 0, Errc::NonPositiveDims, "tensor dim must be positive");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> store_;
};

std::string shape_str(const std::vector<int>& s);

}  // namespace onlyflow::nn
