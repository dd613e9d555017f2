// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over Tensor. A graph is built per forward pass; nodes
// hold their value, a lazily-allocated gradient and a backward closure. Ops
// only create backward closures when some input requires a gradient, so pure
// inference carries no tape overhead beyond the activations themselves.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "onlyflow/tensor.hpp"

namespace onlyflow::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;       // running accumulator, zeroed by the optimizer
  Tensor adam_m, adam_v;
  bool trainable = true;
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated on demand during backward
  std::vector<Var> parents;
  std::function<void(Node&)> back;  // accumulates into parents' grads
  bool needs_grad = false;
  Parameter* param = nullptr;
};

// Global inference switch: while a NoGradGuard is alive no node requires a
// gradient, so ops skip tape construction and attention streams its
// probability rows instead of materializing them.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Graph roots.
Var constant(Tensor t);
Var input(Tensor t);       // differentiable non-parameter leaf (for grad checks)
Var leaf(Parameter& p);    // gradient accumulates straight into p.grad

// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);

Tensor& grad_buffer(Node& n);  // zero-allocates n.grad if needed

// Elementwise / shape ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var silu(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
Var transpose01(const Var& a);  // [A,B,C] -> [B,A,C]
Var concat_lastdim(const Var& a, const Var& b);
// x[..., C] + v[C]
Var add_channels(const Var& x, const Var& v);
// x[B, S, C] + r[S, C]
Var add_rows(const Var& x, const Var& r);

// x[..., K] @ w[K, N] + b[N]; pass b = nullptr for no bias.
Var linear(const Var& x, const Var& w, const Var* b);

Var softmax_lastdim(const Var& x);

// Multi-head scaled-dot-product attention. q is [B, S, C]; k and v are
// [Bk, T, C] with Bk == B or Bk == 1 (context broadcast over B). Returns
// [B, S, C]. When no gradient is needed the probability matrix is streamed
// row-by-row instead of materialized.
Var attention_core(const Var& q, const Var& k, const Var& v, int heads);

// x[N, H, W, C], normalized per (n, group) over H, W and the group's
// channels; gamma/beta are [C].
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps = 1e-5);
// Normalizes over the last dim.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// x[N, H, W, Ci], w[kh, kw, Ci, Co], b[Co] (may be nullptr).
Var conv2d(const Var& x, const Var& w, const Var* b, int stride, int pad);
Var avg_pool2(const Var& x);
Var upsample_nearest2(const Var& x);
// Global average / max pool over H and W: [N, H, W, C] -> [N, C].
Var mean_hw(const Var& x);
Var max_hw(const Var& x);

// r x r spatial blocks move into channels; output channel = c*r*r + dy*r + dx.
Var pixel_unshuffle(const Var& x, int r);
Var pixel_shuffle(const Var& x, int r);
Tensor pixel_unshuffle_val(const Tensor& x, int r);
Tensor pixel_shuffle_val(const Tensor& x, int r);

// table[V, D], ids in [0, V) -> [n, D]
Var embedding(const Var& table, const std::vector<int>& ids);

Var mean_all(const Var& x);          // -> [1]
Var mse(const Var& a, const Var& b); // mean squared error -> [1]
Var l2_norm(const Var& x);           // Frobenius norm -> [1]
// Mean softmax cross-entropy of logits[B, C] against integer targets.
Var cross_entropy(const Var& logits, const std::vector<int>& targets);

// Standard transformer positional table: row t, channel 2i = sin(t/10000^(2i/dim)),
// channel 2i+1 = cos(same). dim must be even.
Tensor sinusoidal_positions(int length, int dim);

}  // namespace onlyflow::nn
