// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace onlyflow::nn {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

std::atomic<bool> g_grad_enabled{true};

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  bool ng = false;
  if (g_grad_enabled.load(std::memory_order_relaxed)) {
    for (const auto& p : parents) ng = ng || p->needs_grad;
  }
  n->needs_grad = ng;
  if (ng) {
    n->parents = std::move(parents);
    n->back = std::move(back);
  }
  return n;
}

// Leading dimensions collapsed: treats x as [rows, lastdim].
long rows_of(const Tensor& t) { return t.numel() / t.shape().back(); }

}  // namespace

bool grad_enabled() { return g_grad_enabled.load(std::memory_order_relaxed); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled.exchange(false)) {}
NoGradGuard::~NoGradGuard() { g_grad_enabled.store(prev_); }

Tensor& grad_buffer(Node& n) {
  if (!n.grad.defined()) n.grad = Tensor::zeros(n.val.shape());
  return n.grad;
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->needs_grad = false;
  return n;
}

Var input(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->needs_grad = grad_enabled();
  return n;
}

Var leaf(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->val = p.value;
  n->needs_grad = grad_enabled() && p.trainable;
  n->param = &p;
  if (n->needs_grad) {
    if (!p.grad.defined()) p.grad = Tensor::zeros(p.value.shape());
    n->grad = p.grad;  // shared storage: accumulation lands in the parameter
  }
  return n;
}

void backward(const Var& root) {
  check(root->val.numel() == 1, Errc::InvalidArgument, "backward root must be scalar");
  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  grad_buffer(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->back && n->grad.defined()) n->back(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise & shape ops
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check(a->val.same_shape(b->val), Errc::ShapeMismatch,
        "add: " + shape_str(a->val.shape()) + " vs " + shape_str(b->val.shape()));
  Tensor out(a->val.shape());
  const long n = out.numel();
  const double *pa = a->val.data(), *pb = b->val.data();
  double* po = out.data();
  for (long i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  return make_node(std::move(out), {a, b}, [](Node& nd) {
    const double* g = nd.grad.data();
    const long n = nd.grad.numel();
    for (int k = 0; k < 2; ++k) {
      if (!nd.parents[k]->needs_grad) continue;
      double* pg = grad_buffer(*nd.parents[k]).data();
      for (long i = 0; i < n; ++i) pg[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check(a->val.same_shape(b->val), Errc::ShapeMismatch, "sub shape mismatch");
  Tensor out(a->val.shape());
  const long n = out.numel();
  const double *pa = a->val.data(), *pb = b->val.data();
  double* po = out.data();
  for (long i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  return make_node(std::move(out), {a, b}, [](Node& nd) {
    const double* g = nd.grad.data();
    const long n = nd.grad.numel();
    if (nd.parents[0]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[0]).data();
      for (long i = 0; i < n; ++i) pg[i] += g[i];
    }
    if (nd.parents[1]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[1]).data();
      for (long i = 0; i < n; ++i) pg[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check(a->val.same_shape(b->val), Errc::ShapeMismatch, "mul shape mismatch");
  Tensor out(a->val.shape());
  const long n = out.numel();
  const double *pa = a->val.data(), *pb = b->val.data();
  double* po = out.data();
  for (long i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  return make_node(std::move(out), {a, b}, [](Node& nd) {
    const double* g = nd.grad.data();
    const long n = nd.grad.numel();
    const double* pa = nd.parents[0]->val.data();
    const double* pb = nd.parents[1]->val.data();
    if (nd.parents[0]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[0]).data();
      for (long i = 0; i < n; ++i) pg[i] += g[i] * pb[i];
    }
    if (nd.parents[1]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[1]).data();
      for (long i = 0; i < n; ++i) pg[i] += g[i] * pa[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a->val.shape());
  const long n = out.numel();
  const double* pa = a->val.data();
  double* po = out.data();
  for (long i = 0; i < n; ++i) po[i] = pa[i] * s;
  return make_node(std::move(out), {a}, [s](Node& nd) {
    const double* g = nd.grad.data();
    double* pg = grad_buffer(*nd.parents[0]).data();
    const long n = nd.grad.numel();
    for (long i = 0; i < n; ++i) pg[i] += g[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out(a->val.shape());
  const long n = out.numel();
  const double* pa = a->val.data();
  double* po = out.data();
  for (long i = 0; i < n; ++i) po[i] = pa[i] + s;
  return make_node(std::move(out), {a}, [](Node& nd) {
    const double* g = nd.grad.data();
    double* pg = grad_buffer(*nd.parents[0]).data();
    const long n = nd.grad.numel();
    for (long i = 0; i < n; ++i) pg[i] += g[i];
  });
}

Var silu(const Var& a) {
  Tensor out(a->val.shape());
  const long n = out.numel();
  const double* pa = a->val.data();
  double* po = out.data();
  for (long i = 0; i < n; ++i) {
    const double sig = 1.0 / (1.0 + std::exp(-pa[i]));
    po[i] = pa[i] * sig;
  }
  return make_node(std::move(out), {a}, [](Node& nd) {
    const double* g = nd.grad.data();
    const double* pa = nd.parents[0]->val.data();
    double* pg = grad_buffer(*nd.parents[0]).data();
    const long n = nd.grad.numel();
    for (long i = 0; i < n; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-pa[i]));
      pg[i] += g[i] * sig * (1.0 + pa[i] * (1.0 - sig));
    }
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a->val.reshaped(std::move(shape));  // zero-copy view
  return make_node(std::move(out), {a}, [](Node& nd) {
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = nd.grad.data();
    const long n = nd.grad.numel();
    for (long i = 0; i < n; ++i) pg[i] += g[i];
  });
}

Var transpose01(const Var& a) {
  check(a->val.ndim() == 3, Errc::ShapeMismatch, "transpose01 expects 3d");
  const int A = a->val.dim(0), B = a->val.dim(1), C = a->val.dim(2);
  Tensor out({B, A, C});
  const double* pa = a->val.data();
  double* po = out.data();
  parallel_for(B, [&](long lo, long hi) {
    for (long b = lo; b < hi; ++b)
      for (long i = 0; i < A; ++i)
        std::copy(pa + (i * B + b) * C, pa + (i * B + b) * C + C, po + (b * A + i) * C);
  }, 8);
  return make_node(std::move(out), {a}, [A, B, C](Node& nd) {
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = nd.grad.data();
    parallel_for(A, [&](long lo, long hi) {
      for (long i = lo; i < hi; ++i)
        for (long b = 0; b < B; ++b) {
          const double* src = g + (b * A + i) * C;
          double* dst = pg + (i * B + b) * C;
          for (long c = 0; c < C; ++c) dst[c] += src[c];
        }
    }, 8);
  });
}

Var concat_lastdim(const Var& a, const Var& b) {
  check(a->val.ndim() == b->val.ndim(), Errc::ShapeMismatch, "concat ndim");
  for (int i = 0; i + 1 < a->val.ndim(); ++i) {
    check(a->val.dim(i) == b->val.dim(i), Errc::ShapeMismatch, "concat leading dims");
  }
  const int Ca = a->val.shape().back(), Cb = b->val.shape().back();
  std::vector<int> shape = a->val.shape();
  shape.back() = Ca + Cb;
  Tensor out(shape);
  const long rows = rows_of(a->val);
  const double *pa = a->val.data(), *pb = b->val.data();
  double* po = out.data();
  for (long r = 0; r < rows; ++r) {
    std::copy(pa + r * Ca, pa + (r + 1) * Ca, po + r * (Ca + Cb));
    std::copy(pb + r * Cb, pb + (r + 1) * Cb, po + r * (Ca + Cb) + Ca);
  }
  return make_node(std::move(out), {a, b}, [Ca, Cb, rows](Node& nd) {
    const double* g = nd.grad.data();
    if (nd.parents[0]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[0]).data();
      for (long r = 0; r < rows; ++r)
        for (int c = 0; c < Ca; ++c) pg[r * Ca + c] += g[r * (Ca + Cb) + c];
    }
    if (nd.parents[1]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[1]).data();
      for (long r = 0; r < rows; ++r)
        for (int c = 0; c < Cb; ++c) pg[r * Cb + c] += g[r * (Ca + Cb) + Ca + c];
    }
  });
}

Var add_channels(const Var& x, const Var& v) {
  const int C = x->val.shape().back();
  check(v->val.ndim() == 1 && v->val.dim(0) == C, Errc::ShapeMismatch, "add_channels dims");
  Tensor out(x->val.shape());
  const long rows = rows_of(x->val);
  const double *px = x->val.data(), *pv = v->val.data();
  double* po = out.data();
  for (long r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c) po[r * C + c] = px[r * C + c] + pv[c];
  return make_node(std::move(out), {x, v}, [C, rows](Node& nd) {
    const double* g = nd.grad.data();
    if (nd.parents[0]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[0]).data();
      const long n = nd.grad.numel();
      for (long i = 0; i < n; ++i) pg[i] += g[i];
    }
    if (nd.parents[1]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[1]).data();
      for (long r = 0; r < rows; ++r)
        for (int c = 0; c < C; ++c) pg[c] += g[r * C + c];
    }
  });
}

Var add_rows(const Var& x, const Var& r) {
  check(x->val.ndim() == 3 && r->val.ndim() == 2, Errc::ShapeMismatch, "add_rows dims");
  const int B = x->val.dim(0), S = x->val.dim(1), C = x->val.dim(2);
  check(r->val.dim(0) == S && r->val.dim(1) == C, Errc::ShapeMismatch, "add_rows row shape");
  Tensor out(x->val.shape());
  const double *px = x->val.data(), *pr = r->val.data();
  double* po = out.data();
  for (long b = 0; b < B; ++b) {
    const double* xb = px + b * (long)S * C;
    double* ob = po + b * (long)S * C;
    for (long i = 0; i < (long)S * C; ++i) ob[i] = xb[i] + pr[i];
  }
  return make_node(std::move(out), {x, r}, [B, S, C](Node& nd) {
    const double* g = nd.grad.data();
    if (nd.parents[0]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[0]).data();
      const long n = nd.grad.numel();
      for (long i = 0; i < n; ++i) pg[i] += g[i];
    }
    if (nd.parents[1]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[1]).data();
      for (long b = 0; b < B; ++b)
        for (long i = 0; i < (long)S * C; ++i) pg[i] += g[b * (long)S * C + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var* b) {
  check(w->val.ndim() == 2, Errc::ShapeMismatch, "linear weight must be 2d");
  const int K = w->val.dim(0), N = w->val.dim(1);
  check(x->val.shape().back() == K, Errc::ShapeMismatch,
        "linear: input " + shape_str(x->val.shape()) + " vs weight " + shape_str(w->val.shape()));
  if (b) check((*b)->val.ndim() == 1 && (*b)->val.dim(0) == N, Errc::ShapeMismatch, "linear bias");

  std::vector<int> out_shape = x->val.shape();
  out_shape.back() = N;
  Tensor out(out_shape);
  const long M = rows_of(x->val);
  const double* px = x->val.data();
  const double* pw = w->val.data();
  const double* pb = b ? (*b)->val.data() : nullptr;
  double* po = out.data();
  parallel_for(M, [&](long lo, long hi) {
    for (long m = lo; m < hi; ++m) {
      double* orow = po + m * N;
      if (pb) std::copy(pb, pb + N, orow);
      else std::fill(orow, orow + N, 0.0);
      const double* xrow = px + m * K;
      for (int k = 0; k < K; ++k) {
        const double a = xrow[k];
        if (a == 0.0) continue;
        const double* wrow = pw + (long)k * N;
        for (int n = 0; n < N; ++n) orow[n] += a * wrow[n];
      }
    }
  }, 16);

  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(*b);
  return make_node(std::move(out), std::move(parents), [K, N, M](Node& nd) {
    const double* g = nd.grad.data();
    const Var& x = nd.parents[0];
    const Var& w = nd.parents[1];
    if (x->needs_grad) {
      double* pg = grad_buffer(*x).data();
      const double* pw = w->val.data();
      parallel_for(M, [&](long lo, long hi) {
        for (long m = lo; m < hi; ++m) {
          const double* grow = g + m * N;
          double* xrow = pg + m * K;
          for (int k = 0; k < K; ++k) {
            const double* wrow = pw + (long)k * N;
            double acc = 0.0;
            for (int n = 0; n < N; ++n) acc += grow[n] * wrow[n];
            xrow[k] += acc;
          }
        }
      }, 16);
    }
    if (w->needs_grad) {
      double* pg = grad_buffer(*w).data();
      const double* px = x->val.data();
      parallel_for(K, [&](long lo, long hi) {
        for (long k = lo; k < hi; ++k) {
          double* wrow = pg + k * N;
          for (long m = 0; m < M; ++m) {
            const double a = px[m * K + k];
            if (a == 0.0) continue;
            const double* grow = g + m * N;
            for (int n = 0; n < N; ++n) wrow[n] += a * grow[n];
          }
        }
      }, 4);
    }
    if (nd.parents.size() > 2 && nd.parents[2]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[2]).data();
      for (long m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) pg[n] += g[m * N + n];
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax / attention
// ---------------------------------------------------------------------------

Var softmax_lastdim(const Var& x) {
  const int C = x->val.shape().back();
  const long rows = rows_of(x->val);
  Tensor out(x->val.shape());
  const double* px = x->val.data();
  double* po = out.data();
  parallel_for(rows, [&](long lo, long hi) {
    for (long r = lo; r < hi; ++r) {
      const double* xr = px + r * C;
      double* orow = po + r * C;
      double mx = xr[0];
      for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
      double s = 0.0;
      for (int c = 0; c < C; ++c) {
        orow[c] = std::exp(xr[c] - mx);
        s += orow[c];
      }
      const double inv = 1.0 / s;
      for (int c = 0; c < C; ++c) orow[c] *= inv;
    }
  }, 64);
  auto saved = std::make_shared<Tensor>(out);  // shares storage
  return make_node(std::move(out), {x}, [C, rows, saved](Node& nd) {
    const double* g = nd.grad.data();
    const double* p = saved->data();
    double* pg = grad_buffer(*nd.parents[0]).data();
    parallel_for(rows, [&](long lo, long hi) {
      for (long r = lo; r < hi; ++r) {
        const double* pr = p + r * C;
        const double* gr = g + r * C;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += pr[c] * gr[c];
        double* xr = pg + r * C;
        for (int c = 0; c < C; ++c) xr[c] += pr[c] * (gr[c] - dot);
      }
    }, 64);
  });
}

Var attention_core(const Var& q, const Var& k, const Var& v, int heads) {
  check(q->val.ndim() == 3 && k->val.ndim() == 3 && v->val.ndim() == 3, Errc::ShapeMismatch,
        "attention_core expects 3d inputs");
  const int B = q->val.dim(0), S = q->val.dim(1), C = q->val.dim(2);
  const int Bk = k->val.dim(0), T = k->val.dim(1);
  check(k->val.dim(2) == C && v->val.dim(2) == C && v->val.dim(0) == Bk && v->val.dim(1) == T,
        Errc::ShapeMismatch, "attention_core k/v shape");
  check(Bk == B || Bk == 1, Errc::ShapeMismatch, "attention_core context batch");
  check(C % heads == 0, Errc::HeadMismatch,
        "heads " + std::to_string(heads) + " must divide channels " + std::to_string(C));
  const int D = C / heads;
  const double scl = 1.0 / std::sqrt((double)D);

  Tensor out({B, S, C});
  const double* pq = q->val.data();
  const double* pk = k->val.data();
  const double* pv = v->val.data();
  double* po = out.data();

  const bool training = q->needs_grad || k->needs_grad || v->needs_grad;
  std::shared_ptr<Tensor> probs;  // [B, heads, S, T], only when training
  if (training) probs = std::make_shared<Tensor>(std::vector<int>{B, heads, S, T});
  double* pp = training ? probs->data() : nullptr;

  parallel_for((long)B * heads, [&](long lo, long hi) {
    std::vector<double> row(T);
    for (long bh = lo; bh < hi; ++bh) {
      const long b = bh / heads;
      const int h = (int)(bh % heads);
      const long kb = (Bk == 1) ? 0 : b;
      const double* qb = pq + (b * S) * (long)C + h * D;
      const double* kb_p = pk + (kb * T) * (long)C + h * D;
      const double* vb = pv + (kb * T) * (long)C + h * D;
      double* ob = po + (b * S) * (long)C + h * D;
      double* prow_base = training ? pp + ((b * heads + h) * (long)S * T) : nullptr;
      for (int s = 0; s < S; ++s) {
        const double* qs = qb + (long)s * C;
        double mx = -1e300;
        for (int t = 0; t < T; ++t) {
          double acc = 0.0;
          const double* kt = kb_p + (long)t * C;
          for (int d = 0; d < D; ++d) acc += qs[d] * kt[d];
          row[t] = acc * scl;
          mx = std::max(mx, row[t]);
        }
        double sum = 0.0;
        for (int t = 0; t < T; ++t) {
          row[t] = std::exp(row[t] - mx);
          sum += row[t];
        }
        const double inv = 1.0 / sum;
        double* os = ob + (long)s * C;
        std::fill(os, os + D, 0.0);
        for (int t = 0; t < T; ++t) {
          const double p = row[t] * inv;
          if (training) prow_base[(long)s * T + t] = p;
          const double* vt = vb + (long)t * C;
          for (int d = 0; d < D; ++d) os[d] += p * vt[d];
        }
      }
    }
  }, 1);

  return make_node(std::move(out), {q, k, v},
                   [B, S, C, Bk, T, heads, D, scl, probs](Node& nd) {
    const double* g = nd.grad.data();
    const double* pq = nd.parents[0]->val.data();
    const double* pk = nd.parents[1]->val.data();
    const double* pv = nd.parents[2]->val.data();
    const double* pp = probs->data();
    const bool qg = nd.parents[0]->needs_grad;
    const bool kg = nd.parents[1]->needs_grad;
    const bool vg = nd.parents[2]->needs_grad;
    double* dq = qg ? grad_buffer(*nd.parents[0]).data() : nullptr;
    double* dk = kg ? grad_buffer(*nd.parents[1]).data() : nullptr;
    double* dv = vg ? grad_buffer(*nd.parents[2]).data() : nullptr;
    // When the context is broadcast (Bk == 1), different b accumulate into the
    // same dk/dv rows; parallelize over heads only so writes stay disjoint.
    const bool broadcast = (Bk == 1) && B > 1;
    const long outer = broadcast ? heads : (long)B * heads;
    parallel_for(outer, [&](long lo, long hi) {
      std::vector<double> dp(T), ds(T);
      for (long u = lo; u < hi; ++u) {
        const long b_begin = broadcast ? 0 : u / heads;
        const long b_end = broadcast ? B : u / heads + 1;
        const int h = (int)(broadcast ? u : u % heads);
        for (long b = b_begin; b < b_end; ++b) {
          const long kb = (Bk == 1) ? 0 : b;
          const double* qb = pq + (b * S) * (long)C + h * D;
          const double* kbp = pk + (kb * T) * (long)C + h * D;
          const double* vb = pv + (kb * T) * (long)C + h * D;
          const double* gb = g + (b * S) * (long)C + h * D;
          const double* prow_base = pp + ((b * heads + h) * (long)S * T);
          for (int s = 0; s < S; ++s) {
            const double* gs = gb + (long)s * C;
            const double* prow = prow_base + (long)s * T;
            // dV += p^T dO ; dp = dO V^T
            double pdot = 0.0;
            for (int t = 0; t < T; ++t) {
              const double* vt = vb + (long)t * C;
              double acc = 0.0;
              for (int d = 0; d < D; ++d) acc += gs[d] * vt[d];
              dp[t] = acc;
              pdot += acc * prow[t];
            }
            for (int t = 0; t < T; ++t) ds[t] = prow[t] * (dp[t] - pdot) * scl;
            if (vg) {
              for (int t = 0; t < T; ++t) {
                const double p = prow[t];
                if (p == 0.0) continue;
                double* dvt = dv + (kb * T + t) * (long)C + h * D;
                for (int d = 0; d < D; ++d) dvt[d] += p * gs[d];
              }
            }
            if (qg) {
              double* dqs = dq + (b * S + s) * (long)C + h * D;
              for (int t = 0; t < T; ++t) {
                const double w = ds[t];
                if (w == 0.0) continue;
                const double* kt = kbp + (long)t * C;
                for (int d = 0; d < D; ++d) dqs[d] += w * kt[d];
              }
            }
            if (kg) {
              const double* qs = qb + (long)s * C;
              for (int t = 0; t < T; ++t) {
                const double w = ds[t];
                if (w == 0.0) continue;
                double* dkt = dk + (kb * T + t) * (long)C + h * D;
                for (int d = 0; d < D; ++d) dkt[d] += w * qs[d];
              }
            }
          }
        }
      }
    }, 1);
  });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace {

// Shared normalization kernel: `groups_total` independent groups, each a list
// of strided channel runs. For group norm the group spans H*W rows of Cg
// channels; for layer norm it is one row.
struct NormAux {
  Tensor xhat;
  std::vector<double> inv_std;
};

}  // namespace

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
  check(x->val.ndim() == 4, Errc::ShapeMismatch, "group_norm expects [N,H,W,C]");
  const int N = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  check(C % groups == 0, Errc::ShapeMismatch, "groups must divide channels");
  check(gamma->val.numel() == C && beta->val.numel() == C, Errc::ShapeMismatch, "gn affine dims");
  const int Cg = C / groups;
  const long HW = (long)H * W;

  Tensor out(x->val.shape());
  auto aux = std::make_shared<NormAux>();
  aux->xhat = Tensor(x->val.shape());
  aux->inv_std.resize((size_t)N * groups);
  const double* px = x->val.data();
  const double* pgm = gamma->val.data();
  const double* pbt = beta->val.data();
  double* po = out.data();
  double* ph = aux->xhat.data();

  parallel_for((long)N * groups, [&](long lo, long hi) {
    for (long ng = lo; ng < hi; ++ng) {
      const long n = ng / groups;
      const int g = (int)(ng % groups);
      const long base = n * HW * C + (long)g * Cg;
      double mean = 0.0;
      for (long i = 0; i < HW; ++i) {
        const double* row = px + base + i * C;
        for (int c = 0; c < Cg; ++c) mean += row[c];
      }
      mean /= (double)(HW * Cg);
      double var = 0.0;
      for (long i = 0; i < HW; ++i) {
        const double* row = px + base + i * C;
        for (int c = 0; c < Cg; ++c) {
          const double d = row[c] - mean;
          var += d * d;
        }
      }
      var /= (double)(HW * Cg);
      const double inv = 1.0 / std::sqrt(var + eps);
      aux->inv_std[ng] = inv;
      for (long i = 0; i < HW; ++i) {
        const double* row = px + base + i * C;
        double* hrow = ph + base + i * C;
        double* orow = po + base + i * C;
        for (int c = 0; c < Cg; ++c) {
          const double xh = (row[c] - mean) * inv;
          hrow[c] = xh;
          orow[c] = pgm[g * Cg + c] * xh + pbt[g * Cg + c];
        }
      }
    }
  }, 1);

  return make_node(std::move(out), {x, gamma, beta}, [N, H, W, C, groups, Cg, aux](Node& nd) {
    const long HW = (long)H * W;
    const double* g = nd.grad.data();
    const double* ph = aux->xhat.data();
    const double* pgm = nd.parents[1]->val.data();
    const long M = HW * Cg;
    if (nd.parents[0]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[0]).data();
      parallel_for((long)N * groups, [&](long lo, long hi) {
        for (long ng = lo; ng < hi; ++ng) {
          const long n = ng / groups;
          const int gr = (int)(ng % groups);
          const long base = n * HW * C + (long)gr * Cg;
          const double inv = aux->inv_std[ng];
          double sum_gy = 0.0, sum_gyx = 0.0;
          for (long i = 0; i < HW; ++i) {
            const double* grow = g + base + i * C;
            const double* hrow = ph + base + i * C;
            for (int c = 0; c < Cg; ++c) {
              const double gy = grow[c] * pgm[gr * Cg + c];
              sum_gy += gy;
              sum_gyx += gy * hrow[c];
            }
          }
          const double mg = sum_gy / (double)M;
          const double mgx = sum_gyx / (double)M;
          for (long i = 0; i < HW; ++i) {
            const double* grow = g + base + i * C;
            const double* hrow = ph + base + i * C;
            double* xrow = pg + base + i * C;
            for (int c = 0; c < Cg; ++c) {
              const double gy = grow[c] * pgm[gr * Cg + c];
              xrow[c] += (gy - mg - hrow[c] * mgx) * inv;
            }
          }
        }
      }, 1);
    }
    if (nd.parents[1]->needs_grad || nd.parents[2]->needs_grad) {
      double* dgm = nd.parents[1]->needs_grad ? grad_buffer(*nd.parents[1]).data() : nullptr;
      double* dbt = nd.parents[2]->needs_grad ? grad_buffer(*nd.parents[2]).data() : nullptr;
      for (long n = 0; n < N; ++n) {
        const long base = n * HW * C;
        for (long i = 0; i < HW; ++i) {
          const double* grow = g + base + i * C;
          const double* hrow = ph + base + i * C;
          for (int c = 0; c < C; ++c) {
            if (dgm) dgm[c] += grow[c] * hrow[c];
            if (dbt) dbt[c] += grow[c];
          }
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int C = x->val.shape().back();
  check(gamma->val.numel() == C && beta->val.numel() == C, Errc::ShapeMismatch, "ln affine dims");
  const long rows = rows_of(x->val);
  Tensor out(x->val.shape());
  auto aux = std::make_shared<NormAux>();
  aux->xhat = Tensor(x->val.shape());
  aux->inv_std.resize(rows);
  const double* px = x->val.data();
  const double* pgm = gamma->val.data();
  const double* pbt = beta->val.data();
  double* po = out.data();
  double* ph = aux->xhat.data();
  parallel_for(rows, [&](long lo, long hi) {
    for (long r = lo; r < hi; ++r) {
      const double* row = px + r * C;
      double mean = 0.0;
      for (int c = 0; c < C; ++c) mean += row[c];
      mean /= C;
      double var = 0.0;
      for (int c = 0; c < C; ++c) {
        const double d = row[c] - mean;
        var += d * d;
      }
      var /= C;
      const double inv = 1.0 / std::sqrt(var + eps);
      aux->inv_std[r] = inv;
      double* hrow = ph + r * C;
      double* orow = po + r * C;
      for (int c = 0; c < C; ++c) {
        hrow[c] = (row[c] - mean) * inv;
        orow[c] = pgm[c] * hrow[c] + pbt[c];
      }
    }
  }, 32);
  return make_node(std::move(out), {x, gamma, beta}, [C, rows, aux](Node& nd) {
    const double* g = nd.grad.data();
    const double* ph = aux->xhat.data();
    const double* pgm = nd.parents[1]->val.data();
    if (nd.parents[0]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[0]).data();
      parallel_for(rows, [&](long lo, long hi) {
        for (long r = lo; r < hi; ++r) {
          const double* grow = g + r * C;
          const double* hrow = ph + r * C;
          double sum_gy = 0.0, sum_gyx = 0.0;
          for (int c = 0; c < C; ++c) {
            const double gy = grow[c] * pgm[c];
            sum_gy += gy;
            sum_gyx += gy * hrow[c];
          }
          const double mg = sum_gy / C, mgx = sum_gyx / C;
          const double inv = aux->inv_std[r];
          double* xrow = pg + r * C;
          for (int c = 0; c < C; ++c) {
            const double gy = grow[c] * pgm[c];
            xrow[c] += (gy - mg - hrow[c] * mgx) * inv;
          }
        }
      }, 32);
    }
    if (nd.parents[1]->needs_grad || nd.parents[2]->needs_grad) {
      double* dgm = nd.parents[1]->needs_grad ? grad_buffer(*nd.parents[1]).data() : nullptr;
      double* dbt = nd.parents[2]->needs_grad ? grad_buffer(*nd.parents[2]).data() : nullptr;
      for (long r = 0; r < rows; ++r) {
        const double* grow = g + r * C;
        const double* hrow = ph + r * C;
        for (int c = 0; c < C; ++c) {
          if (dgm) dgm[c] += grow[c] * hrow[c];
          if (dbt) dbt[c] += grow[c];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution & resampling
// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var* b, int stride, int pad) {
  check(x->val.ndim() == 4 && w->val.ndim() == 4, Errc::ShapeMismatch, "conv2d dims");
  const int N = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), Ci = x->val.dim(3);
  const int KH = w->val.dim(0), KW = w->val.dim(1), Co = w->val.dim(3);
  check(w->val.dim(2) == Ci, Errc::ShapeMismatch, "conv2d channel mismatch");
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  check(OH > 0 && OW > 0, Errc::ShapeMismatch, "conv2d output empty");
  if (b) check((*b)->val.numel() == Co, Errc::ShapeMismatch, "conv2d bias");

  Tensor out({N, OH, OW, Co});
  const double* px = x->val.data();
  const double* pw = w->val.data();
  const double* pb = b ? (*b)->val.data() : nullptr;
  double* po = out.data();

  parallel_for((long)N * OH, [&](long lo, long hi) {
    for (long noy = lo; noy < hi; ++noy) {
      const long n = noy / OH;
      const int oy = (int)(noy % OH);
      for (int ox = 0; ox < OW; ++ox) {
        double* acc = po + ((n * OH + oy) * (long)OW + ox) * Co;
        if (pb) std::copy(pb, pb + Co, acc);
        else std::fill(acc, acc + Co, 0.0);
        for (int ky = 0; ky < KH; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < KW; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            const double* xp = px + ((n * H + iy) * (long)W + ix) * Ci;
            const double* wp = pw + ((long)ky * KW + kx) * Ci * Co;
            for (int ci = 0; ci < Ci; ++ci) {
              const double a = xp[ci];
              if (a == 0.0) continue;
              const double* wrow = wp + (long)ci * Co;
              for (int co = 0; co < Co; ++co) acc[co] += a * wrow[co];
            }
          }
        }
      }
    }
  }, 1);

  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(*b);
  return make_node(std::move(out), std::move(parents),
                   [N, H, W, Ci, KH, KW, Co, OH, OW, stride, pad](Node& nd) {
    const double* g = nd.grad.data();
    const Var& x = nd.parents[0];
    const Var& w = nd.parents[1];
    if (x->needs_grad) {
      double* pg = grad_buffer(*x).data();
      const double* pw = w->val.data();
      parallel_for((long)N * H, [&](long lo, long hi) {
        for (long niy = lo; niy < hi; ++niy) {
          const long n = niy / H;
          const int iy = (int)(niy % H);
          for (int ix = 0; ix < W; ++ix) {
            double* xrow = pg + ((n * H + iy) * (long)W + ix) * Ci;
            for (int ky = 0; ky < KH; ++ky) {
              const int num_y = iy + pad - ky;
              if (num_y < 0 || num_y % stride != 0) continue;
              const int oy = num_y / stride;
              if (oy >= OH) continue;
              for (int kx = 0; kx < KW; ++kx) {
                const int num_x = ix + pad - kx;
                if (num_x < 0 || num_x % stride != 0) continue;
                const int ox = num_x / stride;
                if (ox >= OW) continue;
                const double* grow = g + ((n * OH + oy) * (long)OW + ox) * Co;
                const double* wp = pw + ((long)ky * KW + kx) * Ci * Co;
                for (int ci = 0; ci < Ci; ++ci) {
                  const double* wrow = wp + (long)ci * Co;
                  double acc = 0.0;
                  for (int co = 0; co < Co; ++co) acc += grow[co] * wrow[co];
                  xrow[ci] += acc;
                }
              }
            }
          }
        }
      }, 1);
    }
    if (w->needs_grad) {
      double* pg = grad_buffer(*w).data();
      const double* px = x->val.data();
      parallel_for((long)KH * KW, [&](long lo, long hi) {
        for (long kk = lo; kk < hi; ++kk) {
          const int ky = (int)(kk / KW);
          const int kx = (int)(kk % KW);
          double* wp = pg + kk * Ci * Co;
          for (long n = 0; n < N; ++n) {
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              for (int ox = 0; ox < OW; ++ox) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= W) continue;
                const double* xp = px + ((n * H + iy) * (long)W + ix) * Ci;
                const double* grow = g + ((n * OH + oy) * (long)OW + ox) * Co;
                for (int ci = 0; ci < Ci; ++ci) {
                  const double a = xp[ci];
                  if (a == 0.0) continue;
                  double* wrow = wp + (long)ci * Co;
                  for (int co = 0; co < Co; ++co) wrow[co] += a * grow[co];
                }
              }
            }
          }
        }
      }, 1);
    }
    if (nd.parents.size() > 2 && nd.parents[2]->needs_grad) {
      double* pg = grad_buffer(*nd.parents[2]).data();
      const long rows = (long)N * OH * OW;
      for (long r = 0; r < rows; ++r)
        for (int co = 0; co < Co; ++co) pg[co] += g[r * Co + co];
    }
  });
}

Var avg_pool2(const Var& x) {
  check(x->val.ndim() == 4, Errc::ShapeMismatch, "avg_pool2 dims");
  const int N = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  check(H % 2 == 0 && W % 2 == 0, Errc::OddSpatialDims, "avg_pool2 needs even spatial dims");
  Tensor out({N, H / 2, W / 2, C});
  const double* px = x->val.data();
  double* po = out.data();
  const int OH = H / 2, OW = W / 2;
  for (long n = 0; n < N; ++n) {
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        double* orow = po + ((n * OH + oy) * (long)OW + ox) * C;
        const double* r0 = px + ((n * H + 2 * oy) * (long)W + 2 * ox) * C;
        const double* r1 = px + ((n * H + 2 * oy + 1) * (long)W + 2 * ox) * C;
        for (int c = 0; c < C; ++c) orow[c] = 0.25 * (r0[c] + r0[C + c] + r1[c] + r1[C + c]);
      }
    }
  }
  return make_node(std::move(out), {x}, [N, H, W, C](Node& nd) {
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = nd.grad.data();
    const int OH = H / 2, OW = W / 2;
    for (long n = 0; n < N; ++n)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          const double* grow = g + ((n * OH + oy) * (long)OW + ox) * C;
          double* r0 = pg + ((n * H + 2 * oy) * (long)W + 2 * ox) * C;
          double* r1 = pg + ((n * H + 2 * oy + 1) * (long)W + 2 * ox) * C;
          for (int c = 0; c < C; ++c) {
            const double v = 0.25 * grow[c];
            r0[c] += v;
            r0[C + c] += v;
            r1[c] += v;
            r1[C + c] += v;
          }
        }
  });
}

Var mean_hw(const Var& x) {
  check(x->val.ndim() == 4, Errc::ShapeMismatch, "mean_hw dims");
  const int N = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  Tensor out({N, C});
  const double* px = x->val.data();
  double* po = out.data();
  const double inv = 1.0 / ((double)H * W);
  for (long n = 0; n < N; ++n) {
    double* orow = po + n * C;
    std::fill(orow, orow + C, 0.0);
    const double* base = px + n * (long)H * W * C;
    for (long i = 0; i < (long)H * W; ++i) {
      const double* row = base + i * C;
      for (int c = 0; c < C; ++c) orow[c] += row[c];
    }
    for (int c = 0; c < C; ++c) orow[c] *= inv;
  }
  return make_node(std::move(out), {x}, [N, H, W, C](Node& nd) {
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = nd.grad.data();
    const double inv = 1.0 / ((double)H * W);
    for (long n = 0; n < N; ++n) {
      const double* grow = g + n * C;
      double* base = pg + n * (long)H * W * C;
      for (long i = 0; i < (long)H * W; ++i) {
        double* row = base + i * C;
        for (int c = 0; c < C; ++c) row[c] += grow[c] * inv;
      }
    }
  });
}

Var max_hw(const Var& x) {
  check(x->val.ndim() == 4, Errc::ShapeMismatch, "max_hw dims");
  const int N = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  Tensor out({N, C});
  auto argmax = std::make_shared<std::vector<long>>((size_t)N * C);
  const double* px = x->val.data();
  double* po = out.data();
  for (long n = 0; n < N; ++n) {
    double* orow = po + n * C;
    long* arow = argmax->data() + n * C;
    const double* base = px + n * (long)H * W * C;
    for (int c = 0; c < C; ++c) {
      orow[c] = base[c];
      arow[c] = 0;
    }
    for (long i = 1; i < (long)H * W; ++i) {
      const double* row = base + i * C;
      for (int c = 0; c < C; ++c) {
        if (row[c] > orow[c]) {
          orow[c] = row[c];
          arow[c] = i;
        }
      }
    }
  }
  return make_node(std::move(out), {x}, [N, H, W, C, argmax](Node& nd) {
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = nd.grad.data();
    for (long n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const long i = (*argmax)[(size_t)n * C + c];
        pg[n * (long)H * W * C + i * C + c] += g[n * C + c];
      }
    }
  });
}

Var upsample_nearest2(const Var& x) {
  check(x->val.ndim() == 4, Errc::ShapeMismatch, "upsample dims");
  const int N = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2), C = x->val.dim(3);
  Tensor out({N, H * 2, W * 2, C});
  const double* px = x->val.data();
  double* po = out.data();
  for (long n = 0; n < N; ++n)
    for (int y = 0; y < 2 * H; ++y)
      for (int x2 = 0; x2 < 2 * W; ++x2) {
        const double* src = px + ((n * H + y / 2) * (long)W + x2 / 2) * C;
        double* dst = po + ((n * 2 * H + y) * (long)(2 * W) + x2) * C;
        std::copy(src, src + C, dst);
      }
  return make_node(std::move(out), {x}, [N, H, W, C](Node& nd) {
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = nd.grad.data();
    for (long n = 0; n < N; ++n)
      for (int y = 0; y < 2 * H; ++y)
        for (int x2 = 0; x2 < 2 * W; ++x2) {
          const double* src = g + ((n * 2 * H + y) * (long)(2 * W) + x2) * C;
          double* dst = pg + ((n * H + y / 2) * (long)W + x2 / 2) * C;
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
  });
}

// ---------------------------------------------------------------------------
// Pixel shuffle
// ---------------------------------------------------------------------------

Tensor pixel_unshuffle_val(const Tensor& x, int r) {
  check(x.ndim() == 4, Errc::ShapeMismatch, "pixel_unshuffle expects [N,H,W,C]");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  check(r >= 1, Errc::InvalidArgument, "unshuffle ratio must be >= 1");
  check(H % r == 0 && W % r == 0, Errc::IndivisibleDims,
        "unshuffle ratio " + std::to_string(r) + " must divide " + std::to_string(H) + "x" +
            std::to_string(W));
  const int OH = H / r, OW = W / r, OC = C * r * r;
  Tensor out({N, OH, OW, OC});
  const double* px = x.data();
  double* po = out.data();
  for (long n = 0; n < N; ++n)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        double* orow = po + ((n * OH + oy) * (long)OW + ox) * OC;
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx) {
            const double* xrow = px + ((n * H + oy * r + dy) * (long)W + ox * r + dx) * C;
            for (int c = 0; c < C; ++c) orow[c * r * r + dy * r + dx] = xrow[c];
          }
      }
  return out;
}

Tensor pixel_shuffle_val(const Tensor& x, int r) {
  check(x.ndim() == 4, Errc::ShapeMismatch, "pixel_shuffle expects [N,H,W,C]");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  check(r >= 1 && C % (r * r) == 0, Errc::IndivisibleDims, "shuffle channel count");
  const int OC = C / (r * r), OH = H * r, OW = W * r;
  Tensor out({N, OH, OW, OC});
  const double* px = x.data();
  double* po = out.data();
  for (long n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int x2 = 0; x2 < W; ++x2) {
        const double* xrow = px + ((n * H + y) * (long)W + x2) * C;
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx) {
            double* orow = po + ((n * OH + y * r + dy) * (long)OW + x2 * r + dx) * OC;
            for (int c = 0; c < OC; ++c) orow[c] = xrow[c * r * r + dy * r + dx];
          }
      }
  return out;
}

Var pixel_unshuffle(const Var& x, int r) {
  Tensor out = pixel_unshuffle_val(x->val, r);
  return make_node(std::move(out), {x}, [r](Node& nd) {
    // The map is a bijection; the gradient flows through the inverse map.
    Tensor gin = pixel_shuffle_val(nd.grad, r);
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = gin.data();
    const long n = gin.numel();
    for (long i = 0; i < n; ++i) pg[i] += g[i];
  });
}

Var pixel_shuffle(const Var& x, int r) {
  Tensor out = pixel_shuffle_val(x->val, r);
  return make_node(std::move(out), {x}, [r](Node& nd) {
    Tensor gin = pixel_unshuffle_val(nd.grad, r);
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = gin.data();
    const long n = gin.numel();
    for (long i = 0; i < n; ++i) pg[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Embedding / reductions
// ---------------------------------------------------------------------------

Var embedding(const Var& table, const std::vector<int>& ids) {
  check(table->val.ndim() == 2, Errc::ShapeMismatch, "embedding table must be 2d");
  const int V = table->val.dim(0), D = table->val.dim(1);
  for (int id : ids) check(id >= 0 && id < V, Errc::InvalidArgument, "token id out of range");
  Tensor out({(int)ids.size(), D});
  const double* pt = table->val.data();
  double* po = out.data();
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(pt + (long)ids[i] * D, pt + (long)(ids[i] + 1) * D, po + i * D);
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return make_node(std::move(out), {table}, [D, ids_copy](Node& nd) {
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* g = nd.grad.data();
    for (size_t i = 0; i < ids_copy->size(); ++i) {
      double* row = pg + (long)(*ids_copy)[i] * D;
      for (int d = 0; d < D; ++d) row[d] += g[i * D + d];
    }
  });
}

Var mean_all(const Var& x) {
  const long n = x->val.numel();
  double s = 0.0;
  const double* px = x->val.data();
  for (long i = 0; i < n; ++i) s += px[i];
  Tensor out = Tensor::from({1}, {s / (double)n});
  return make_node(std::move(out), {x}, [n](Node& nd) {
    const double g = nd.grad[0] / (double)n;
    double* pg = grad_buffer(*nd.parents[0]).data();
    for (long i = 0; i < n; ++i) pg[i] += g;
  });
}

Var mse(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return mean_all(mul(d, d));
}

Var l2_norm(const Var& x) {
  const long n = x->val.numel();
  const double* px = x->val.data();
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += px[i] * px[i];
  const double norm = std::sqrt(s);
  Tensor out = Tensor::from({1}, {norm});
  return make_node(std::move(out), {x}, [n, norm](Node& nd) {
    const double g = nd.grad[0];
    const double* px = nd.parents[0]->val.data();
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double inv = norm > 0 ? 1.0 / norm : 0.0;
    for (long i = 0; i < n; ++i) pg[i] += g * px[i] * inv;
  });
}

Var cross_entropy(const Var& logits, const std::vector<int>& targets) {
  check(logits->val.ndim() == 2, Errc::ShapeMismatch, "cross_entropy expects [B, C]");
  const int B = logits->val.dim(0), C = logits->val.dim(1);
  check((int)targets.size() == B, Errc::ShapeMismatch, "cross_entropy target count");
  for (int t : targets) check(t >= 0 && t < C, Errc::InvalidArgument, "target out of range");
  const double* pl = logits->val.data();
  auto probs = std::make_shared<Tensor>(std::vector<int>{B, C});
  double* pp = probs->data();
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const double* row = pl + (long)b * C;
    double mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
    const double lse = mx + std::log(sum);
    loss += lse - row[targets[b]];
    for (int c = 0; c < C; ++c) pp[(long)b * C + c] = std::exp(row[c] - lse);
  }
  Tensor out = Tensor::from({1}, {loss / B});
  auto tg = std::make_shared<std::vector<int>>(targets);
  return make_node(std::move(out), {logits}, [B, C, probs, tg](Node& nd) {
    const double g = nd.grad[0] / B;
    double* pg = grad_buffer(*nd.parents[0]).data();
    const double* pp = probs->data();
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const double onehot = c == (*tg)[b] ? 1.0 : 0.0;
        pg[(long)b * C + c] += g * (pp[(long)b * C + c] - onehot);
      }
    }
  });
}

Tensor sinusoidal_positions(int length, int dim) {
  check(dim % 2 == 0, Errc::OddDim, "positional embedding dim must be even");
  check(length >= 1, Errc::NonPositiveDims, "positional embedding length");
  Tensor out({length, dim});
  double* po = out.data();
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / (double)dim);
      po[(long)t * dim + 2 * i] = std::sin(t * freq);
      po[(long)t * dim + 2 * i + 1] = std::cos(t * freq);
    }
  }
  return out;
}

}  // namespace onlyflow::nn
