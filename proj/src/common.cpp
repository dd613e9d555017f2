// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/common.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace onlyflow {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MagicMismatch: return "MagicMismatch";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::NonPositiveDims: return "NonPositiveDims";
    case Errc::IoFailure: return "IoFailure";
    case Errc::BadDims: return "BadDims";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::ShapeOutOfBounds: return "ShapeOutOfBounds";
    case Errc::UnknownWord: return "UnknownWord";
    case Errc::TooFewFrames: return "TooFewFrames";
    case Errc::IndivisibleDims: return "IndivisibleDims";
    case Errc::OddDim: return "OddDim";
    case Errc::HeadMismatch: return "HeadMismatch";
    case Errc::OddSpatialDims: return "OddSpatialDims";
    case Errc::BadRange: return "BadRange";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::StepsExceedT: return "StepsExceedT";
    case Errc::DatasetEmpty: return "DatasetEmpty";
    case Errc::MissingBackbone: return "MissingBackbone";
    case Errc::EmptyEvalSet: return "EmptyEvalSet";
    case Errc::ProbeUnderTrained: return "ProbeUnderTrained";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t hash_combine(std::initializer_list<uint64_t> words) {
  uint64_t s = 0x243f6a8885a308d3ULL;
  for (uint64_t w : words) {
    s ^= w + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    splitmix64(s);
  }
  return splitmix64(s);
}

uint64_t hash_str(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// xoshiro256** seeded via splitmix64.
Rng::Rng(uint64_t seed) : base_seed_(seed) {
  uint64_t sm = seed;
  for (auto& w : s_) w = splitmix64(sm);
}

static inline uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

uint64_t Rng::next_u64() {
  const uint64_t result = rotl64(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl64(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint64_t Rng::uniform_int(uint64_t n) {
  // Rejection sampling for an unbiased draw.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

Rng Rng::child(uint64_t tag) const { return Rng(hash_combine({base_seed_, tag})); }

// ---------------------------------------------------------------------------
// Thread pool
// ---------------------------------------------------------------------------

namespace {

class Pool {
 public:
  explicit Pool(int n) : n_workers_(n) {
    for (int i = 0; i < n; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return n_workers_; }

  void run(long n_chunks, const std::function<void(long)>& chunk_fn) {
    uint64_t gen;
    {
      std::unique_lock<std::mutex> lk(mu_);
      job_ = &chunk_fn;
      next_chunk_ = 0;
      n_chunks_ = n_chunks;
      pending_ = n_chunks;
      gen = ++generation_;
      cv_.notify_all();
    }
    drain(gen);  // the caller participates too
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_.load() == 0; });
    job_ = nullptr;
  }

 private:
  // Chunk acquisition is mutex-protected so a straggler from a previous job
  // can never pick up indices of the next one. Chunks are coarse; the lock is
  // not on the hot path.
  void drain(uint64_t gen) {
    while (true) {
      const std::function<void(long)>* job;
      long c;
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (generation_ != gen || next_chunk_ >= n_chunks_) return;
        c = next_chunk_++;
        job = job_;
      }
      (*job)(c);
      if (pending_.fetch_sub(1) == 1) {
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    uint64_t seen = 0;
    while (true) {
      uint64_t gen;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = gen = generation_;
      }
      drain(gen);
    }
  }

  int n_workers_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(long)>* job_ = nullptr;
  long next_chunk_ = 0;
  long n_chunks_ = 0;
  std::atomic<long> pending_{0};
  uint64_t generation_ = 0;
  bool stop_ = false;
};

thread_local bool t_in_pool = false;

Pool& pool() {
  static Pool p(max_threads() - 1);  // caller thread participates
  return p;
}

}  // namespace

int max_threads() {
  static int n = [] {
    if (const char* env = std::getenv("ONLYFLOW_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }();
  return n;
}

void parallel_for(long n, const std::function<void(long, long)>& body, long grain) {
  if (n <= 0) return;
  const int workers = max_threads();
  if (workers <= 1 || t_in_pool || n <= grain) {
    body(0, n);
    return;
  }
  long n_chunks = std::min<long>(workers * 4L, (n + grain - 1) / grain);
  if (n_chunks <= 1) {
    body(0, n);
    return;
  }
  const long chunk = (n + n_chunks - 1) / n_chunks;
  std::function<void(long)> chunk_fn = [&](long c) {
    t_in_pool = true;
    const long lo = c * chunk;
    const long hi = std::min(n, lo + chunk);
    if (lo < hi) body(lo, hi);
    t_in_pool = false;
  };
  pool().run(n_chunks, chunk_fn);
}

}  // namespace onlyflow
