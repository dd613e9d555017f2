// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace onlyflow {

// Every failure mode named by a module contract maps to one of these codes so
// tests can assert on the category instead of parsing messages.
enum class Errc {
  MagicMismatch,
  TruncatedFile,
  NonPositiveDims,
  IoFailure,
  BadDims,
  ShapeMismatch,
  ShapeOutOfBounds,
  UnknownWord,
  TooFewFrames,
  IndivisibleDims,
  OddDim,
  HeadMismatch,
  OddSpatialDims,
  BadRange,
  ConfigMismatch,
  StepsExceedT,
  DatasetEmpty,
  MissingBackbone,
  EmptyEvalSet,
  ProbeUnderTrained,
  TooFewSamples,
  InvalidArgument,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void check(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::normal_distribution is implementation-defined, so the normal sampler is
// spelled out (Box-Muller) to make every artifact byte-reproducible from its
// seed, independent of the standard library.
// ---------------------------------------------------------------------------

uint64_t splitmix64(uint64_t& state);

// Collapses an arbitrary list of 64-bit words into one stream seed. Used to
// derive independent per-clip / per-step / per-sample streams from a master
// seed without correlation between siblings.
uint64_t hash_combine(std::initializer_list<uint64_t> words);
uint64_t hash_str(const std::string& s);

class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n > 0.
  uint64_t uniform_int(uint64_t n);
  // Standard normal via Box-Muller; second value cached.
  double normal();

  Rng child(uint64_t tag) const;

 private:
  uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
  uint64_t base_seed_;
};

// ---------------------------------------------------------------------------
// Thread pool.
//
// parallel_for partitions [0, n) into contiguous chunks; each index is
// processed by a pure function writing disjoint outputs, so results do not
// depend on the number of workers. ONLYFLOW_THREADS caps the pool size.
// Nested calls from worker threads run inline.
// ---------------------------------------------------------------------------

int max_threads();
void parallel_for(long n, const std::function<void(long, long)>& body, long grain = 1);

}  // namespace onlyflow
