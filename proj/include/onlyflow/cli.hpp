// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "onlyflow/evaluate.hpp"
#include "onlyflow/plot.hpp"

namespace onlyflow::cli {

// Every run is file-driven and reproducible: identical (config, seed, inputs)
// produce identical output bytes. Exit codes: 0 success, 1 configuration
// error, 2 missing/unreadable files.
int run_cli(int argc, const char* const* argv);

// JSON document with sections {dataset, estimator, encoder, unet, train,
// sample, eval}; all fields defaulted, unknown keys rejected, cross-module
// constraints validated at load.
struct RunConfig {
  data::GenerationConfig dataset;
  estimator::EstimatorConfig estimator;
  model::MotionEncoderConfig encoder;
  model::UNetConfig unet;
  model::ScheduleParams schedule;
  train::TrainConfig train;
  struct SampleSection {
    model::SamplerKind sampler = model::SamplerKind::Pndm;
    int steps = 50;
    double guidance = 7.5;
    double gamma = 1.0;
  } sample;
  struct EvalSection {
    std::vector<double> gammas = {0.0, 0.25, 0.5, 0.75, 1.0};
    model::SamplerKind sampler = model::SamplerKind::Pndm;
    int steps = 50;
    double guidance = 7.5;
    int holdout = 40;  // trailing manifest clips reserved for evaluation
    evaluate::ProbeConfig probe;
  } eval;
  uint64_t model_seed = 1;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);  // empty path -> defaults
nlohmann::json default_run_config_json();

}  // namespace onlyflow::cli
