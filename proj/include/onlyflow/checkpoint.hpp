// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: one file holding a JSON config header plus named raw
// little-endian float32 arrays with shape metadata.
//
//   bytes 0-3   magic "OFCK"
//   bytes 4-7   uint32 container version (1)
//   bytes 8-15  uint64 header length in bytes
//   ...         header JSON (stage, model configs, array index)
//   ...         float32 payload, arrays back to back in index order
//
// Values are trained in double precision and quantized to float32 on save;
// loading a file and saving it again reproduces the bytes exactly.

#pragma once

#include <json.hpp>

#include "onlyflow/diffusion.hpp"

namespace onlyflow::model {

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);
void to_json(nlohmann::json& j, const MotionEncoderConfig& c);
void from_json(const nlohmann::json& j, MotionEncoderConfig& c);
void to_json(nlohmann::json& j, const ScheduleParams& c);
void from_json(const nlohmann::json& j, ScheduleParams& c);

void save_checkpoint(const VideoModel& model, const std::string& path);
VideoModel load_checkpoint(const std::string& path);

}  // namespace onlyflow::model
