// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace onlyflow::model {

using nlohmann::json;

void to_json(json& j, const UNetConfig& c) {
  j = json{{"latent_factor", c.latent_factor},
           {"stage_channels", c.stage_channels},
           {"heads", c.heads},
           {"frames", c.frames},
           {"variant", variant_name(c.variant)},
           {"inject_up_path", c.inject_up_path},
           {"vocab", c.vocab},
           {"text_dim", c.text_dim},
           {"max_tokens", c.max_tokens}};
}

void from_json(const json& j, UNetConfig& c) {
  c.latent_factor = j.value("latent_factor", c.latent_factor);
  c.stage_channels = j.value("stage_channels", c.stage_channels);
  c.heads = j.value("heads", c.heads);
  c.frames = j.value("frames", c.frames);
  c.variant = variant_from_name(j.value("variant", std::string(variant_name(c.variant))));
  c.inject_up_path = j.value("inject_up_path", c.inject_up_path);
  c.vocab = j.value("vocab", c.vocab);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
}

void to_json(json& j, const MotionEncoderConfig& c) {
  j = json{{"unshuffle_ratio", c.unshuffle_ratio},
           {"stage_channels", c.stage_channels},
           {"heads", c.heads},
           {"frames", c.frames},
           {"blocks_per_stage", c.blocks_per_stage}};
}

void from_json(const json& j, MotionEncoderConfig& c) {
  c.unshuffle_ratio = j.value("unshuffle_ratio", c.unshuffle_ratio);
  c.stage_channels = j.value("stage_channels", c.stage_channels);
  c.heads = j.value("heads", c.heads);
  c.frames = j.value("frames", c.frames);
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
}

void to_json(json& j, const ScheduleParams& c) {
  j = json{{"beta_start", c.beta_start}, {"beta_end", c.beta_end}, {"steps", c.steps}};
}

void from_json(const json& j, ScheduleParams& c) {
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.steps = j.value("steps", c.steps);
}

namespace {

constexpr char kMagic[4] = {'O', 'F', 'C', 'K'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const VideoModel& model, const std::string& path) {
  json header;
  header["format"] = "onlyflow-checkpoint";
  header["stage"] = model.stage;
  header["unet"] = model.ucfg;
  header["encoder"] = model.ecfg;
  header["schedule"] = model.sched;

  json arrays = json::array();
  uint64_t offset = 0;
  model.params.for_each([&](const nn::Parameter& p) {
    arrays.push_back(
        {{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += (uint64_t)p.value.numel();
  });
  header["arrays"] = arrays;

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  check(out.good(), Errc::IoFailure, "cannot open checkpoint for write: " + path);
  out.write(kMagic, 4);
  const uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), (std::streamsize)hs.size());

  std::vector<float> buf;
  model.params.for_each([&](const nn::Parameter& p) {
    buf.resize(p.value.numel());
    const double* d = p.value.data();
    for (long i = 0; i < p.value.numel(); ++i) buf[i] = (float)d[i];
    out.write(reinterpret_cast<const char*>(buf.data()),
              (std::streamsize)(buf.size() * sizeof(float)));
  });
  check(out.good(), Errc::IoFailure, "short write: " + path);
}

VideoModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), Errc::IoFailure, "cannot open checkpoint: " + path);
  char magic[4];
  uint32_t version = 0;
  uint64_t hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&hlen), 8);
  check(in.good() && std::memcmp(magic, kMagic, 4) == 0, Errc::MagicMismatch,
        "not a checkpoint file: " + path);
  check(version == kVersion, Errc::ConfigMismatch, "unsupported checkpoint version");
  std::string hs(hlen, '\0');
  in.read(hs.data(), (std::streamsize)hlen);
  check(in.good(), Errc::TruncatedFile, "checkpoint header truncated: " + path);
  const json header = json::parse(hs);

  const std::string stage = header.at("stage").get<std::string>();
  UNetConfig ucfg = header.at("unet").get<UNetConfig>();
  MotionEncoderConfig ecfg = header.at("encoder").get<MotionEncoderConfig>();
  ScheduleParams sched = header.at("schedule").get<ScheduleParams>();

  VideoModel model(ucfg, ecfg, sched, stage == "motion", /*seed=*/0);
  model.stage = stage;

  size_t filled = 0;
  std::vector<float> buf;
  for (const auto& a : header.at("arrays")) {
    const std::string name = a.at("name").get<std::string>();
    const std::vector<int> shape = a.at("shape").get<std::vector<int>>();
    nn::Parameter* p = model.params.find(name);
    check(p != nullptr, Errc::ConfigMismatch, "checkpoint has unknown array " + name);
    check(p->value.shape() == shape, Errc::ConfigMismatch, "shape mismatch for " + name);
    buf.resize(p->value.numel());
    in.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)(buf.size() * sizeof(float)));
    check(in.good(), Errc::TruncatedFile, "checkpoint payload truncated at " + name);
    double* d = p->value.data();
    for (long i = 0; i < p->value.numel(); ++i) d[i] = (double)buf[i];
    ++filled;
  }
  check(filled == model.params.size(), Errc::ConfigMismatch,
        "checkpoint is missing parameters for this configuration");
  return model;
}

}  // namespace onlyflow::model
