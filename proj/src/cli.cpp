// Copyright (c) 2026 the onlyflow authors
// SPDX-License-Identifier: Apache-2.0

#include "onlyflow/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace onlyflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& j, const std::vector<std::string>& allowed,
                  const std::string& where) {
  if (!j.is_object()) return;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      fail(Errc::InvalidArgument, "unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

void parse_dataset(const json& j, data::GenerationConfig& c) {
  require_keys(j,
               {"clips", "frames", "height", "width", "colors", "sizes", "speeds",
                "static_probability", "second_shape_probability", "gradient_probability",
                "camera_probability", "pan_magnitudes", "zoom_magnitudes", "rotate_magnitudes"},
               "dataset");
  c.clips = j.value("clips", c.clips);
  c.frames = j.value("frames", c.frames);
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.colors = j.value("colors", c.colors);
  c.sizes = j.value("sizes", c.sizes);
  c.speeds = j.value("speeds", c.speeds);
  c.static_probability = j.value("static_probability", c.static_probability);
  c.second_shape_probability = j.value("second_shape_probability", c.second_shape_probability);
  c.gradient_probability = j.value("gradient_probability", c.gradient_probability);
  c.camera_probability = j.value("camera_probability", c.camera_probability);
  c.pan_magnitudes = j.value("pan_magnitudes", c.pan_magnitudes);
  c.zoom_magnitudes = j.value("zoom_magnitudes", c.zoom_magnitudes);
  c.rotate_magnitudes = j.value("rotate_magnitudes", c.rotate_magnitudes);
}

void parse_estimator(const json& j, estimator::EstimatorConfig& c) {
  require_keys(j, {"backend", "window", "max_disp"}, "estimator");
  if (j.contains("backend")) {
    c.backend = estimator::backend_from_name(j.at("backend").get<std::string>());
  }
  c.window = j.value("window", c.window);
  c.max_disp = j.value("max_disp", c.max_disp);
  estimator::validate(c);
}

void parse_train(const json& j, train::TrainConfig& c) {
  require_keys(j,
               {"batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                "weight_decay", "grad_clip", "text_dropout", "motion_phrase_dropout",
                "flow_dropout", "gamma_train", "steps", "seed", "checkpoint_every", "loss_norm"},
               "train");
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.text_dropout = j.value("text_dropout", c.text_dropout);
  c.motion_phrase_dropout = j.value("motion_phrase_dropout", c.motion_phrase_dropout);
  c.flow_dropout = j.value("flow_dropout", c.flow_dropout);
  c.gamma_train = j.value("gamma_train", c.gamma_train);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.loss_norm = j.value("loss_norm", c.loss_norm);
  train::validate(c);
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  require_keys(j, {"dataset", "estimator", "encoder", "unet", "train", "sample", "eval",
                   "model_seed"},
               "run config");
  RunConfig cfg;
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
  if (j.contains("estimator")) parse_estimator(j.at("estimator"), cfg.estimator);
  if (j.contains("encoder")) {
    require_keys(j.at("encoder"),
                 {"unshuffle_ratio", "stage_channels", "heads", "frames", "blocks_per_stage"},
                 "encoder");
    from_json(j.at("encoder"), cfg.encoder);
  }
  if (j.contains("unet")) {
    require_keys(j.at("unet"),
                 {"latent_factor", "stage_channels", "heads", "frames", "variant",
                  "inject_up_path", "vocab", "text_dim", "max_tokens", "schedule"},
                 "unet");
    from_json(j.at("unet"), cfg.unet);
    if (j.at("unet").contains("schedule")) {
      require_keys(j.at("unet").at("schedule"), {"beta_start", "beta_end", "steps"},
                   "unet.schedule");
      from_json(j.at("unet").at("schedule"), cfg.schedule);
    }
  }
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("sample")) {
    const json& s = j.at("sample");
    require_keys(s, {"sampler", "steps", "guidance", "gamma"}, "sample");
    if (s.contains("sampler")) {
      cfg.sample.sampler = model::sampler_from_name(s.at("sampler").get<std::string>());
    }
    cfg.sample.steps = s.value("steps", cfg.sample.steps);
    cfg.sample.guidance = s.value("guidance", cfg.sample.guidance);
    cfg.sample.gamma = s.value("gamma", cfg.sample.gamma);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, {"gammas", "sampler", "steps", "guidance", "holdout", "probe"}, "eval");
    cfg.eval.gammas = e.value("gammas", cfg.eval.gammas);
    if (e.contains("sampler")) {
      cfg.eval.sampler = model::sampler_from_name(e.at("sampler").get<std::string>());
    }
    cfg.eval.steps = e.value("steps", cfg.eval.steps);
    cfg.eval.guidance = e.value("guidance", cfg.eval.guidance);
    cfg.eval.holdout = e.value("holdout", cfg.eval.holdout);
    if (e.contains("probe")) {
      const json& p = e.at("probe");
      require_keys(p, {"feature_dim", "steps", "batch", "lr", "seed", "min_real_accuracy"},
                   "eval.probe");
      cfg.eval.probe.feature_dim = p.value("feature_dim", cfg.eval.probe.feature_dim);
      cfg.eval.probe.steps = p.value("steps", cfg.eval.probe.steps);
      cfg.eval.probe.batch = p.value("batch", cfg.eval.probe.batch);
      cfg.eval.probe.lr = p.value("lr", cfg.eval.probe.lr);
      cfg.eval.probe.seed = p.value("seed", cfg.eval.probe.seed);
      cfg.eval.probe.min_real_accuracy =
          p.value("min_real_accuracy", cfg.eval.probe.min_real_accuracy);
    }
  }
  cfg.model_seed = j.value("model_seed", cfg.model_seed);

  // Cross-module constraints.
  model::check_assembly(cfg.unet, cfg.encoder);
  const int r = cfg.unet.latent_factor;
  check(cfg.dataset.height % (r * 8) == 0 && cfg.dataset.width % (r * 8) == 0,
        Errc::IndivisibleDims, "dataset dims must be divisible by latent_factor*8");
  check(cfg.dataset.frames == cfg.unet.frames, Errc::ConfigMismatch,
        "dataset frames must match the model frame count");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return parse_run_config(json::object());
  std::ifstream in(path);
  check(in.good(), Errc::IoFailure, "cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(Errc::InvalidArgument, "config parse error: " + std::string(e.what()));
  }
  return parse_run_config(j);
}

json default_run_config_json() {
  RunConfig c;
  json j;
  j["dataset"] = {{"clips", c.dataset.clips},
                  {"frames", c.dataset.frames},
                  {"height", c.dataset.height},
                  {"width", c.dataset.width},
                  {"colors", c.dataset.colors},
                  {"speeds", c.dataset.speeds},
                  {"static_probability", c.dataset.static_probability},
                  {"second_shape_probability", c.dataset.second_shape_probability},
                  {"gradient_probability", c.dataset.gradient_probability},
                  {"camera_probability", c.dataset.camera_probability},
                  {"pan_magnitudes", c.dataset.pan_magnitudes},
                  {"zoom_magnitudes", c.dataset.zoom_magnitudes},
                  {"rotate_magnitudes", c.dataset.rotate_magnitudes}};
  j["estimator"] = {{"backend", estimator::backend_name(c.estimator.backend)},
                    {"window", c.estimator.window},
                    {"max_disp", c.estimator.max_disp}};
  j["encoder"] = c.encoder;
  j["unet"] = c.unet;
  j["unet"]["schedule"] = c.schedule;
  j["train"] = {{"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"grad_clip", c.train.grad_clip},
                {"text_dropout", c.train.text_dropout},
                {"motion_phrase_dropout", c.train.motion_phrase_dropout},
                {"flow_dropout", c.train.flow_dropout},
                {"gamma_train", c.train.gamma_train},
                {"steps", c.train.steps},
                {"seed", c.train.seed},
                {"loss_norm", c.train.loss_norm}};
  j["sample"] = {{"sampler", model::sampler_name(c.sample.sampler)},
                 {"steps", c.sample.steps},
                 {"guidance", c.sample.guidance},
                 {"gamma", c.sample.gamma}};
  j["eval"] = {{"gammas", c.eval.gammas},
               {"sampler", model::sampler_name(c.eval.sampler)},
               {"steps", c.eval.steps},
               {"guidance", c.eval.guidance},
               {"holdout", c.eval.holdout}};
  j["model_seed"] = c.model_seed;
  return j;
}

namespace {

flow::FlowField load_flow_dir(const std::string& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.path().extension() == ".flo") files.push_back(e.path());
  }
  check(!ec && !files.empty(), Errc::IoFailure, "no .flo files in " + dir);
  std::sort(files.begin(), files.end());
  std::vector<flow::FlowFrame> frames;
  for (const auto& f : files) frames.push_back(flow::read_flo(f.string()));
  const int H = frames[0].height, W = frames[0].width;
  for (const auto& fr : frames) {
    check(fr.height == H && fr.width == W, Errc::ShapeMismatch, "inconsistent .flo sizes");
  }
  flow::FlowField field((int)frames.size() + 1, H, W);
  for (size_t i = 0; i < frames.size(); ++i) flow::set_slice(field, (int)i + 1, frames[i]);
  return field;
}

int cmd_dataset_build(const std::string& config_path, const std::string& out, uint64_t seed) {
  RunConfig cfg = load_run_config(config_path);
  const data::DatasetManifest m = data::build_dataset(cfg.dataset, seed, out);
  std::printf("wrote %zu clips to %s\n", m.clips.size(), out.c_str());
  return 0;
}

int cmd_flow_synth(const std::string& kind, double magnitude, int frames,
                   const std::string& size, const std::string& out) {
  int W = 0, H = 0;
  check(std::sscanf(size.c_str(), "%dx%d", &H, &W) == 2 && H > 0 && W > 0, Errc::BadDims,
        "--size must be HxW");
  flow::CameraMotionSpec spec;
  if (kind == "pan") spec.kind = flow::CameraKind::Pan;
  else if (kind == "zoom") spec.kind = flow::CameraKind::Zoom;
  else if (kind == "rotate") spec.kind = flow::CameraKind::Rotate;
  else fail(Errc::InvalidArgument, "--kind must be pan|zoom|rotate");
  spec.magnitude = magnitude;
  spec.center_x = (W - 1) / 2.0;
  spec.center_y = (H - 1) / 2.0;
  const flow::FlowField field = flow::synth_camera_flow(spec, frames, H, W);
  fs::create_directories(out);
  char buf[32];
  for (int t = 1; t < frames; ++t) {
    std::snprintf(buf, sizeof(buf), "%05d.flo", t);
    flow::write_flo(flow::slice(field, t), (fs::path(out) / buf).string());
  }
  std::printf("wrote %d flow files to %s\n", frames - 1, out.c_str());
  return 0;
}

int cmd_flow_estimate(const std::string& frames_dir, const std::string& backend,
                      const std::string& out, const std::string& config_path) {
  RunConfig cfg = load_run_config(config_path);
  estimator::EstimatorConfig est = cfg.estimator;
  est.backend = estimator::backend_from_name(backend);
  data::VideoClip clip = data::load_frames_dir(frames_dir);
  if (est.backend == estimator::Backend::GroundTruth) {
    // Real footage has no stored truth; the flow directory next to the
    // frames, when present, is the ground truth (dataset layout).
    const fs::path flow_dir = fs::path(frames_dir).parent_path() / "flow";
    check(fs::exists(flow_dir), Errc::IoFailure,
          "ground_truth backend needs a sibling flow/ directory");
    clip.gt_flow = load_flow_dir(flow_dir.string());
  }
  const flow::FlowField field = estimator::estimate(clip, est);
  fs::create_directories(out);
  char buf[32];
  for (int t = 1; t < field.frames; ++t) {
    std::snprintf(buf, sizeof(buf), "%05d.flo", t);
    flow::write_flo(flow::slice(field, t), (fs::path(out) / buf).string());
  }
  std::printf("wrote %d flow files to %s\n", field.frames - 1, out.c_str());
  return 0;
}

std::pair<std::unique_ptr<train::DiskClips>, std::unique_ptr<train::DiskClips>> split_dataset(
    const std::string& data_root, int holdout) {
  const data::DatasetManifest m = data::load_manifest(data_root);
  check(!m.clips.empty(), Errc::DatasetEmpty, "dataset has no clips");
  const int n_eval = std::min<int>(holdout, (int)m.clips.size() - 1);
  std::vector<data::ClipRecord> train_recs(m.clips.begin(), m.clips.end() - n_eval);
  std::vector<data::ClipRecord> eval_recs(m.clips.end() - n_eval, m.clips.end());
  return {std::make_unique<train::DiskClips>(data_root, train_recs),
          std::make_unique<train::DiskClips>(data_root, eval_recs)};
}

int cmd_train(const std::string& stage, const std::string& config_path,
              const std::string& data_root, const std::string& init_ckpt,
              const std::string& out_ckpt) {
  RunConfig cfg = load_run_config(config_path);
  auto [train_clips, eval_clips] = split_dataset(data_root, cfg.eval.holdout);
  const std::string csv = out_ckpt + ".loss.csv";

  train::StepHook hook = [](long step, double loss, double, double) {
    if (step % 50 == 0) std::printf("step %ld loss %.5f\n", step, loss);
  };

  if (stage == "backbone") {
    model::VideoModel m(cfg.unet, cfg.encoder, cfg.schedule, /*with_motion=*/false,
                        cfg.model_seed);
    const train::TrainResult r = train::train_backbone(m, *train_clips, cfg.train, out_ckpt, hook);
    train::write_loss_csv(r, csv);
  } else if (stage == "motion") {
    check(!init_ckpt.empty(), Errc::MissingBackbone, "train motion requires --init CKPT");
    model::VideoModel backbone = model::load_checkpoint(init_ckpt);
    model::VideoModel m =
        train::init_motion_from_backbone(backbone, cfg.encoder, cfg.model_seed + 1);
    const train::TrainResult r =
        train::train_motion(m, *train_clips, cfg.estimator, cfg.train, out_ckpt, hook);
    train::write_loss_csv(r, csv);
  } else {
    fail(Errc::InvalidArgument, "train stage must be backbone or motion");
  }
  std::printf("wrote checkpoint %s and %s\n", out_ckpt.c_str(), csv.c_str());
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& prompt, const std::string& flow_dir,
               double gamma, const std::string& variant, uint64_t seed, const std::string& out,
               const std::string& config_path, int frames_override,
               const std::string& size_override) {
  RunConfig cfg = load_run_config(config_path);
  model::VideoModel m = model::load_checkpoint(ckpt);
  if (!variant.empty()) {
    check(model::variant_from_name(variant) == m.ucfg.variant, Errc::ConfigMismatch,
          "checkpoint was built with variant " + std::string(variant_name(m.ucfg.variant)));
  }

  model::SampleConfig scfg;
  scfg.sampler = cfg.sample.sampler;
  scfg.steps = cfg.sample.steps;
  scfg.guidance = cfg.sample.guidance;
  scfg.seed = seed;
  scfg.frames = frames_override > 0 ? frames_override : m.ucfg.frames;
  scfg.height = cfg.dataset.height;
  scfg.width = cfg.dataset.width;
  if (!size_override.empty()) {
    check(std::sscanf(size_override.c_str(), "%dx%d", &scfg.height, &scfg.width) == 2,
          Errc::BadDims, "--size must be HxW");
  }

  flow::FlowField field;
  const flow::FlowField* fp = nullptr;
  if (!flow_dir.empty()) {
    field = load_flow_dir(flow_dir);
    scfg.frames = field.frames;
    scfg.height = field.height;
    scfg.width = field.width;
    scfg.gamma = gamma;
    fp = &field;
  } else {
    scfg.gamma = 0.0;  // omitting --flow forces the unconditional path
  }

  const data::VideoClip clip = model::sample(m, prompt, fp, scfg);
  fs::create_directories(out);
  data::write_clip_frames(clip, out);
  std::printf("wrote %d frames to %s\n", clip.frame_count(), out.c_str());
  return 0;
}

int cmd_eval_sweep(const std::string& ckpt, const std::string& data_root,
                   const std::string& gammas_csv, const std::string& out,
                   const std::string& config_path) {
  RunConfig cfg = load_run_config(config_path);
  if (!gammas_csv.empty()) {
    cfg.eval.gammas.clear();
    std::stringstream ss(gammas_csv);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.eval.gammas.push_back(std::stod(item));
  }
  model::VideoModel m = model::load_checkpoint(ckpt);
  auto [train_clips, eval_clips] = split_dataset(data_root, cfg.eval.holdout);

  std::vector<int> train_classes, eval_classes;
  for (const auto& r : train_clips->records()) train_classes.push_back(r.content_class);
  for (const auto& r : eval_clips->records()) eval_classes.push_back(r.content_class);

  const data::DatasetManifest manifest = data::load_manifest(data_root);
  evaluate::ContentProbe probe(cfg.eval.probe, manifest.height, manifest.width);
  const double acc = probe.train(*train_clips, train_classes, *eval_clips, eval_classes);
  std::printf("probe accuracy on real frames: %.4f\n", acc);

  evaluate::SweepConfig sweep;
  sweep.gammas = cfg.eval.gammas;
  sweep.sampler = cfg.eval.sampler;
  sweep.sample_steps = cfg.eval.steps;
  sweep.guidance = cfg.eval.guidance;
  sweep.seed = cfg.train.seed;
  sweep.estimator = cfg.estimator;
  const evaluate::EvalReport report =
      evaluate::eval_sweep(m, *eval_clips, eval_classes, probe, sweep);
  evaluate::save_report(report, out);
  const std::string plot_path = out + ".png";
  plot::save_sweep_plot(report, plot_path);
  for (const auto& row : report.rows) {
    std::printf("gamma %.2f: mad %.4f +- %.4f, probe acc %.4f, frechet %.4f\n", row.gamma,
                row.mad_mean, row.mad_std, row.probe_accuracy, row.frechet);
  }
  std::printf("wrote %s and %s\n", out.c_str(), plot_path.c_str());
  return 0;
}

int cmd_viz_flow(const std::string& in_dir, const std::string& out_dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(in_dir, ec)) {
    if (e.path().extension() == ".flo") files.push_back(e.path());
  }
  check(!ec && !files.empty(), Errc::IoFailure, "no .flo files in " + in_dir);
  std::sort(files.begin(), files.end());
  fs::create_directories(out_dir);
  for (const auto& f : files) {
    const flow::FlowFrame fr = flow::read_flo(f.string());
    const Image img = flow::flow_to_color(fr);
    write_png(img, (fs::path(out_dir) / (f.stem().string() + ".png")).string());
  }
  std::printf("wrote %zu images to %s\n", files.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"optical-flow-conditioned text-to-video diffusion"};
  app.require_subcommand(1);

  // dataset build
  auto* dataset = app.add_subcommand("dataset", "synthetic dataset tools");
  dataset->require_subcommand(1);
  auto* dbuild = dataset->add_subcommand("build", "render clips + ground-truth flow + manifest");
  std::string db_config, db_out;
  uint64_t db_seed = 0;
  dbuild->add_option("--config", db_config, "run config JSON")->capture_default_str();
  dbuild->add_option("--out", db_out, "output dataset directory")->required();
  dbuild->add_option("--seed", db_seed, "generation seed")->capture_default_str();

  // flow synth / estimate
  auto* flow_cmd = app.add_subcommand("flow", "flow synthesis and estimation");
  flow_cmd->require_subcommand(1);
  auto* fsynth = flow_cmd->add_subcommand("synth", "write parametric camera flow as .flo files");
  std::string fs_kind = "pan", fs_size = "64x64", fs_out;
  double fs_mag = 1.0;
  int fs_frames = 16;
  fsynth->add_option("--kind", fs_kind, "pan|zoom|rotate")->capture_default_str();
  fsynth->add_option("--magnitude", fs_mag, "pixels/frame, rate, or radians")
      ->capture_default_str();
  fsynth->add_option("--frames", fs_frames, "frame count F (writes F-1 files)")
      ->capture_default_str();
  fsynth->add_option("--size", fs_size, "HxW")->capture_default_str();
  fsynth->add_option("--out", fs_out, "output directory")->required();

  auto* fest = flow_cmd->add_subcommand("estimate", "estimate flow for a PNG frame directory");
  std::string fe_frames, fe_backend = "block_match", fe_out, fe_config;
  fest->add_option("--frames", fe_frames, "PNG frame directory")->required();
  fest->add_option("--backend", fe_backend, "block_match|ground_truth")->capture_default_str();
  fest->add_option("--out", fe_out, "output directory")->required();
  fest->add_option("--config", fe_config, "run config JSON")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "two-stage training");
  train_cmd->require_subcommand(1);
  std::string tb_config, tb_data, tb_out;
  auto* tback = train_cmd->add_subcommand("backbone", "stage 1: text-to-video backbone");
  tback->add_option("--config", tb_config, "run config JSON")->capture_default_str();
  tback->add_option("--data", tb_data, "dataset root")->required();
  tback->add_option("--out", tb_out, "output checkpoint")->required();
  std::string tm_config, tm_data, tm_init, tm_out;
  auto* tmotion = train_cmd->add_subcommand("motion", "stage 2: frozen-backbone motion tune");
  tmotion->add_option("--config", tm_config, "run config JSON")->capture_default_str();
  tmotion->add_option("--data", tm_data, "dataset root")->required();
  tmotion->add_option("--init", tm_init, "backbone checkpoint")->required();
  tmotion->add_option("--out", tm_out, "output checkpoint")->required();

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "generate a clip from a checkpoint");
  std::string s_ckpt, s_prompt, s_flow, s_variant, s_out, s_config, s_size;
  double s_gamma = 1.0;
  uint64_t s_seed = 0;
  int s_frames = 0;
  sample_cmd->add_option("--ckpt", s_ckpt, "checkpoint path")->required();
  sample_cmd->add_option("--prompt", s_prompt, "caption text")->required();
  sample_cmd->add_option("--flow", s_flow, "conditioning .flo directory (omit for gamma 0)")
      ->capture_default_str();
  sample_cmd->add_option("--gamma", s_gamma, "conditioning strength")->capture_default_str();
  sample_cmd->add_option("--variant", s_variant, "T|ST (must match the checkpoint)")
      ->capture_default_str();
  sample_cmd->add_option("--seed", s_seed, "sampling seed")->capture_default_str();
  sample_cmd->add_option("--out", s_out, "output frame directory")->required();
  sample_cmd->add_option("--config", s_config, "run config JSON")->capture_default_str();
  sample_cmd->add_option("--frames", s_frames, "frame count (default: checkpoint)")
      ->capture_default_str();
  sample_cmd->add_option("--size", s_size, "HxW (default: config dataset geometry)")
      ->capture_default_str();

  // eval sweep
  auto* eval_cmd = app.add_subcommand("eval", "evaluation harness");
  eval_cmd->require_subcommand(1);
  auto* esweep = eval_cmd->add_subcommand("sweep", "conditioning-strength sweep");
  std::string e_ckpt, e_data, e_gammas, e_out, e_config;
  esweep->add_option("--ckpt", e_ckpt, "checkpoint path")->required();
  esweep->add_option("--data", e_data, "dataset root")->required();
  esweep->add_option("--gammas", e_gammas, "comma-separated strengths")->capture_default_str();
  esweep->add_option("--out", e_out, "report JSON path")->required();
  esweep->add_option("--config", e_config, "run config JSON")->capture_default_str();

  // viz flow
  auto* viz_cmd = app.add_subcommand("viz", "visualization");
  viz_cmd->require_subcommand(1);
  auto* vflow = viz_cmd->add_subcommand("flow", "render .flo files with the color wheel");
  std::string v_in, v_out;
  vflow->add_option("--in", v_in, ".flo directory")->required();
  vflow->add_option("--out", v_out, "PNG output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*dbuild) return cmd_dataset_build(db_config, db_out, db_seed);
    if (*fsynth) return cmd_flow_synth(fs_kind, fs_mag, fs_frames, fs_size, fs_out);
    if (*fest) return cmd_flow_estimate(fe_frames, fe_backend, fe_out, fe_config);
    if (*tback) return cmd_train("backbone", tb_config, tb_data, "", tb_out);
    if (*tmotion) return cmd_train("motion", tm_config, tm_data, tm_init, tm_out);
    if (*sample_cmd) {
      return cmd_sample(s_ckpt, s_prompt, s_flow, s_gamma, s_variant, s_seed, s_out, s_config,
                        s_frames, s_size);
    }
    if (*esweep) return cmd_eval_sweep(e_ckpt, e_data, e_gammas, e_out, e_config);
    if (*vflow) return cmd_viz_flow(v_in, v_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == Errc::IoFailure || e.code() == Errc::TruncatedFile ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace onlyflow::cli
