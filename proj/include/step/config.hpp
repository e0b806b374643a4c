#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "step/engine.hpp"
#include "step/io.hpp"
#include "step/proposals.hpp"
#include "step/simulator.hpp"

namespace step {

/// Configuration problems carry their JSON path; the CLI maps these to the
/// usage/config exit code.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void expect_keys(const json& j, const std::set<std::string>& allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("invalid value for '") + key + "'");
  }
}

}  // namespace detail

enum class ModelKind { oracle, linear };

struct ModelConfig {
  ModelKind kind = ModelKind::oracle;
  double noise = 0.0;          // oracle offset noise half-width
  double sharpness = 8.0;      // oracle logit sharpness
  double feature_noise = 0.0;  // linear-model feature noise
  double learning_rate = 0.2;
  int iterations = 500;
  int batch_clips = 4;
  std::string checkpoint;  // linear-model parameters for `detect`
};

struct LinkConfig {
  double threshold = 0.2;   // adjacent-clip overlap needed to chain detections
  double smoothness = 0.1;  // trimming label-change penalty
  double min_score = 0.0;   // drop candidates below this class score
};

struct EvalConfig {
  double frame_iou = 0.5;
  std::vector<double> video_iou{0.05, 0.1, 0.2, 0.5};
  double histogram_bin = 0.1;
  std::vector<int> miut_lengths{6, 30};
};

struct ProposalConfig {
  std::vector<PyramidLevel> levels{{1.0, 0.0}, {2.0, 0.5}};
  std::vector<double> centered_scales{4.0 / 3.0};

  std::vector<Box> generate(const FrameSize& frame) const {
    std::vector<Box> boxes = generate_pyramid({levels, frame});
    for (double scale : centered_scales) boxes.push_back(centered_window(frame, scale));
    return boxes;
  }
};

/// Everything a run needs: scene generation, proposals, the progressive-step
/// schedule, the model, linking, and evaluation settings.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  int num_videos = 20;
  SceneSpec scene;  // per-video spec; video v uses seed mix_seed(seed, v)
  ProposalConfig proposals;
  StepConfig step;
  ModelConfig model;
  LinkConfig link;
  EvalConfig eval;

  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig from_text(const std::string& text) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
  }

  void validate() const {
    if (num_videos < 1) throw ConfigError("videos must be >= 1");
    if (scene.num_frames < step.clip_length) throw ConfigError("scene shorter than one clip");
    try {
      step.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (model.kind == ModelKind::oracle && model.noise < 0)
      throw ConfigError("model.noise must be >= 0");
    if (eval.histogram_bin <= 0 || eval.histogram_bin > 1)
      throw ConfigError("eval.histogram_bin must be in (0, 1]");
    for (int len : eval.miut_lengths)
      if (len < 1) throw ConfigError("eval.miut_lengths entries must be >= 1");
  }
};

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  detail::expect_keys(j, {"version", "seed", "output_dir", "scene", "proposals", "step", "model",
                          "link", "eval"},
                      "config");
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<int>() != kSchemaVersion)
    throw ConfigError("config: missing or unsupported version (expected 1)");

  ExperimentConfig cfg;
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  cfg.output_dir = detail::get_or<std::string>(j, "output_dir", "");

  if (j.contains("scene")) {
    const json& s = j.at("scene");
    detail::expect_keys(s,
                        {"width", "height", "frames", "videos", "actors", "classes",
                         "trajectories", "velocity", "box_size", "scale_rate"},
                        "scene");
    cfg.scene.frame.width = detail::get_or<double>(s, "width", 400);
    cfg.scene.frame.height = detail::get_or<double>(s, "height", 400);
    cfg.scene.num_frames = detail::get_or<int>(s, "frames", 60);
    cfg.num_videos = detail::get_or<int>(s, "videos", 20);
    cfg.scene.num_actors = detail::get_or<int>(s, "actors", 2);
    cfg.scene.num_classes = detail::get_or<int>(s, "classes", 4);
    if (s.contains("trajectories")) {
      cfg.scene.families.clear();
      for (const auto& name : s.at("trajectories"))
        cfg.scene.families.push_back(trajectory_from_name(name.get<std::string>()));
    }
    if (s.contains("velocity")) {
      cfg.scene.min_velocity = s.at("velocity").at(0).get<double>();
      cfg.scene.max_velocity = s.at("velocity").at(1).get<double>();
    }
    if (s.contains("box_size")) {
      cfg.scene.min_box = s.at("box_size").at(0).get<double>();
      cfg.scene.max_box = s.at("box_size").at(1).get<double>();
    }
    if (s.contains("scale_rate")) {
      cfg.scene.min_scale_rate = s.at("scale_rate").at(0).get<double>();
      cfg.scene.max_scale_rate = s.at("scale_rate").at(1).get<double>();
    }
  }

  if (j.contains("proposals")) {
    const json& p = j.at("proposals");
    detail::expect_keys(p, {"levels", "centered_scales"}, "proposals");
    if (p.contains("levels")) {
      cfg.proposals.levels.clear();
      for (const auto& level : p.at("levels")) {
        detail::expect_keys(level, {"scale", "overlap"}, "proposals.levels");
        cfg.proposals.levels.push_back(
            {level.at("scale").get<double>(), level.at("overlap").get<double>()});
      }
    }
    if (p.contains("centered_scales"))
      cfg.proposals.centered_scales = p.at("centered_scales").get<std::vector<double>>();
  }

  if (j.contains("step")) {
    const json& s = j.at("step");
    detail::expect_keys(s,
                        {"steps", "clip_length", "extension", "tau", "lambda", "gamma",
                         "positives", "negatives"},
                        "step");
    cfg.step.num_steps = detail::get_or<int>(s, "steps", 3);
    cfg.step.clip_length = detail::get_or<int>(s, "clip_length", 6);
    cfg.step.lambda = detail::get_or<double>(s, "lambda", 1.0);
    cfg.step.gamma = detail::get_or<double>(s, "gamma", 0.5);
    cfg.step.num_positive_samples = detail::get_or<int>(s, "positives", 8);
    cfg.step.num_negative_samples = detail::get_or<int>(s, "negatives", 8);
    if (s.contains("tau")) cfg.step.tau = s.at("tau").get<std::vector<double>>();
    cfg.step.extend_at_step.assign(static_cast<std::size_t>(cfg.step.num_steps), false);
    if (s.contains("extension")) {
      const json& e = s.at("extension");
      detail::expect_keys(e, {"mode", "steps"}, "step.extension");
      const std::string mode = detail::get_or<std::string>(e, "mode", "extrapolate");
      if (mode == "none")
        cfg.step.extension_mode = ExtensionMode::none;
      else if (mode == "extrapolate")
        cfg.step.extension_mode = ExtensionMode::extrapolate;
      else if (mode == "anticipate")
        cfg.step.extension_mode = ExtensionMode::anticipate;
      else
        throw ConfigError("step.extension.mode must be none|extrapolate|anticipate");
      if (e.contains("steps"))
        for (int s_idx : e.at("steps").get<std::vector<int>>()) {
          if (s_idx < 1 || s_idx > cfg.step.num_steps)
            throw ConfigError("step.extension.steps entry out of range");
          cfg.step.extend_at_step[static_cast<std::size_t>(s_idx - 1)] = true;
        }
    } else {
      for (int s_idx = 2; s_idx <= cfg.step.num_steps; ++s_idx)
        cfg.step.extend_at_step[static_cast<std::size_t>(s_idx - 1)] = true;
    }
  } else {
    cfg.step.extend_at_step = {false, true, true};
  }
  if (cfg.step.tau.size() != static_cast<std::size_t>(cfg.step.num_steps)) {
    // default schedule: rise from 0.3 toward 0.5
    cfg.step.tau.clear();
    for (int s_idx = 0; s_idx < cfg.step.num_steps; ++s_idx)
      cfg.step.tau.push_back(std::min(0.5, 0.3 + 0.1 * s_idx));
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    detail::expect_keys(m,
                        {"kind", "noise", "sharpness", "feature_noise", "learning_rate",
                         "iterations", "batch_clips", "checkpoint"},
                        "model");
    const std::string kind = detail::get_or<std::string>(m, "kind", "oracle");
    if (kind == "oracle")
      cfg.model.kind = ModelKind::oracle;
    else if (kind == "linear")
      cfg.model.kind = ModelKind::linear;
    else
      throw ConfigError("model.kind must be oracle|linear");
    cfg.model.noise = detail::get_or<double>(m, "noise", 0.0);
    cfg.model.sharpness = detail::get_or<double>(m, "sharpness", 8.0);
    cfg.model.feature_noise = detail::get_or<double>(m, "feature_noise", 0.0);
    cfg.model.learning_rate = detail::get_or<double>(m, "learning_rate", 0.2);
    cfg.model.iterations = detail::get_or<int>(m, "iterations", 500);
    cfg.model.batch_clips = detail::get_or<int>(m, "batch_clips", 4);
    cfg.model.checkpoint = detail::get_or<std::string>(m, "checkpoint", "");
  }

  if (j.contains("link")) {
    const json& l = j.at("link");
    detail::expect_keys(l, {"threshold", "smoothness", "min_score"}, "link");
    cfg.link.threshold = detail::get_or<double>(l, "threshold", 0.2);
    cfg.link.smoothness = detail::get_or<double>(l, "smoothness", 0.1);
    cfg.link.min_score = detail::get_or<double>(l, "min_score", 0.0);
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::expect_keys(e, {"frame_iou", "video_iou", "histogram_bin", "miut_lengths"}, "eval");
    cfg.eval.frame_iou = detail::get_or<double>(e, "frame_iou", 0.5);
    if (e.contains("video_iou")) cfg.eval.video_iou = e.at("video_iou").get<std::vector<double>>();
    cfg.eval.histogram_bin = detail::get_or<double>(e, "histogram_bin", 0.1);
    if (e.contains("miut_lengths"))
      cfg.eval.miut_lengths = e.at("miut_lengths").get<std::vector<int>>();
  }

  cfg.validate();
  return cfg;
}

/// Scene spec for one video of the dataset: same knobs, derived seed.
inline SceneSpec video_scene_spec(const ExperimentConfig& cfg, int video_index) {
  SceneSpec spec = cfg.scene;
  spec.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(video_index));
  return spec;
}

}  // namespace step
