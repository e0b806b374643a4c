#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "step/geometry.hpp"
#include "step/model.hpp"
#include "step/seeding.hpp"

namespace step {

enum class Trajectory { stationary, linear, sinusoidal, piecewise_linear };

inline const char* trajectory_name(Trajectory t) {
  switch (t) {
    case Trajectory::stationary: return "stationary";
    case Trajectory::linear: return "linear";
    case Trajectory::sinusoidal: return "sinusoidal";
    case Trajectory::piecewise_linear: return "piecewise_linear";
  }
  return "?";
}

inline Trajectory trajectory_from_name(const std::string& name) {
  if (name == "stationary") return Trajectory::stationary;
  if (name == "linear") return Trajectory::linear;
  if (name == "sinusoidal") return Trajectory::sinusoidal;
  if (name == "piecewise_linear") return Trajectory::piecewise_linear;
  throw std::invalid_argument("unknown trajectory: " + name);
}

/**
 * @brief Parameters of one synthetic moving-actor scene.
 *
 * The seed fully determines the realized tubes. Actor centers are clamped so
 * boxes stay inside the frame; everything else is drawn from the ranges.
 */
struct SceneSpec {
  FrameSize frame{400, 400};
  int num_frames = 60;
  int num_actors = 2;
  int num_classes = 4;
  std::vector<Trajectory> families{Trajectory::linear, Trajectory::sinusoidal};
  double min_velocity = 0.5, max_velocity = 3.0;  // px/frame
  double min_box = 40, max_box = 120;             // initial box side
  double min_scale_rate = 0.0, max_scale_rate = 0.0;  // relative size drift per frame
  std::uint64_t seed = 0;
};

struct Scene {
  SceneSpec spec;
  std::vector<GroundTruthTube> tubes;
};

namespace detail {

struct ActorMotion {
  Trajectory family = Trajectory::stationary;
  double cx0 = 0, cy0 = 0, w0 = 0, h0 = 0;
  double speed = 0, angle = 0;
  double amplitude = 0, period = 30;  // sinusoidal wobble
  double scale_rate = 0;
  std::vector<std::pair<double, double>> segment_velocity;  // piecewise-linear
  int segment_length = 12;
};

inline Box actor_box(const ActorMotion& m, int t, const FrameSize& frame) {
  double cx = m.cx0, cy = m.cy0;
  const double ux = std::cos(m.angle), uy = std::sin(m.angle);
  switch (m.family) {
    case Trajectory::stationary:
      break;
    case Trajectory::linear:
      cx += ux * m.speed * t;
      cy += uy * m.speed * t;
      break;
    case Trajectory::sinusoidal: {
      const double wobble = m.amplitude * std::sin(2 * M_PI * t / m.period);
      cx += ux * m.speed * t - uy * wobble;
      cy += uy * m.speed * t + ux * wobble;
      break;
    }
    case Trajectory::piecewise_linear: {
      for (int f = 0; f < t; ++f) {
        const auto& [vx, vy] =
            m.segment_velocity[static_cast<std::size_t>(f / m.segment_length) %
                               m.segment_velocity.size()];
        cx += vx;
        cy += vy;
      }
      break;
    }
  }
  double w = m.w0 * (1.0 + m.scale_rate * t);
  double h = m.h0 * (1.0 + m.scale_rate * t);
  w = std::clamp(w, 4.0, frame.width);
  h = std::clamp(h, 4.0, frame.height);
  cx = std::clamp(cx, w / 2, frame.width - w / 2);
  cy = std::clamp(cy, h / 2, frame.height - h / 2);
  return Box::from_center(cx, cy, w, h);
}

}  // namespace detail

/// Deterministic scene realization: labeled tubes spanning the whole video.
inline Scene generate_scene(const SceneSpec& spec) {
  if (spec.num_frames < 1 || spec.num_actors < 0 || spec.num_classes < 1)
    throw std::invalid_argument("generate_scene: bad spec");
  if (spec.families.empty()) throw std::invalid_argument("generate_scene: no trajectory families");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto in_range = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Scene scene;
  scene.spec = spec;
  for (int a = 0; a < spec.num_actors; ++a) {
    detail::ActorMotion m;
    const int label = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(spec.num_classes));
    m.family = spec.families[rng() % spec.families.size()];
    m.w0 = in_range(spec.min_box, spec.max_box);
    m.h0 = in_range(spec.min_box, spec.max_box);
    m.cx0 = in_range(m.w0 / 2, spec.frame.width - m.w0 / 2);
    m.cy0 = in_range(m.h0 / 2, spec.frame.height - m.h0 / 2);
    m.speed = in_range(spec.min_velocity, spec.max_velocity);
    m.angle = in_range(0, 2 * M_PI);
    m.amplitude = in_range(5, 25);
    m.period = in_range(20, 60);
    m.scale_rate = in_range(spec.min_scale_rate, spec.max_scale_rate);
    if (m.family == Trajectory::piecewise_linear) {
      m.segment_length = 8 + static_cast<int>(rng() % 9);
      const int segments = spec.num_frames / m.segment_length + 2;
      for (int s = 0; s < segments; ++s) {
        const double speed = in_range(spec.min_velocity, spec.max_velocity);
        const double angle = in_range(0, 2 * M_PI);
        m.segment_velocity.push_back({speed * std::cos(angle), speed * std::sin(angle)});
      }
    }

    Tubelet tube;
    tube.start_frame = 0;
    for (int t = 0; t < spec.num_frames; ++t)
      tube.boxes.push_back(detail::actor_box(m, t, spec.frame));
    scene.tubes.push_back({label, std::move(tube)});
  }
  return scene;
}

/// Feature width for a proposal of the given length.
inline int feature_dim(int proposal_length, int num_classes) {
  return 12 + 4 * proposal_length + num_classes + 1;
}

/**
 * @brief Deterministic feature synthesis for the trainable head.
 *
 * Encodes normalized proposal geometry (first/middle/last boxes), per-frame
 * offsets to the best-overlap ground-truth tube, per-class best overlaps, and
 * the overall best overlap, plus optional uniform noise. No pixels exist;
 * this is the only information the linear model sees.
 */
inline FeatureVector synth_features(const Tubelet& proposal, const Scene& scene, double noise,
                                    std::mt19937_64& rng) {
  const int C = scene.spec.num_classes;
  const FrameSize& frame = scene.spec.frame;
  FeatureVector x;
  x.reserve(static_cast<std::size_t>(feature_dim(static_cast<int>(proposal.length()), C)));

  const std::int64_t mid = proposal.start_frame + proposal.length() / 2;
  for (std::int64_t f : {proposal.start_frame, mid, proposal.range().end - 1}) {
    const Box& b = proposal.box_at(f);
    x.push_back(b.cx() / frame.width - 0.5);
    x.push_back(b.cy() / frame.height - 0.5);
    x.push_back(b.width() / frame.width);
    x.push_back(b.height() / frame.height);
  }

  int best = -1;
  double best_ov = 0;
  std::vector<double> class_ov(static_cast<std::size_t>(C), 0.0);
  for (std::size_t j = 0; j < scene.tubes.size(); ++j) {
    const double ov = clip_overlap(proposal, scene.tubes[j].tubelet, proposal.range());
    class_ov[static_cast<std::size_t>(scene.tubes[j].label - 1)] =
        std::max(class_ov[static_cast<std::size_t>(scene.tubes[j].label - 1)], ov);
    if (best < 0 || ov > best_ov) {
      best = static_cast<int>(j);
      best_ov = ov;
    }
  }

  for (std::int64_t f = proposal.start_frame; f < proposal.range().end; ++f) {
    OffsetVector off;
    if (best >= 0) {
      const Box& anchor = proposal.box_at(f);
      const Box& target = scene.tubes[static_cast<std::size_t>(best)].tubelet.box_at_or_nearest(f);
      if (!anchor.degenerate() && !target.degenerate()) off = encode_box(target, anchor);
    }
    x.push_back(off.tx);
    x.push_back(off.ty);
    x.push_back(off.tw);
    x.push_back(off.th);
  }

  for (double ov : class_ov) x.push_back(ov);
  x.push_back(best_ov);

  if (noise > 0)
    for (double& v : x) v += uniform_noise(rng, noise);
  return x;
}

/// Binds a scene into the FeatureFn shape the trainable model consumes.
inline FeatureFn make_feature_fn(std::shared_ptr<const Scene> scene, double noise) {
  return [scene, noise](const Tubelet& proposal, std::mt19937_64& rng) {
    return synth_features(proposal, *scene, noise, rng);
  };
}

}  // namespace step
