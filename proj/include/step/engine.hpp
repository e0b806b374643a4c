#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "step/geometry.hpp"
#include "step/model.hpp"

namespace step {

enum class ExtensionMode { none, extrapolate, anticipate };

inline const char* extension_mode_name(ExtensionMode m) {
  switch (m) {
    case ExtensionMode::none: return "none";
    case ExtensionMode::extrapolate: return "extrapolate";
    case ExtensionMode::anticipate: return "anticipate";
  }
  return "?";
}

/**
 * @brief Progressive-learning hyperparameters.
 *
 * Steps are 1-based; extend_at_step[s-1] says whether step s grows the
 * proposals by clip_length frames on each side before refinement (step 1
 * never extends). tau holds the per-step assignment IoU thresholds.
 */
struct StepConfig {
  int num_steps = 3;       // S_max
  int clip_length = 6;     // K
  int num_proposals = 0;   // M; 0 = accept whatever the generator produced
  std::vector<bool> extend_at_step;
  ExtensionMode extension_mode = ExtensionMode::extrapolate;
  std::vector<double> tau{0.3, 0.4, 0.5};
  double lambda = 1.0, gamma = 0.5;
  int num_positive_samples = 8, num_negative_samples = 8;

  void validate() const {
    if (num_steps < 1) throw std::invalid_argument("StepConfig: num_steps < 1");
    if (clip_length < 1) throw std::invalid_argument("StepConfig: clip_length < 1");
    if (clip_length < 2 && extension_mode == ExtensionMode::extrapolate && extends_anywhere())
      throw std::invalid_argument("StepConfig: extrapolation needs clip_length >= 2");
    if (static_cast<int>(tau.size()) != num_steps)
      throw std::invalid_argument("StepConfig: tau size must equal num_steps");
    for (std::size_t i = 1; i < tau.size(); ++i)
      if (tau[i] < tau[i - 1]) throw std::invalid_argument("StepConfig: tau must be nondecreasing");
    if (!extend_at_step.empty()) {
      if (static_cast<int>(extend_at_step.size()) != num_steps)
        throw std::invalid_argument("StepConfig: extension schedule size must equal num_steps");
      if (extend_at_step[0])
        throw std::invalid_argument("StepConfig: step 1 cannot extend");
    }
    if (num_positive_samples < 0 || num_negative_samples < 0)
      throw std::invalid_argument("StepConfig: negative sample counts");
  }

  bool extends_at(int s) const {
    return s >= 2 && s <= static_cast<int>(extend_at_step.size()) &&
           extend_at_step[static_cast<std::size_t>(s - 1)];
  }
  bool extends_anywhere() const {
    return std::find(extend_at_step.begin(), extend_at_step.end(), true) != extend_at_step.end();
  }
  /// Proposal length at refine time of step s (1-based).
  int length_at_step(int s) const {
    int extensions = 0;
    for (int i = 2; i <= s; ++i) extensions += extends_at(i) ? 1 : 0;
    return clip_length * (1 + 2 * extensions);
  }
  /// True when the step-s model should emit (and train) anticipation offsets.
  bool emits_anticipation_at(int s) const {
    return extension_mode == ExtensionMode::anticipate && s < num_steps && extends_at(s + 1);
  }
};

/// Frame ranges a detection run sees: the target clip, the enclosing video,
/// and the frame geometry.
struct ClipContext {
  FrameInterval clip;   // target clip I_t, clip_length frames
  FrameInterval video;  // full video extent
  FrameSize frame;

  /// Frames of a tubelet that are real video content (wings replicated past
  /// the video boundary are padding).
  FrameInterval valid_range(const Tubelet& t) const { return t.range().intersect(video); }
};

/// Argmax over action classes (background excluded); ties take the lowest
/// class index. Returns a 1-based class label.
inline int best_action_class(const std::vector<double>& probs) {
  if (probs.size() < 2) throw std::invalid_argument("best_action_class: no action classes");
  int best = 1;
  for (int c = 2; c < static_cast<int>(probs.size()); ++c)
    if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) best = c;
  return best;
}

/**
 * @brief Greedy proposal update: each proposal is replaced by its
 * best-scoring action class's decoded regression, clamped to the frame.
 *
 * Background never wins the argmax since it has no regression output; the
 * proposal count is preserved.
 */
inline std::vector<Tubelet> update_proposals(const std::vector<Detection>& detections,
                                             const std::vector<Tubelet>& proposals,
                                             const FrameSize& frame) {
  if (detections.size() != proposals.size())
    throw std::invalid_argument("update_proposals: detection/proposal count mismatch");
  std::vector<Tubelet> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const int label = best_action_class(detections[i].probs);
    out.push_back(
        decode_tubelet(detections[i].offsets[static_cast<std::size_t>(label - 1)], proposals[i], frame));
  }
  return out;
}

enum class Direction { backward, forward };

/**
 * @brief Linear extrapolation of a tubelet into an adjacent clip.
 *
 * Forward: B(+1,k) = B(last) + k/(K-1) * (B(last) - B(last-K+1)) for k=1..K.
 * Backward mirrors with the first box and the first sub-tubelet span. All
 * four coordinates are extrapolated, then clamped to the frame.
 */
inline Tubelet extrapolate(const Tubelet& proposal, Direction direction, int K,
                           const FrameSize& frame) {
  if (K < 2) throw std::invalid_argument("extrapolate: K must be >= 2");
  if (proposal.length() < K)
    throw std::invalid_argument("extrapolate: proposal shorter than extension length");

  Tubelet out;
  out.boxes.resize(static_cast<std::size_t>(K));
  if (direction == Direction::forward) {
    out.start_frame = proposal.range().end;
    const Box& last = proposal.boxes.back();
    const Box& prior = proposal.boxes[proposal.boxes.size() - static_cast<std::size_t>(K)];
    for (int k = 1; k <= K; ++k) {
      const double r = static_cast<double>(k) / (K - 1);
      out.boxes[static_cast<std::size_t>(k - 1)] = clamp_to_frame(
          Box(last.x1 + r * (last.x1 - prior.x1), last.y1 + r * (last.y1 - prior.y1),
              last.x2 + r * (last.x2 - prior.x2), last.y2 + r * (last.y2 - prior.y2)),
          frame);
    }
  } else {
    out.start_frame = proposal.start_frame - K;
    const Box& first = proposal.boxes.front();
    const Box& later = proposal.boxes[static_cast<std::size_t>(K - 1)];
    for (int k = 1; k <= K; ++k) {
      const double r = static_cast<double>(k) / (K - 1);
      // k steps before the clip; stored in ascending frame order
      out.boxes[static_cast<std::size_t>(K - k)] = clamp_to_frame(
          Box(first.x1 + r * (first.x1 - later.x1), first.y1 + r * (first.y1 - later.y1),
              first.x2 + r * (first.x2 - later.x2), first.y2 + r * (first.y2 - later.y2)),
          frame);
    }
  }
  return out;
}

/// Per-step engine record: what refinement saw and produced.
struct StepRecord {
  std::vector<Tubelet> inputs;        // refine-time proposals (post-extension)
  std::vector<RefineOutput> outputs;
  std::vector<int> chosen_class;      // Eq. 1 argmax per proposal
  std::vector<Tubelet> updated;       // proposals after the greedy update
};

namespace detail {

inline Tubelet replicate_wing(const Tubelet& proposal, Direction dir, int K) {
  Tubelet out;
  if (dir == Direction::forward) {
    out.start_frame = proposal.range().end;
    out.boxes.assign(static_cast<std::size_t>(K), proposal.boxes.back());
  } else {
    out.start_frame = proposal.start_frame - K;
    out.boxes.assign(static_cast<std::size_t>(K), proposal.boxes.front());
  }
  return out;
}

/// Decode one anticipation wing against the previous refine-time anchors.
inline Tubelet anticipation_wing(const Tubelet& prev_input, const AnticipationOffsets& ant,
                                 int label, Direction dir, int K, const FrameSize& frame) {
  const OffsetSequence& offs = dir == Direction::forward
                                   ? ant.forward[static_cast<std::size_t>(label - 1)]
                                   : ant.backward[static_cast<std::size_t>(label - 1)];
  if (static_cast<int>(offs.size()) != K)
    throw std::invalid_argument("temporal_extend: anticipation length mismatch");
  Tubelet out;
  out.start_frame = dir == Direction::forward ? prev_input.range().end
                                              : prev_input.start_frame - K;
  out.boxes.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const Box& anchor = dir == Direction::forward
                            ? prev_input.box_at(prev_input.range().end - K + k)
                            : prev_input.box_at(prev_input.start_frame + k);
    out.boxes[static_cast<std::size_t>(k)] = anchor.degenerate()
                                                 ? clamp_to_frame(anchor, frame)
                                                 : decode_box(offs[static_cast<std::size_t>(k)],
                                                              anchor, frame);
  }
  return out;
}

inline Tubelet concat(const Tubelet& back, const Tubelet& core, const Tubelet& fwd) {
  Tubelet out;
  out.start_frame = back.start_frame;
  out.boxes.reserve(back.boxes.size() + core.boxes.size() + fwd.boxes.size());
  out.boxes.insert(out.boxes.end(), back.boxes.begin(), back.boxes.end());
  out.boxes.insert(out.boxes.end(), core.boxes.begin(), core.boxes.end());
  out.boxes.insert(out.boxes.end(), fwd.boxes.begin(), fwd.boxes.end());
  return out;
}

}  // namespace detail

/**
 * @brief Grow each proposal by clip_length frames into both adjacent clips.
 *
 * Wings come from linear extrapolation, from decoding the previous step's
 * anticipation offsets, or from replicating the boundary box (cuboid mode).
 * Wings that would leave the video are replaced by boundary-box padding.
 * Anticipation requires the previous step's refine-time inputs and outputs.
 */
inline std::vector<Tubelet> temporal_extend(const std::vector<Tubelet>& proposals,
                                            ExtensionMode mode, int K, const ClipContext& ctx,
                                            const StepRecord* previous = nullptr) {
  if (mode == ExtensionMode::anticipate) {
    if (!previous) throw std::invalid_argument("temporal_extend: anticipation needs the previous step");
    if (previous->inputs.size() != proposals.size())
      throw std::invalid_argument("temporal_extend: previous step size mismatch");
  }
  std::vector<Tubelet> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const Tubelet& p = proposals[i];
    auto wing = [&](Direction dir) {
      const FrameInterval target = dir == Direction::forward
                                       ? FrameInterval{p.range().end, p.range().end + K}
                                       : FrameInterval{p.start_frame - K, p.start_frame};
      if (!ctx.video.contains(target)) return detail::replicate_wing(p, dir, K);
      switch (mode) {
        case ExtensionMode::none:
          return detail::replicate_wing(p, dir, K);
        case ExtensionMode::extrapolate:
          return extrapolate(p, dir, K, ctx.frame);
        case ExtensionMode::anticipate: {
          const RefineOutput& prev_out = previous->outputs[i];
          if (!prev_out.anticipation)
            throw std::invalid_argument("temporal_extend: model emitted no anticipation offsets");
          return detail::anticipation_wing(previous->inputs[i], *prev_out.anticipation,
                                           previous->chosen_class[i], dir, K, ctx.frame);
        }
      }
      return detail::replicate_wing(p, dir, K);
    };
    out.push_back(detail::concat(wing(Direction::backward), p, wing(Direction::forward)));
  }
  return out;
}

/// Full trace of one progressive detection run on a clip.
struct ClipDetections {
  ClipContext ctx;
  std::vector<StepRecord> steps;

  const std::vector<RefineOutput>& final_outputs() const { return steps.back().outputs; }
  const std::vector<Tubelet>& final_tubelets() const { return steps.back().updated; }
};

/**
 * @brief Progressive action detection for one clip: for s = 1..S_max, extend
 * (per schedule), refine with the step-s model, and apply the greedy update.
 */
inline ClipDetections detect_clip(const ClipContext& ctx, const std::vector<Tubelet>& initial,
                                  const StepConfig& cfg,
                                  const std::vector<const RefinementModel*>& models,
                                  std::mt19937_64& rng) {
  cfg.validate();
  if (initial.empty()) throw std::invalid_argument("detect_clip: no initial proposals");
  if (cfg.num_proposals > 0 && static_cast<int>(initial.size()) != cfg.num_proposals)
    throw std::invalid_argument("detect_clip: initial proposal count != num_proposals");
  if (static_cast<int>(models.size()) != cfg.num_steps)
    throw std::invalid_argument("detect_clip: need one model per step");
  if (ctx.clip.length() != cfg.clip_length)
    throw std::invalid_argument("detect_clip: clip length mismatch");
  for (const Tubelet& t : initial)
    if (t.range() != ctx.clip)
      throw std::invalid_argument("detect_clip: initial proposals must cover the target clip");

  ClipDetections result;
  result.ctx = ctx;
  std::vector<Tubelet> proposals = initial;

  for (int s = 1; s <= cfg.num_steps; ++s) {
    StepRecord rec;
    if (cfg.extends_at(s))
      rec.inputs = temporal_extend(proposals, cfg.extension_mode, cfg.clip_length, ctx,
                                   result.steps.empty() ? nullptr : &result.steps.back());
    else
      rec.inputs = proposals;

    const RefinementModel& model = *models[static_cast<std::size_t>(s - 1)];
    rec.outputs.reserve(rec.inputs.size());
    rec.chosen_class.reserve(rec.inputs.size());
    std::vector<Detection> detections;
    detections.reserve(rec.inputs.size());
    for (const Tubelet& p : rec.inputs) {
      rec.outputs.push_back(model.refine(p, rng));
      rec.chosen_class.push_back(best_action_class(rec.outputs.back().detection.probs));
      detections.push_back(rec.outputs.back().detection);
    }
    rec.updated = update_proposals(detections, rec.inputs, ctx.frame);
    proposals = rec.updated;
    result.steps.push_back(std::move(rec));
  }
  return result;
}

}  // namespace step
