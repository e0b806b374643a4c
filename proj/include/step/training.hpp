#pragma once

#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "step/engine.hpp"
#include "step/loss.hpp"
#include "step/model.hpp"
#include "step/seeding.hpp"
#include "step/simulator.hpp"

namespace step {

/// One sampled positive: the proposal, its assigned tube, the class label,
/// and per-frame encoded regression targets.
struct PositiveSample {
  int proposal = 0;
  int gt = -1;
  int label = 0;
  std::vector<std::pair<std::int64_t, OffsetVector>> targets;  // (frame, offset)
};

struct SampleSet {
  std::vector<PositiveSample> positives;
  std::vector<int> negatives;  // proposal indices with background label
};

namespace detail {

/// Weighted draw without replacement, probability proportional to weight;
/// an all-zero pool falls back to uniform.
inline int weighted_draw(std::vector<int>& pool, std::vector<double>& weights,
                         std::mt19937_64& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::size_t pick = 0;
  if (total > 0) {
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    while (pick + 1 < pool.size() && r >= weights[pick]) r -= weights[pick++];
    // guard against fp drift past the last positive weight
    while (weights[pick] <= 0 && pick > 0) --pick;
  } else {
    pick = rng() % pool.size();
  }
  const int chosen = pool[pick];
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(pick));
  return chosen;
}

inline std::vector<std::pair<std::int64_t, OffsetVector>> encode_targets(
    const Tubelet& proposal, const Tubelet& gt, const FrameInterval& video) {
  std::vector<std::pair<std::int64_t, OffsetVector>> out;
  for (std::int64_t f = proposal.start_frame; f < proposal.range().end; ++f) {
    if (!video.contains(f)) continue;  // padding frames carry no loss
    const Box& anchor = proposal.box_at(f);
    const Box& target = gt.box_at_or_nearest(f);
    if (anchor.degenerate() || target.degenerate()) continue;
    out.push_back({f, encode_box(target, anchor)});
  }
  return out;
}

}  // namespace detail

/**
 * @brief Hard-aware sample assignment for one step.
 *
 * Each ground-truth tube intersecting the target clip claims its
 * highest-overlap proposal as a forced positive; remaining proposals with
 * overlap above tau join the positive pool and the rest the negative pool.
 * Both pools are then sampled without replacement with probability
 * proportional to the given scores (best overlap at step 1, the previous
 * step's peak action score later). Every positive is assigned its
 * highest-overlap tube; targets encode that tube against the proposal.
 */
inline SampleSet assign_and_sample(const std::vector<Tubelet>& proposals,
                                   const std::vector<GroundTruthTube>& gt,
                                   const ClipContext& ctx, const std::vector<double>& scores,
                                   double tau, int num_positives, int num_negatives,
                                   std::mt19937_64& rng) {
  if (scores.size() != proposals.size())
    throw std::invalid_argument("assign_and_sample: score count mismatch");

  const std::size_t M = proposals.size();
  std::vector<std::vector<double>> overlap(M, std::vector<double>(gt.size(), 0.0));
  std::vector<double> best_overlap(M, 0.0);
  std::vector<int> best_gt(M, -1);
  std::vector<int> live_tubes;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (gt[j].tubelet.range().intersect(ctx.clip).empty()) continue;
    live_tubes.push_back(static_cast<int>(j));
    for (std::size_t i = 0; i < M; ++i) {
      overlap[i][j] = clip_overlap(proposals[i], gt[j].tubelet, ctx.clip);
      if (best_gt[i] < 0 || overlap[i][j] > best_overlap[i]) {
        best_gt[i] = static_cast<int>(j);
        best_overlap[i] = overlap[i][j];
      }
    }
  }

  SampleSet out;
  std::vector<bool> is_positive(M, false);

  // Forced positives: tubes claim proposals in descending best-overlap order
  // so a proposal backs at most one tube.
  std::vector<std::pair<double, int>> tube_order;
  for (int j : live_tubes) {
    double best = -1;
    for (std::size_t i = 0; i < M; ++i) best = std::max(best, overlap[i][static_cast<std::size_t>(j)]);
    tube_order.push_back({best, j});
  }
  std::sort(tube_order.begin(), tube_order.end(),
            [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  for (const auto& [unused, j] : tube_order) {
    int claim = -1;
    for (std::size_t i = 0; i < M; ++i) {
      if (is_positive[i]) continue;
      if (claim < 0 || overlap[i][static_cast<std::size_t>(j)] >
                           overlap[static_cast<std::size_t>(claim)][static_cast<std::size_t>(j)])
        claim = static_cast<int>(i);
    }
    if (claim < 0) continue;  // more tubes than proposals
    is_positive[static_cast<std::size_t>(claim)] = true;
    PositiveSample sample;
    sample.proposal = claim;
    sample.gt = j;
    sample.label = gt[static_cast<std::size_t>(j)].label;
    sample.targets = detail::encode_targets(proposals[static_cast<std::size_t>(claim)],
                                            gt[static_cast<std::size_t>(j)].tubelet, ctx.video);
    out.positives.push_back(std::move(sample));
  }

  // Remaining pools by the tau threshold.
  std::vector<int> pos_pool, neg_pool;
  std::vector<double> pos_w, neg_w;
  for (std::size_t i = 0; i < M; ++i) {
    if (is_positive[i]) continue;
    if (best_gt[i] >= 0 && best_overlap[i] > tau) {
      pos_pool.push_back(static_cast<int>(i));
      pos_w.push_back(scores[i]);
    } else {
      neg_pool.push_back(static_cast<int>(i));
      neg_w.push_back(scores[i]);
    }
  }

  while (static_cast<int>(out.positives.size()) < num_positives && !pos_pool.empty()) {
    const int i = detail::weighted_draw(pos_pool, pos_w, rng);
    PositiveSample sample;
    sample.proposal = i;
    sample.gt = best_gt[static_cast<std::size_t>(i)];
    sample.label = gt[static_cast<std::size_t>(sample.gt)].label;
    sample.targets = detail::encode_targets(proposals[static_cast<std::size_t>(i)],
                                            gt[static_cast<std::size_t>(sample.gt)].tubelet,
                                            ctx.video);
    out.positives.push_back(std::move(sample));
  }
  while (static_cast<int>(out.negatives.size()) < num_negatives && !neg_pool.empty())
    out.negatives.push_back(detail::weighted_draw(neg_pool, neg_w, rng));

  return out;
}

/// Peak action-class probability; the hardness score of a would-be negative.
inline double max_action_score(const std::vector<double>& probs) {
  double best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) best = std::max(best, probs[c]);
  return best;
}

/**
 * @brief Multi-task loss over a sampled set: cross-entropy over positives and
 * negatives, plus lambda-weighted localization and gamma-weighted
 * anticipation terms over positives.
 */
inline LossBreakdown multi_task_loss(const std::vector<RefineOutput>& outputs,
                                     const std::vector<Tubelet>& proposals,
                                     const std::vector<GroundTruthTube>& gt,
                                     const SampleSet& samples, const ClipContext& ctx,
                                     double lambda, double gamma) {
  LossBreakdown total;
  for (int i : samples.negatives)
    total.cls += cross_entropy(outputs[static_cast<std::size_t>(i)].detection.probs, 0,
                               &total.clamped);

  for (const PositiveSample& s : samples.positives) {
    const RefineOutput& out = outputs[static_cast<std::size_t>(s.proposal)];
    const Tubelet& proposal = proposals[static_cast<std::size_t>(s.proposal)];
    total.cls += cross_entropy(out.detection.probs, s.label, &total.clamped);

    if (!s.targets.empty()) {
      const OffsetSequence& pred = out.detection.offsets[static_cast<std::size_t>(s.label - 1)];
      double raw = 0;
      for (const auto& [frame, target] : s.targets)
        raw += smooth_l1_offset(pred[static_cast<std::size_t>(frame - proposal.start_frame)],
                                target);
      total.loc += lambda * raw / static_cast<double>(s.targets.size());
    }

    if (gamma != 0 && out.anticipation) {
      const Tubelet& tube = gt[static_cast<std::size_t>(s.gt)].tubelet;
      const int K = static_cast<int>(
          out.anticipation->forward[static_cast<std::size_t>(s.label - 1)].size());
      for (Direction dir : {Direction::backward, Direction::forward}) {
        const OffsetSequence& pred =
            dir == Direction::forward
                ? out.anticipation->forward[static_cast<std::size_t>(s.label - 1)]
                : out.anticipation->backward[static_cast<std::size_t>(s.label - 1)];
        double raw = 0;
        int counted = 0;
        for (int k = 0; k < K; ++k) {
          const std::int64_t frame = dir == Direction::forward ? proposal.range().end + k
                                                               : proposal.start_frame - K + k;
          if (!ctx.video.contains(frame)) continue;
          const Box& anchor = dir == Direction::forward
                                  ? proposal.box_at(proposal.range().end - K + k)
                                  : proposal.box_at(proposal.start_frame + k);
          const Box& target = tube.box_at_or_nearest(frame);
          if (anchor.degenerate() || target.degenerate()) continue;
          raw += smooth_l1_offset(pred[static_cast<std::size_t>(k)], encode_box(target, anchor));
          ++counted;
        }
        if (counted > 0) total.anticipation += gamma * raw / counted;
      }
    }
  }
  return total;
}

/// One clip of training data.
struct TrainClip {
  ClipContext ctx;
  std::shared_ptr<const Scene> scene;
  std::vector<Tubelet> initial;
};

struct TrainReport {
  std::vector<LossBreakdown> per_step;
  LossBreakdown total;
};

namespace detail {

/// Anticipation targets for one positive against its assigned tube, in the
/// [0, K) head indexing that head_loss_and_gradients expects.
inline void fill_anticipation_targets(const Tubelet& proposal, const Tubelet& tube, int K,
                                      const FrameInterval& video, SampleTarget* target) {
  for (int k = 0; k < K; ++k) {
    const std::int64_t back_frame = proposal.start_frame - K + k;
    const std::int64_t fwd_frame = proposal.range().end + k;
    const Box& back_anchor = proposal.box_at(proposal.start_frame + k);
    const Box& fwd_anchor = proposal.box_at(proposal.range().end - K + k);
    if (video.contains(back_frame) && !back_anchor.degenerate()) {
      const Box& t = tube.box_at_or_nearest(back_frame);
      if (!t.degenerate()) target->ant_back.push_back({k, encode_box(t, back_anchor)});
    }
    if (video.contains(fwd_frame) && !fwd_anchor.degenerate()) {
      const Box& t = tube.box_at_or_nearest(fwd_frame);
      if (!t.degenerate()) target->ant_fwd.push_back({k, encode_box(t, fwd_anchor)});
    }
  }
}

}  // namespace detail

/**
 * @brief One joint training pass over a batch of clips.
 *
 * Runs the multi-step inference pass with the current heads to materialize
 * every step's refine-time inputs, samples positives and negatives per step
 * with the step's tau, accumulates the losses of all steps, and applies a
 * single gradient-descent update per head.
 */
inline TrainReport joint_train_pass(const std::vector<TrainClip>& batch, const StepConfig& cfg,
                                    std::vector<LinearHead>& heads, double feature_noise,
                                    double learning_rate, std::mt19937_64& rng) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("joint_train_pass: empty batch");
  if (static_cast<int>(heads.size()) != cfg.num_steps)
    throw std::invalid_argument("joint_train_pass: need one head per step");

  TrainReport report;
  report.per_step.assign(static_cast<std::size_t>(cfg.num_steps), LossBreakdown{});
  std::vector<HeadGradients> grads;
  grads.reserve(heads.size());
  for (const LinearHead& h : heads) grads.push_back(HeadGradients::zeros_like(h));

  for (const TrainClip& clip : batch) {
    std::vector<LinearModel> models;
    std::vector<const RefinementModel*> model_ptrs;
    models.reserve(heads.size());
    for (LinearHead& h : heads)
      models.emplace_back(&h, make_feature_fn(clip.scene, feature_noise));
    for (const LinearModel& m : models) model_ptrs.push_back(&m);

    std::mt19937_64 clip_rng(rng());
    const ClipDetections trace = detect_clip(clip.ctx, clip.initial, cfg, model_ptrs, clip_rng);

    for (int s = 1; s <= cfg.num_steps; ++s) {
      const StepRecord& rec = trace.steps[static_cast<std::size_t>(s - 1)];
      std::vector<double> scores(rec.inputs.size(), 0.0);
      if (s == 1) {
        for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
          double best = 0;
          for (const GroundTruthTube& t : clip.scene->tubes)
            best = std::max(best, clip_overlap(rec.inputs[i], t.tubelet, clip.ctx.clip));
          scores[i] = best;
        }
      } else {
        const StepRecord& prev = trace.steps[static_cast<std::size_t>(s - 2)];
        for (std::size_t i = 0; i < rec.inputs.size(); ++i)
          scores[i] = max_action_score(prev.outputs[i].detection.probs);
      }

      const SampleSet samples = assign_and_sample(
          rec.inputs, clip.scene->tubes, clip.ctx, scores, cfg.tau[static_cast<std::size_t>(s - 1)],
          cfg.num_positive_samples, cfg.num_negative_samples, clip_rng);

      std::vector<FeatureVector> xs;
      std::vector<SampleTarget> targets;
      const bool train_anticipation = cfg.emits_anticipation_at(s);
      for (const PositiveSample& p : samples.positives) {
        std::mt19937_64 feat_rng(clip_rng());
        xs.push_back(synth_features(rec.inputs[static_cast<std::size_t>(p.proposal)],
                                    *clip.scene, feature_noise, feat_rng));
        SampleTarget t;
        t.label = p.label;
        for (const auto& [frame, off] : p.targets)
          t.loc.push_back({static_cast<int>(frame - rec.inputs[static_cast<std::size_t>(p.proposal)]
                                                        .start_frame),
                           off});
        if (train_anticipation)
          detail::fill_anticipation_targets(
              rec.inputs[static_cast<std::size_t>(p.proposal)],
              clip.scene->tubes[static_cast<std::size_t>(p.gt)].tubelet, cfg.clip_length,
              clip.ctx.video, &t);
        targets.push_back(std::move(t));
      }
      for (int i : samples.negatives) {
        std::mt19937_64 feat_rng(clip_rng());
        xs.push_back(synth_features(rec.inputs[static_cast<std::size_t>(i)], *clip.scene,
                                    feature_noise, feat_rng));
        targets.push_back(SampleTarget{});
      }

      const LossBreakdown step_loss = head_loss_and_gradients(
          heads[static_cast<std::size_t>(s - 1)], xs, targets, cfg.lambda,
          train_anticipation ? cfg.gamma : 0.0, &grads[static_cast<std::size_t>(s - 1)]);
      LossBreakdown& agg = report.per_step[static_cast<std::size_t>(s - 1)];
      agg.cls += step_loss.cls;
      agg.loc += step_loss.loc;
      agg.anticipation += step_loss.anticipation;
      agg.clamped += step_loss.clamped;
    }
  }

  for (std::size_t s = 0; s < heads.size(); ++s)
    apply_gradients(heads[s], grads[s], learning_rate);

  for (const LossBreakdown& b : report.per_step) {
    report.total.cls += b.cls;
    report.total.loc += b.loc;
    report.total.anticipation += b.anticipation;
    report.total.clamped += b.clamped;
  }
  return report;
}

/// Heads sized for every step of the config against the given scene class count.
inline std::vector<LinearHead> make_heads(const StepConfig& cfg, int num_classes,
                                          std::mt19937_64& rng, double init_scale = 0.0) {
  std::vector<LinearHead> heads;
  for (int s = 1; s <= cfg.num_steps; ++s) {
    const int frames = cfg.length_at_step(s);
    const int ant = cfg.emits_anticipation_at(s) ? cfg.clip_length : 0;
    if (init_scale > 0)
      heads.push_back(LinearHead::random(feature_dim(frames, num_classes), num_classes, frames,
                                         ant, rng, init_scale));
    else
      heads.push_back(LinearHead::zeros(feature_dim(frames, num_classes), num_classes, frames, ant));
  }
  return heads;
}

}  // namespace step
