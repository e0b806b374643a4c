#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "step/geometry.hpp"
#include "step/loss.hpp"

namespace step {

/// Fixed-width real vector summarizing proposal geometry and clip content.
using FeatureVector = std::vector<double>;

/**
 * @brief Classification distribution plus class-specific regression offsets.
 *
 * probs has C+1 entries with index 0 = background; offsets has one
 * per-frame sequence per action class (background carries no regression).
 */
struct Detection {
  std::vector<double> probs;
  std::vector<OffsetSequence> offsets;  // [C][frames]

  int num_classes() const { return static_cast<int>(offsets.size()); }
};

/**
 * @brief Residual location anticipation for the two adjacent clips.
 *
 * Offsets are aligned with the proposal's boundary slices: the k-th backward
 * offset decodes against the proposal box K frames after the predicted frame,
 * the k-th forward offset against the box K frames before it. With zero
 * residual heads the anticipated boxes coincide with the decoded boundary
 * slices of the main regression.
 */
struct AnticipationOffsets {
  std::vector<OffsetSequence> backward;  // [C][K]
  std::vector<OffsetSequence> forward;   // [C][K]
};

struct RefineOutput {
  Detection detection;
  std::optional<AnticipationOffsets> anticipation;
};

/// Ties regression/classification outputs to proposals; one instance per step.
class RefinementModel {
 public:
  virtual ~RefinementModel() = default;
  virtual RefineOutput refine(const Tubelet& proposal, std::mt19937_64& rng) const = 0;
  virtual int num_classes() const = 0;
};

inline double uniform_noise(std::mt19937_64& rng, double half_width) {
  if (half_width <= 0) return 0.0;
  std::uniform_real_distribution<double> u(-half_width, half_width);
  return u(rng);
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double zmax = logits.front();
  for (double z : logits) zmax = std::max(zmax, z);
  std::vector<double> out(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - zmax);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

/**
 * @brief Ground-truth-reading stand-in for the refinement network.
 *
 * Regression offsets encode each class's best-overlap tube against the
 * proposal, perturbed by zero-mean uniform noise; classification logits are
 * proportional to per-class best overlaps, with the background logit driven
 * by 1 - max overlap. Deterministic given the rng state.
 */
class OracleModel : public RefinementModel {
 public:
  OracleModel(std::vector<GroundTruthTube> gt, int num_classes, FrameSize frame,
              double noise_half_width = 0.0, double sharpness = 8.0,
              int anticipation_frames = 0)
      : gt_(std::move(gt)),
        num_classes_(num_classes),
        frame_(frame),
        noise_(noise_half_width),
        sharpness_(sharpness),
        anticipation_frames_(anticipation_frames) {
    for (const auto& tube : gt_)
      if (tube.label < 1 || tube.label > num_classes_)
        throw std::invalid_argument("OracleModel: gt label out of range");
  }

  int num_classes() const override { return num_classes_; }

  RefineOutput refine(const Tubelet& proposal, std::mt19937_64& rng) const override {
    const int C = num_classes_;
    RefineOutput out;
    out.detection.probs.assign(static_cast<std::size_t>(C) + 1, 0.0);
    out.detection.offsets.assign(static_cast<std::size_t>(C),
                                 OffsetSequence(proposal.boxes.size()));

    if (gt_.empty()) {
      out.detection.probs[0] = 1.0;
      if (anticipation_frames_ > 0) out.anticipation = zero_anticipation();
      return out;
    }

    // Best tube per class by mean IoU over the proposal's own coverage.
    // Classes with no tube of their own regress toward the overall best tube
    // so every class's output decodes to a ground-truth location.
    std::vector<int> best(static_cast<std::size_t>(C), -1);
    std::vector<double> best_ov(static_cast<std::size_t>(C), 0.0);
    int overall = -1;
    double overall_ov = 0;
    for (std::size_t j = 0; j < gt_.size(); ++j) {
      const double ov = clip_overlap(proposal, gt_[j].tubelet, proposal.range());
      const int c = gt_[j].label - 1;
      if (best[c] < 0 || ov > best_ov[c]) {
        best[c] = static_cast<int>(j);
        best_ov[c] = ov;
      }
      if (overall < 0 || ov > overall_ov) {
        overall = static_cast<int>(j);
        overall_ov = ov;
      }
    }

    std::vector<double> logits(static_cast<std::size_t>(C) + 1, 0.0);
    double max_ov = 0;
    for (int c = 0; c < C; ++c) {
      logits[static_cast<std::size_t>(c) + 1] = sharpness_ * best_ov[c];
      max_ov = std::max(max_ov, best_ov[c]);
    }
    logits[0] = sharpness_ * (1.0 - max_ov);
    out.detection.probs = softmax(logits);

    for (int c = 0; c < C; ++c) {
      const int tube = best[c] >= 0 ? best[c] : overall;
      const Tubelet& target = gt_[static_cast<std::size_t>(tube)].tubelet;
      OffsetSequence& offs = out.detection.offsets[static_cast<std::size_t>(c)];
      for (std::int64_t f = proposal.start_frame; f < proposal.range().end; ++f) {
        offs[static_cast<std::size_t>(f - proposal.start_frame)] =
            noisy_encode(target.box_at_or_nearest(f), proposal.box_at(f), rng);
      }
    }

    if (anticipation_frames_ > 0) {
      const int K = anticipation_frames_;
      if (proposal.length() < K)
        throw std::invalid_argument("OracleModel: proposal shorter than anticipation length");
      AnticipationOffsets ant = zero_anticipation();
      for (int c = 0; c < C; ++c) {
        const int tube = best[c] >= 0 ? best[c] : overall;
        const Tubelet& target = gt_[static_cast<std::size_t>(tube)].tubelet;
        for (int k = 0; k < K; ++k) {
          const std::int64_t back_frame = proposal.start_frame - K + k;
          const std::int64_t fwd_frame = proposal.range().end + k;
          ant.backward[c][k] = noisy_encode(target.box_at_or_nearest(back_frame),
                                            proposal.box_at(proposal.start_frame + k), rng);
          ant.forward[c][k] = noisy_encode(target.box_at_or_nearest(fwd_frame),
                                           proposal.box_at(proposal.range().end - K + k), rng);
        }
      }
      out.anticipation = std::move(ant);
    }
    return out;
  }

 private:
  AnticipationOffsets zero_anticipation() const {
    AnticipationOffsets ant;
    ant.backward.assign(static_cast<std::size_t>(num_classes_),
                        OffsetSequence(static_cast<std::size_t>(anticipation_frames_)));
    ant.forward = ant.backward;
    return ant;
  }

  OffsetVector noisy_encode(const Box& target, const Box& anchor, std::mt19937_64& rng) const {
    if (anchor.degenerate() || target.degenerate()) return {};
    OffsetVector off = encode_box(target, anchor);
    off.tx += uniform_noise(rng, noise_);
    off.ty += uniform_noise(rng, noise_);
    off.tw += uniform_noise(rng, noise_);
    off.th += uniform_noise(rng, noise_);
    return off;
  }

  std::vector<GroundTruthTube> gt_;
  int num_classes_;
  FrameSize frame_;
  double noise_;
  double sharpness_;
  int anticipation_frames_;
};

/**
 * @brief Parameters of one step's trainable head.
 *
 * Row-major weight layout; the regression row for (class c, frame k,
 * component j) is ((c * num_frames) + k) * 4 + j, and the two anticipation
 * regressors use the same layout over anticipation_frames.
 */
struct LinearHead {
  int feature_dim = 0;
  int num_classes = 0;         // C action classes; logits add one background row
  int num_frames = 0;          // regression frames (proposal length at this step)
  int anticipation_frames = 0; // 0 disables the anticipation regressors

  std::vector<double> w_cls, b_cls;
  std::vector<double> w_reg, b_reg;
  std::vector<double> w_ant_back, b_ant_back;
  std::vector<double> w_ant_fwd, b_ant_fwd;

  static LinearHead zeros(int feature_dim, int num_classes, int num_frames,
                          int anticipation_frames = 0) {
    LinearHead h;
    h.feature_dim = feature_dim;
    h.num_classes = num_classes;
    h.num_frames = num_frames;
    h.anticipation_frames = anticipation_frames;
    const std::size_t d = static_cast<std::size_t>(feature_dim);
    const std::size_t cls_rows = static_cast<std::size_t>(num_classes) + 1;
    const std::size_t reg_rows = static_cast<std::size_t>(num_classes) * num_frames * 4;
    const std::size_t ant_rows = static_cast<std::size_t>(num_classes) * anticipation_frames * 4;
    h.w_cls.assign(cls_rows * d, 0.0);
    h.b_cls.assign(cls_rows, 0.0);
    h.w_reg.assign(reg_rows * d, 0.0);
    h.b_reg.assign(reg_rows, 0.0);
    h.w_ant_back.assign(ant_rows * d, 0.0);
    h.b_ant_back.assign(ant_rows, 0.0);
    h.w_ant_fwd.assign(ant_rows * d, 0.0);
    h.b_ant_fwd.assign(ant_rows, 0.0);
    return h;
  }

  static LinearHead random(int feature_dim, int num_classes, int num_frames,
                           int anticipation_frames, std::mt19937_64& rng, double scale = 0.1) {
    LinearHead h = zeros(feature_dim, num_classes, num_frames, anticipation_frames);
    std::normal_distribution<double> n(0.0, scale);
    for (auto* v : {&h.w_cls, &h.b_cls, &h.w_reg, &h.b_reg, &h.w_ant_back, &h.b_ant_back,
                    &h.w_ant_fwd, &h.b_ant_fwd})
      for (double& p : *v) p = n(rng);
    return h;
  }

  std::size_t reg_index(int c, int k, int j) const {
    return (static_cast<std::size_t>(c) * num_frames + k) * 4 + static_cast<std::size_t>(j);
  }
  std::size_t ant_index(int c, int k, int j) const {
    return (static_cast<std::size_t>(c) * anticipation_frames + k) * 4 +
           static_cast<std::size_t>(j);
  }
};

namespace detail {

inline std::vector<double> affine(const std::vector<double>& w, const std::vector<double>& b,
                                  const FeatureVector& x) {
  std::vector<double> out(b);
  const std::size_t d = x.size();
  for (std::size_t r = 0; r < b.size(); ++r) {
    double acc = 0;
    const double* row = w.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * x[i];
    out[r] += acc;
  }
  return out;
}

inline OffsetVector offset_at(const std::vector<double>& flat, std::size_t base) {
  return {flat[base], flat[base + 1], flat[base + 2], flat[base + 3]};
}

}  // namespace detail

struct LinearForward {
  Detection detection;
  AnticipationOffsets anticipation;             // valid when anticipation_frames > 0
  std::vector<OffsetSequence> residual_back;    // raw anticipation-head outputs
  std::vector<OffsetSequence> residual_fwd;
  std::vector<double> logits;
};

/// Forward pass: logits, softmax distribution, per-class regression offsets,
/// and anticipated offsets composed as main slice + residual.
inline LinearForward linear_forward(const LinearHead& head, const FeatureVector& x) {
  if (static_cast<int>(x.size()) != head.feature_dim)
    throw std::invalid_argument("linear_forward: feature width mismatch");
  const int C = head.num_classes, F = head.num_frames, K = head.anticipation_frames;
  if (K > 0 && F < K)
    throw std::invalid_argument("linear_forward: fewer regression frames than anticipation frames");

  LinearForward out;
  out.logits = detail::affine(head.w_cls, head.b_cls, x);
  out.detection.probs = softmax(out.logits);

  const std::vector<double> reg = detail::affine(head.w_reg, head.b_reg, x);
  out.detection.offsets.assign(static_cast<std::size_t>(C), OffsetSequence(static_cast<std::size_t>(F)));
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < F; ++k)
      out.detection.offsets[c][k] = detail::offset_at(reg, head.reg_index(c, k, 0));

  if (K > 0) {
    const std::vector<double> raw_back = detail::affine(head.w_ant_back, head.b_ant_back, x);
    const std::vector<double> raw_fwd = detail::affine(head.w_ant_fwd, head.b_ant_fwd, x);
    out.residual_back.assign(static_cast<std::size_t>(C), OffsetSequence(static_cast<std::size_t>(K)));
    out.residual_fwd = out.residual_back;
    out.anticipation.backward = out.residual_back;
    out.anticipation.forward = out.residual_back;
    for (int c = 0; c < C; ++c)
      for (int k = 0; k < K; ++k) {
        const OffsetVector rb = detail::offset_at(raw_back, head.ant_index(c, k, 0));
        const OffsetVector rf = detail::offset_at(raw_fwd, head.ant_index(c, k, 0));
        const OffsetVector& first = out.detection.offsets[c][static_cast<std::size_t>(k)];
        const OffsetVector& last = out.detection.offsets[c][static_cast<std::size_t>(F - K + k)];
        out.residual_back[c][k] = rb;
        out.residual_fwd[c][k] = rf;
        out.anticipation.backward[c][k] = {first.tx + rb.tx, first.ty + rb.ty,
                                           first.tw + rb.tw, first.th + rb.th};
        out.anticipation.forward[c][k] = {last.tx + rf.tx, last.ty + rf.ty,
                                          last.tw + rf.tw, last.th + rf.th};
      }
  }
  return out;
}

/**
 * @brief Loss targets for one sampled proposal.
 *
 * loc pairs index regression frames in [0, num_frames); anticipation pairs
 * index [0, anticipation_frames). Padding frames are simply absent.
 */
struct SampleTarget {
  int label = 0;  // 0 = background
  std::vector<std::pair<int, OffsetVector>> loc;
  std::vector<std::pair<int, OffsetVector>> ant_back;
  std::vector<std::pair<int, OffsetVector>> ant_fwd;
};

struct HeadGradients {
  std::vector<double> w_cls, b_cls, w_reg, b_reg, w_ant_back, b_ant_back, w_ant_fwd, b_ant_fwd;

  static HeadGradients zeros_like(const LinearHead& h) {
    HeadGradients g;
    g.w_cls.assign(h.w_cls.size(), 0.0);
    g.b_cls.assign(h.b_cls.size(), 0.0);
    g.w_reg.assign(h.w_reg.size(), 0.0);
    g.b_reg.assign(h.b_reg.size(), 0.0);
    g.w_ant_back.assign(h.w_ant_back.size(), 0.0);
    g.b_ant_back.assign(h.b_ant_back.size(), 0.0);
    g.w_ant_fwd.assign(h.w_ant_fwd.size(), 0.0);
    g.b_ant_fwd.assign(h.b_ant_fwd.size(), 0.0);
    return g;
  }
};

struct LossBreakdown {
  double cls = 0, loc = 0, anticipation = 0;
  int clamped = 0;
  double total() const { return cls + loc + anticipation; }
};

namespace detail {

inline void rank_one_update(std::vector<double>& w, std::vector<double>& b, std::size_t row,
                            double g, const FeatureVector& x) {
  if (g == 0) return;
  double* wrow = w.data() + row * x.size();
  for (std::size_t i = 0; i < x.size(); ++i) wrow[i] += g * x[i];
  b[row] += g;
}

inline void offset_loss_grads(const OffsetVector& pred, const OffsetVector& target, double coef,
                              double* loss, double grad_out[4]) {
  const double d[4] = {pred.tx - target.tx, pred.ty - target.ty, pred.tw - target.tw,
                       pred.th - target.th};
  for (int j = 0; j < 4; ++j) {
    *loss += smooth_l1(d[j]);
    grad_out[j] = coef * smooth_l1_grad(d[j]);
  }
}

}  // namespace detail

/**
 * @brief Total loss and analytic parameter gradients for one head over a
 * batch of (features, target) samples.
 *
 * Cross-entropy runs over every sample; the localization term (weight
 * lambda) and the anticipation term (weight gamma) run over positives only.
 * Pass nullptr to skip gradient accumulation.
 */
inline LossBreakdown head_loss_and_gradients(const LinearHead& head,
                                             const std::vector<FeatureVector>& xs,
                                             const std::vector<SampleTarget>& targets,
                                             double lambda, double gamma,
                                             HeadGradients* grads) {
  if (xs.size() != targets.size())
    throw std::invalid_argument("head_loss_and_gradients: sample count mismatch");
  LossBreakdown total;
  const int F = head.num_frames, K = head.anticipation_frames;

  for (std::size_t s = 0; s < xs.size(); ++s) {
    const FeatureVector& x = xs[s];
    const SampleTarget& t = targets[s];
    const LinearForward fwd = linear_forward(head, x);

    total.cls += cross_entropy(fwd.detection.probs, t.label, &total.clamped);
    if (grads) {
      for (std::size_t r = 0; r < fwd.detection.probs.size(); ++r) {
        const double g = fwd.detection.probs[r] - (static_cast<int>(r) == t.label ? 1.0 : 0.0);
        detail::rank_one_update(grads->w_cls, grads->b_cls, r, g, x);
      }
    }

    if (t.label == 0) continue;
    const int c = t.label - 1;
    std::vector<double> dreg;  // accumulated d(loss)/d(regression output)
    if (grads) dreg.assign(head.b_reg.size(), 0.0);

    if (!t.loc.empty()) {
      const double coef = lambda / static_cast<double>(t.loc.size());
      double raw = 0;
      for (const auto& [k, target] : t.loc) {
        double g[4];
        detail::offset_loss_grads(fwd.detection.offsets[c][static_cast<std::size_t>(k)], target,
                                  coef, &raw, g);
        if (grads)
          for (int j = 0; j < 4; ++j) dreg[head.reg_index(c, k, j)] += g[j];
      }
      total.loc += lambda * raw / static_cast<double>(t.loc.size());
    }

    if (K > 0 && gamma != 0) {
      if (!t.ant_back.empty()) {
        const double coef = gamma / static_cast<double>(t.ant_back.size());
        double raw = 0;
        for (const auto& [k, target] : t.ant_back) {
          double g[4];
          detail::offset_loss_grads(fwd.anticipation.backward[c][static_cast<std::size_t>(k)],
                                    target, coef, &raw, g);
          if (grads)
            for (int j = 0; j < 4; ++j) {
              dreg[head.reg_index(c, k, j)] += g[j];
              detail::rank_one_update(grads->w_ant_back, grads->b_ant_back,
                                      head.ant_index(c, k, j), g[j], x);
            }
        }
        total.anticipation += gamma * raw / static_cast<double>(t.ant_back.size());
      }
      if (!t.ant_fwd.empty()) {
        const double coef = gamma / static_cast<double>(t.ant_fwd.size());
        double raw = 0;
        for (const auto& [k, target] : t.ant_fwd) {
          double g[4];
          detail::offset_loss_grads(fwd.anticipation.forward[c][static_cast<std::size_t>(k)],
                                    target, coef, &raw, g);
          if (grads)
            for (int j = 0; j < 4; ++j) {
              dreg[head.reg_index(c, F - K + k, j)] += g[j];
              detail::rank_one_update(grads->w_ant_fwd, grads->b_ant_fwd,
                                      head.ant_index(c, k, j), g[j], x);
            }
        }
        total.anticipation += gamma * raw / static_cast<double>(t.ant_fwd.size());
      }
    }

    if (grads) {
      for (std::size_t r = 0; r < dreg.size(); ++r)
        detail::rank_one_update(grads->w_reg, grads->b_reg, r, dreg[r], x);
    }
  }
  return total;
}

/// One plain gradient-descent step over every head parameter.
inline void apply_gradients(LinearHead& head, const HeadGradients& grads, double learning_rate) {
  auto update = [learning_rate](std::vector<double>& p, const std::vector<double>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g[i];
  };
  update(head.w_cls, grads.w_cls);
  update(head.b_cls, grads.b_cls);
  update(head.w_reg, grads.w_reg);
  update(head.b_reg, grads.b_reg);
  update(head.w_ant_back, grads.w_ant_back);
  update(head.b_ant_back, grads.b_ant_back);
  update(head.w_ant_fwd, grads.w_ant_fwd);
  update(head.b_ant_fwd, grads.b_ant_fwd);
}

/// Feature access for trainable models; the rng carries any feature noise.
using FeatureFn = std::function<FeatureVector(const Tubelet&, std::mt19937_64&)>;

/// RefinementModel view over a LinearHead. Non-owning: training updates the
/// head in place between inference passes.
class LinearModel : public RefinementModel {
 public:
  LinearModel(const LinearHead* head, FeatureFn features)
      : head_(head), features_(std::move(features)) {
    if (!head_) throw std::invalid_argument("LinearModel: null head");
  }

  int num_classes() const override { return head_->num_classes; }

  RefineOutput refine(const Tubelet& proposal, std::mt19937_64& rng) const override {
    if (proposal.length() != head_->num_frames)
      throw std::invalid_argument("LinearModel: proposal length does not match head");
    LinearForward fwd = linear_forward(*head_, features_(proposal, rng));
    RefineOutput out;
    out.detection = std::move(fwd.detection);
    if (head_->anticipation_frames > 0) out.anticipation = std::move(fwd.anticipation);
    return out;
  }

 private:
  const LinearHead* head_;
  FeatureFn features_;
};

}  // namespace step
