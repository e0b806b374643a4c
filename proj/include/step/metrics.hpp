#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "step/geometry.hpp"
#include "step/model.hpp"

namespace step {

struct FrameDetection {
  std::string video;
  std::int64_t frame = 0;
  int label = 0;  // action class, 1-based
  double score = 0;
  Box box;
};

struct FrameGroundTruth {
  std::string video;
  std::int64_t frame = 0;
  int label = 0;
  Box box;
};

struct ClassAP {
  int label = 0;
  double ap = 0;
  int num_gt = 0;
  int num_detections = 0;
};

struct EvalResult {
  std::vector<ClassAP> per_class;  // classes with at least one gt, ascending label
  double mean_ap = 0;
};

namespace detail {

/// All-points average precision from ranked hit flags.
inline double average_precision(const std::vector<bool>& is_tp, int num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (bool hit : is_tp) {
    hit ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / num_gt);
  }
  // precision envelope: max precision at any recall >= r
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

/// Generic ranked matcher: detections sorted by score (descending, stable),
/// each greedily matched to its best-overlap unmatched ground truth at or
/// above the threshold.
template <typename Det, typename Gt, typename OverlapFn>
EvalResult ranked_eval(const std::vector<Det>& detections, const std::vector<Gt>& gts,
                       double threshold, OverlapFn&& overlap) {
  std::map<int, std::vector<std::size_t>> dets_by_class, gts_by_class;
  for (std::size_t i = 0; i < detections.size(); ++i)
    dets_by_class[detections[i].label].push_back(i);
  for (std::size_t j = 0; j < gts.size(); ++j) gts_by_class[gts[j].label].push_back(j);

  EvalResult result;
  double ap_sum = 0;
  for (const auto& [label, gt_idx] : gts_by_class) {
    ClassAP entry;
    entry.label = label;
    entry.num_gt = static_cast<int>(gt_idx.size());

    std::vector<std::size_t> det_idx;
    if (auto it = dets_by_class.find(label); it != dets_by_class.end()) det_idx = it->second;
    std::stable_sort(det_idx.begin(), det_idx.end(), [&](std::size_t a, std::size_t b) {
      return detections[a].score > detections[b].score;
    });
    entry.num_detections = static_cast<int>(det_idx.size());

    std::vector<bool> gt_used(gt_idx.size(), false);
    std::vector<bool> is_tp;
    is_tp.reserve(det_idx.size());
    for (std::size_t d : det_idx) {
      int best = -1;
      double best_ov = 0;
      for (std::size_t g = 0; g < gt_idx.size(); ++g) {
        if (gt_used[g]) continue;
        const double ov = overlap(detections[d], gts[gt_idx[g]]);
        if (ov >= threshold && (best < 0 || ov > best_ov)) {
          best = static_cast<int>(g);
          best_ov = ov;
        }
      }
      if (best >= 0) {
        gt_used[static_cast<std::size_t>(best)] = true;
        is_tp.push_back(true);
      } else {
        is_tp.push_back(false);
      }
    }
    entry.ap = average_precision(is_tp, entry.num_gt);
    ap_sum += entry.ap;
    result.per_class.push_back(entry);
  }
  result.mean_ap = result.per_class.empty() ? 0.0 : ap_sum / result.per_class.size();
  return result;
}

}  // namespace detail

/**
 * @brief Frame-level mean average precision at one IoU threshold.
 *
 * Detections are ranked per class by score; each matches at most one
 * ground-truth box of the same video/frame/class. Classes without ground
 * truth are excluded from the mean.
 */
inline EvalResult frame_map(const std::vector<FrameDetection>& detections,
                            const std::vector<FrameGroundTruth>& gts, double iou_threshold) {
  return detail::ranked_eval(detections, gts, iou_threshold,
                             [](const FrameDetection& d, const FrameGroundTruth& g) {
                               if (d.video != g.video || d.frame != g.frame) return 0.0;
                               return box_iou(d.box, g.box);
                             });
}

/// Spatio-temporal tube IoU: temporal IoU of the frame ranges times the mean
/// spatial IoU over shared frames.
inline double tube_iou(const Tubelet& a, const Tubelet& b) {
  const FrameInterval inter = a.range().intersect(b.range());
  if (inter.empty()) return 0.0;
  const std::int64_t uni =
      std::max(a.range().end, b.range().end) - std::min(a.range().begin, b.range().begin);
  double spatial = 0;
  for (std::int64_t f = inter.begin; f < inter.end; ++f)
    spatial += box_iou(a.box_at(f), b.box_at(f));
  spatial /= static_cast<double>(inter.length());
  return spatial * static_cast<double>(inter.length()) / static_cast<double>(uni);
}

struct VideoTubeDetection {
  std::string video;
  int label = 0;
  double score = 0;
  Tubelet tubelet;  // trimmed to the kept interval
};

struct VideoTubeGroundTruth {
  std::string video;
  int label = 0;
  Tubelet tubelet;
};

/// Video-level mean average precision with tube IoU matching.
inline EvalResult video_map(const std::vector<VideoTubeDetection>& detections,
                            const std::vector<VideoTubeGroundTruth>& gts, double iou_threshold) {
  return detail::ranked_eval(detections, gts, iou_threshold,
                             [](const VideoTubeDetection& d, const VideoTubeGroundTruth& g) {
                               if (d.video != g.video) return 0.0;
                               return tube_iou(d.tubelet, g.tubelet);
                             });
}

/// One on-disk detection: a proposal's distribution and regressed tubelet for
/// one (video, clip, step).
struct DetectionRecord {
  std::string video;
  int clip = 0;
  int proposal = 0;
  int step = 0;  // 0 = initial proposals, 1..S_max = refined outputs
  std::vector<double> probs;
  Tubelet tubelet;
};

/**
 * @brief Mean fusion of two index-aligned detection sets: class distributions
 * and regressed boxes are averaged pairwise.
 */
inline std::vector<DetectionRecord> mean_fuse(const std::vector<DetectionRecord>& a,
                                              const std::vector<DetectionRecord>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mean_fuse: set sizes differ");
  std::vector<DetectionRecord> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const DetectionRecord& x = a[i];
    const DetectionRecord& y = b[i];
    if (x.video != y.video || x.clip != y.clip || x.proposal != y.proposal ||
        x.step != y.step || x.probs.size() != y.probs.size() ||
        x.tubelet.range() != y.tubelet.range())
      throw std::invalid_argument("mean_fuse: sets are not index-aligned");
    DetectionRecord fused = x;
    for (std::size_t c = 0; c < fused.probs.size(); ++c)
      fused.probs[c] = (x.probs[c] + y.probs[c]) / 2;
    for (std::size_t k = 0; k < fused.tubelet.boxes.size(); ++k) {
      const Box& bx = x.tubelet.boxes[k];
      const Box& by = y.tubelet.boxes[k];
      fused.tubelet.boxes[k] =
          Box((bx.x1 + by.x1) / 2, (bx.y1 + by.y1) / 2, (bx.x2 + by.x2) / 2, (bx.y2 + by.y2) / 2);
    }
    out.push_back(std::move(fused));
  }
  return out;
}

/// Per-step distribution of each proposal's best ground-truth overlap.
struct IoUHistogram {
  double bin_width = 0.1;
  std::vector<std::vector<int>> counts;  // [step][bin]
  std::vector<double> medians;           // exact per-step medians of the raw values
};

/**
 * @brief Histogram of best-gt tubelet overlap per step, measured on the
 * target clip. Bin mass per step always sums to the proposal count.
 */
inline IoUHistogram iou_histogram(const std::vector<std::vector<Tubelet>>& proposals_per_step,
                                  const std::vector<GroundTruthTube>& gt,
                                  const FrameInterval& target_clip, double bin_width) {
  if (bin_width <= 0 || bin_width > 1)
    throw std::invalid_argument("iou_histogram: bin width must be in (0, 1]");
  IoUHistogram hist;
  hist.bin_width = bin_width;
  const int bins = static_cast<int>(std::ceil(1.0 / bin_width));
  for (const auto& proposals : proposals_per_step) {
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    std::vector<double> values;
    values.reserve(proposals.size());
    for (const Tubelet& p : proposals) {
      double best = 0;
      for (const GroundTruthTube& t : gt)
        best = std::max(best, clip_overlap(p, t.tubelet, target_clip));
      values.push_back(best);
      const int bin = std::min(static_cast<int>(best / bin_width), bins - 1);
      ++counts[static_cast<std::size_t>(bin)];
    }
    std::sort(values.begin(), values.end());
    hist.medians.push_back(values.empty() ? 0.0 : values[values.size() / 2]);
    hist.counts.push_back(std::move(counts));
  }
  return hist;
}

}  // namespace step
