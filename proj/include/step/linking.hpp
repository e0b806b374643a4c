#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <vector>

#include "step/geometry.hpp"

namespace step {

/// One same-class linking candidate: a clip's detection with its class score.
struct LinkCandidate {
  int clip = 0;                // clip index within the video
  FrameInterval window;        // the clip's own frame window
  double score = 0;            // class probability
  Tubelet tubelet;             // regressed tubelet (may cover adjacent clips)
};

/// A linked video-level action tube.
struct ActionTube {
  struct Member {
    int clip = 0;
    FrameInterval window;
    double score = 0;
    Tubelet tubelet;
  };
  int label = 0;
  std::vector<Member> members;      // consecutive clips, ascending
  double score = 0;                 // mean member score
  FrameInterval trimmed{0, 0};      // set by temporal trimming
};

/**
 * @brief Overlap used when chaining detections of adjacent clips: mean IoU
 * over shared frames when the tubelets overlap in time, otherwise the IoU of
 * the temporally closest boxes.
 */
inline double link_overlap(const Tubelet& a, const Tubelet& b) {
  const FrameInterval shared = a.range().intersect(b.range());
  if (!shared.empty()) {
    double sum = 0;
    for (std::int64_t f = shared.begin; f < shared.end; ++f)
      sum += box_iou(a.box_at(f), b.box_at(f));
    return sum / static_cast<double>(shared.length());
  }
  if (a.range().end <= b.range().begin) return box_iou(a.boxes.back(), b.boxes.front());
  return box_iou(a.boxes.front(), b.boxes.back());
}

/**
 * @brief Greedy tube linking for one class.
 *
 * Repeatedly seeds from the highest-score unlinked candidate (ties: lower
 * clip, then input order) and extends forward and backward to the
 * best-scoring unlinked candidate in the adjacent clip whose overlap exceeds
 * the threshold. Linked candidates are consumed; no candidate joins two tubes.
 */
inline std::vector<ActionTube> link_tubes(const std::vector<LinkCandidate>& candidates, int label,
                                          double link_threshold) {
  std::vector<bool> used(candidates.size(), false);
  std::vector<ActionTube> tubes;

  auto pick_seed = [&]() {
    int seed = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      if (seed < 0 || candidates[i].score > candidates[static_cast<std::size_t>(seed)].score ||
          (candidates[i].score == candidates[static_cast<std::size_t>(seed)].score &&
           candidates[i].clip < candidates[static_cast<std::size_t>(seed)].clip))
        seed = static_cast<int>(i);
    }
    return seed;
  };

  auto best_adjacent = [&](const LinkCandidate& from, int clip) {
    int best = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i] || candidates[i].clip != clip) continue;
      if (link_overlap(from.tubelet, candidates[i].tubelet) <= link_threshold) continue;
      if (best < 0 || candidates[i].score > candidates[static_cast<std::size_t>(best)].score)
        best = static_cast<int>(i);
    }
    return best;
  };

  for (int seed = pick_seed(); seed >= 0; seed = pick_seed()) {
    used[static_cast<std::size_t>(seed)] = true;
    std::vector<int> chain{seed};
    for (int cur = seed;;) {  // forward
      const int next = best_adjacent(candidates[static_cast<std::size_t>(cur)],
                                     candidates[static_cast<std::size_t>(cur)].clip + 1);
      if (next < 0) break;
      used[static_cast<std::size_t>(next)] = true;
      chain.push_back(next);
      cur = next;
    }
    for (int cur = seed;;) {  // backward
      const int prev = best_adjacent(candidates[static_cast<std::size_t>(cur)],
                                     candidates[static_cast<std::size_t>(cur)].clip - 1);
      if (prev < 0) break;
      used[static_cast<std::size_t>(prev)] = true;
      chain.insert(chain.begin(), prev);
      cur = prev;
    }

    ActionTube tube;
    tube.label = label;
    double sum = 0;
    for (int i : chain) {
      const LinkCandidate& c = candidates[static_cast<std::size_t>(i)];
      tube.members.push_back({c.clip, c.window, c.score, c.tubelet});
      sum += c.score;
    }
    tube.score = sum / static_cast<double>(chain.size());
    tubes.push_back(std::move(tube));
  }
  return tubes;
}

/// Result of the two-state trimming DP over per-clip scores.
struct TrimResult {
  std::vector<bool> keep;   // in/out label per clip
  double energy = 0;        // maximized objective
  int first = -1, last = -1;  // chosen kept span (clip indices, inclusive); -1 when empty
};

/**
 * @brief Exact two-state dynamic program over per-clip scores.
 *
 * Maximizes sum_t [y_t * s_t + (1 - y_t) * (1 - s_t)] - beta * #label changes.
 * The reported span is the maximal kept run containing the highest-score kept
 * clip (ties: earliest). beta = 0 reduces to thresholding scores at 0.5.
 */
inline TrimResult temporal_trim_scores(const std::vector<double>& scores, double beta) {
  TrimResult result;
  const std::size_t T = scores.size();
  if (T == 0) return result;

  // value[t][y]: best energy of a labeling of 0..t with y_t = y
  std::vector<std::array<double, 2>> value(T);
  std::vector<std::array<int, 2>> from(T);
  value[0] = {1 - scores[0], scores[0]};
  from[0] = {-1, -1};
  for (std::size_t t = 1; t < T; ++t) {
    const double node[2] = {1 - scores[t], scores[t]};
    for (int y = 0; y < 2; ++y) {
      const double stay = value[t - 1][static_cast<std::size_t>(y)];
      const double flip = value[t - 1][static_cast<std::size_t>(1 - y)] - beta;
      if (stay >= flip) {
        value[t][static_cast<std::size_t>(y)] = stay + node[y];
        from[t][static_cast<std::size_t>(y)] = y;
      } else {
        value[t][static_cast<std::size_t>(y)] = flip + node[y];
        from[t][static_cast<std::size_t>(y)] = 1 - y;
      }
    }
  }

  int y = value[T - 1][1] >= value[T - 1][0] ? 1 : 0;
  result.energy = value[T - 1][static_cast<std::size_t>(y)];
  result.keep.assign(T, false);
  for (std::size_t t = T; t-- > 0;) {
    result.keep[t] = y == 1;
    y = t > 0 ? from[t][static_cast<std::size_t>(y)] : y;
  }

  // best kept clip by score, ties earliest
  int anchor = -1;
  for (std::size_t t = 0; t < T; ++t)
    if (result.keep[t] && (anchor < 0 || scores[t] > scores[static_cast<std::size_t>(anchor)]))
      anchor = static_cast<int>(t);
  if (anchor >= 0) {
    int lo = anchor, hi = anchor;
    while (lo > 0 && result.keep[static_cast<std::size_t>(lo - 1)]) --lo;
    while (hi + 1 < static_cast<int>(T) && result.keep[static_cast<std::size_t>(hi + 1)]) ++hi;
    result.first = lo;
    result.last = hi;
  }
  return result;
}

/**
 * @brief Trim a linked tube to its best smooth high-score span.
 *
 * Returns the frame interval covered by the kept clips' own windows; an
 * all-out labeling gives an empty interval.
 */
inline FrameInterval temporal_trim(const ActionTube& tube, double smoothness_penalty) {
  std::vector<double> scores;
  scores.reserve(tube.members.size());
  for (const auto& m : tube.members) scores.push_back(m.score);
  const TrimResult r = temporal_trim_scores(scores, smoothness_penalty);
  if (r.first < 0) return {0, 0};
  return {tube.members[static_cast<std::size_t>(r.first)].window.begin,
          tube.members[static_cast<std::size_t>(r.last)].window.end};
}

}  // namespace step
