#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "step/geometry.hpp"

namespace step {

/// One pyramid level: window size = frame size / scale, stride = window * (1 - overlap).
struct PyramidLevel {
  double scale = 1.0;    // frame-size divisor, >= 1
  double overlap = 0.0;  // in [0, 1)
};

struct PyramidSpec {
  std::vector<PyramidLevel> levels;
  FrameSize frame;
};

namespace detail {

/// Window start positions along one axis: stride multiples while the window
/// stays inside the span, plus a flush-end position when the grid misses it.
inline std::vector<double> window_starts(double span, double window, double overlap) {
  const double stride = window * (1.0 - overlap);
  if (stride <= 0) throw std::invalid_argument("window_starts: overlap >= 1 gives zero stride");
  const double eps = 1e-9 * std::max(1.0, span);
  std::vector<double> starts;
  for (double x = 0; x + window <= span + eps; x += stride) starts.push_back(x);
  if (starts.empty() || starts.back() < span - window - eps) starts.push_back(span - window);
  return starts;
}

inline bool same_box(const Box& a, const Box& b) {
  const double eps = 1e-9;
  return std::abs(a.x1 - b.x1) < eps && std::abs(a.y1 - b.y1) < eps &&
         std::abs(a.x2 - b.x2) < eps && std::abs(a.y2 - b.y2) < eps;
}

}  // namespace detail

/**
 * @brief Sliding-window spatial pyramid over the frame.
 *
 * For each level, windows of size (W/scale, H/scale) are placed at stride
 * multiples from the origin; boxes from all levels are concatenated and
 * deduplicated. The [4/3, 2] scales with [5/6, 3/4] overlaps on a square
 * frame give the 34-box layout (9 + 25).
 */
inline std::vector<Box> generate_pyramid(const PyramidSpec& spec) {
  std::vector<Box> out;
  for (const PyramidLevel& level : spec.levels) {
    if (level.scale < 1.0) throw std::invalid_argument("generate_pyramid: scale must be >= 1");
    if (level.overlap < 0.0 || level.overlap >= 1.0)
      throw std::invalid_argument("generate_pyramid: overlap must be in [0, 1)");
    const double w = spec.frame.width / level.scale;
    const double h = spec.frame.height / level.scale;
    const auto xs = detail::window_starts(spec.frame.width, w, level.overlap);
    const auto ys = detail::window_starts(spec.frame.height, h, level.overlap);
    for (double y : ys)
      for (double x : xs) {
        Box candidate(x, y, x + w, y + h);
        bool duplicate = false;
        for (const Box& b : out) duplicate = duplicate || detail::same_box(b, candidate);
        if (!duplicate) out.push_back(candidate);
      }
  }
  return out;
}

/// Single window of size (W/scale, H/scale) centered in the frame.
inline Box centered_window(const FrameSize& frame, double scale) {
  if (scale < 1.0) throw std::invalid_argument("centered_window: scale must be >= 1");
  return Box::from_center(frame.width / 2, frame.height / 2, frame.width / scale,
                          frame.height / scale);
}

/**
 * @brief Default coarse 11-box layout: the full frame, a 3x3 grid of
 * half-size windows, and one centered 3W/4 x 3H/4 window.
 */
inline std::vector<Box> default_proposal_boxes(const FrameSize& frame) {
  PyramidSpec spec{{{1.0, 0.0}, {2.0, 0.5}}, frame};
  std::vector<Box> boxes = generate_pyramid(spec);
  boxes.push_back(centered_window(frame, 4.0 / 3.0));
  return boxes;
}

/// Replicate 2D boxes across time into cuboid tubelets covering the clip.
inline std::vector<Tubelet> replicate_to_cuboids(const std::vector<Box>& boxes,
                                                 const FrameInterval& clip) {
  if (clip.length() < 1) throw std::invalid_argument("replicate_to_cuboids: clip length < 1");
  std::vector<Tubelet> out;
  out.reserve(boxes.size());
  for (const Box& b : boxes) out.push_back(Tubelet::constant(clip, b));
  return out;
}

}  // namespace step
