#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace step {

/**
 * @brief Axis-aligned box in pixel coordinates, corner form.
 *
 * Coordinates are continuous (sub-pixel). Degenerate boxes (zero width or
 * height) are legal values; they overlap nothing and cannot serve as
 * regression anchors or targets.
 */
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  Box() = default;
  Box(double x1_, double y1_, double x2_, double y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {}

  static Box from_center(double cx, double cy, double w, double h) {
    return Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2);
  }

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return (x1 + x2) / 2; }
  double cy() const { return (y1 + y2) / 2; }
  bool valid() const { return x2 >= x1 && y2 >= y1; }
  bool degenerate() const { return width() <= 0 || height() <= 0; }
};

/// Frame dimensions in pixels; boxes live in [0,width] x [0,height].
struct FrameSize {
  double width = 0, height = 0;
};

inline Box clamp_to_frame(const Box& b, const FrameSize& frame) {
  return Box(std::clamp(b.x1, 0.0, frame.width), std::clamp(b.y1, 0.0, frame.height),
             std::clamp(b.x2, 0.0, frame.width), std::clamp(b.y2, 0.0, frame.height));
}

/// Intersection over union. Degenerate or disjoint pairs give 0.
inline double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  if (iw <= 0) return 0.0;
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Half-open frame interval [begin, end).
struct FrameInterval {
  std::int64_t begin = 0, end = 0;

  std::int64_t length() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::int64_t frame) const { return frame >= begin && frame < end; }
  bool contains(const FrameInterval& o) const { return o.begin >= begin && o.end <= end; }
  FrameInterval intersect(const FrameInterval& o) const {
    return {std::max(begin, o.begin), std::min(end, o.end)};
  }
  bool operator==(const FrameInterval&) const = default;
};

/**
 * @brief A sequence of per-frame boxes over a contiguous frame range.
 */
struct Tubelet {
  std::int64_t start_frame = 0;
  std::vector<Box> boxes;

  Tubelet() = default;
  Tubelet(std::int64_t start, std::vector<Box> bs) : start_frame(start), boxes(std::move(bs)) {}

  static Tubelet constant(const FrameInterval& range, const Box& box) {
    return Tubelet(range.begin, std::vector<Box>(static_cast<std::size_t>(range.length()), box));
  }

  std::int64_t length() const { return static_cast<std::int64_t>(boxes.size()); }
  FrameInterval range() const { return {start_frame, start_frame + length()}; }
  bool covers(const FrameInterval& r) const { return range().contains(r); }

  const Box& box_at(std::int64_t frame) const {
    return boxes.at(static_cast<std::size_t>(frame - start_frame));
  }
  Box& box_at(std::int64_t frame) { return boxes.at(static_cast<std::size_t>(frame - start_frame)); }

  /// Box at the given frame, or the nearest covered frame's box when outside
  /// the range. Undefined on empty tubelets.
  const Box& box_at_or_nearest(std::int64_t frame) const {
    const auto clamped = std::clamp(frame, start_frame, start_frame + length() - 1);
    return boxes[static_cast<std::size_t>(clamped - start_frame)];
  }
};

/// Mean per-frame IoU over a clip range. Both tubelets must cover the range.
inline double tubelet_overlap(const Tubelet& a, const Tubelet& b, const FrameInterval& clip) {
  if (clip.empty()) throw std::invalid_argument("tubelet_overlap: empty clip range");
  if (!a.covers(clip) || !b.covers(clip))
    throw std::invalid_argument("tubelet_overlap: tubelet does not cover clip range");
  double sum = 0;
  for (std::int64_t f = clip.begin; f < clip.end; ++f) sum += box_iou(a.box_at(f), b.box_at(f));
  return sum / static_cast<double>(clip.length());
}

/**
 * @brief Mean per-frame IoU over a clip range, tolerating partial coverage.
 *
 * Frames not covered by both tubelets contribute 0; the divisor stays the
 * clip length. Coincides with tubelet_overlap when both cover the range.
 */
inline double clip_overlap(const Tubelet& a, const Tubelet& b, const FrameInterval& clip) {
  if (clip.empty()) return 0.0;
  double sum = 0;
  for (std::int64_t f = clip.begin; f < clip.end; ++f) {
    if (a.range().contains(f) && b.range().contains(f)) sum += box_iou(a.box_at(f), b.box_at(f));
  }
  return sum / static_cast<double>(clip.length());
}

/**
 * @brief Regression offsets for one frame: scale-invariant center translation
 * plus log-space width/height shift relative to an anchor box.
 */
struct OffsetVector {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

/// Per-frame offsets for one tubelet, in frame order.
using OffsetSequence = std::vector<OffsetVector>;

inline OffsetVector encode_box(const Box& target, const Box& anchor) {
  if (anchor.degenerate()) throw std::invalid_argument("encode_box: zero-size anchor");
  if (target.degenerate()) throw std::invalid_argument("encode_box: zero-size target");
  return {(target.cx() - anchor.cx()) / anchor.width(),
          (target.cy() - anchor.cy()) / anchor.height(),
          std::log(target.width() / anchor.width()),
          std::log(target.height() / anchor.height())};
}

/// Inverse of encode_box, clamped to the frame.
inline Box decode_box(const OffsetVector& off, const Box& anchor, const FrameSize& frame) {
  const double cx = off.tx * anchor.width() + anchor.cx();
  const double cy = off.ty * anchor.height() + anchor.cy();
  const double w = std::exp(off.tw) * anchor.width();
  const double h = std::exp(off.th) * anchor.height();
  return clamp_to_frame(Box::from_center(cx, cy, w, h), frame);
}

/// Frame-wise encode of a target tubelet against an anchor tubelet with the
/// same frame range.
inline OffsetSequence encode_tubelet(const Tubelet& target, const Tubelet& anchor) {
  if (target.range() != anchor.range())
    throw std::invalid_argument("encode_tubelet: frame ranges differ");
  OffsetSequence out;
  out.reserve(target.boxes.size());
  for (std::size_t k = 0; k < target.boxes.size(); ++k)
    out.push_back(encode_box(target.boxes[k], anchor.boxes[k]));
  return out;
}

/// Frame-wise decode against an anchor tubelet. A degenerate anchor box
/// passes through unchanged (no offsets are defined against it).
inline Tubelet decode_tubelet(const OffsetSequence& offsets, const Tubelet& anchor,
                              const FrameSize& frame) {
  if (offsets.size() != anchor.boxes.size())
    throw std::invalid_argument("decode_tubelet: offset count does not match anchor length");
  Tubelet out;
  out.start_frame = anchor.start_frame;
  out.boxes.reserve(offsets.size());
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    if (anchor.boxes[k].degenerate())
      out.boxes.push_back(clamp_to_frame(anchor.boxes[k], frame));
    else
      out.boxes.push_back(decode_box(offsets[k], anchor.boxes[k], frame));
  }
  return out;
}

/**
 * @brief Minimum IoU within a tube: min over frames of IoU between the
 * center-frame box and each frame's box.
 *
 * The center frame is index length/2 (lower median for even lengths).
 * A spatial-displacement severity measure; 1 for stationary tubes.
 */
inline double miut(const Tubelet& tube) {
  if (tube.boxes.empty()) throw std::invalid_argument("miut: empty tube");
  const Box& center = tube.boxes[tube.boxes.size() / 2];
  double result = 1.0;
  for (const Box& b : tube.boxes) result = std::min(result, box_iou(center, b));
  return result;
}

/// A labeled ground-truth tube: one actor, one action class, per-frame boxes.
struct GroundTruthTube {
  int label = 0;  // action class in [1, C]; 0 is reserved for background
  Tubelet tubelet;
};

inline double miut(const GroundTruthTube& tube) { return miut(tube.tubelet); }

}  // namespace step
