#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "step/geometry.hpp"

namespace step {
namespace {

TEST(BoxIoU, IdenticalBoxes) {
  Box a(0, 0, 10, 10);
  EXPECT_DOUBLE_EQ(box_iou(a, a), 1.0);
}

TEST(BoxIoU, DisjointBoxes) {
  EXPECT_DOUBLE_EQ(box_iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)), 0.0);
}

TEST(BoxIoU, PartialOverlap) {
  // intersection 50, union 150
  EXPECT_NEAR(box_iou(Box(0, 0, 10, 10), Box(5, 0, 15, 10)), 1.0 / 3.0, 1e-12);
}

TEST(BoxIoU, DegenerateBoxesGiveZero) {
  Box line(5, 0, 5, 10);
  EXPECT_DOUBLE_EQ(box_iou(line, line), 0.0);
  EXPECT_DOUBLE_EQ(box_iou(line, Box(0, 0, 10, 10)), 0.0);
  Box point(3, 3, 3, 3);
  EXPECT_DOUBLE_EQ(box_iou(point, point), 0.0);
}

TEST(BoxIoU, SymmetryAndRange) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 2000; ++i) {
    Box a(u(rng), u(rng), 0, 0), b(u(rng), u(rng), 0, 0);
    a.x2 = a.x1 + u(rng);
    a.y2 = a.y1 + u(rng);
    b.x2 = b.x1 + u(rng);
    b.y2 = b.y1 + u(rng);
    const double ab = box_iou(a, b);
    EXPECT_DOUBLE_EQ(ab, box_iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(TubeletOverlap, Identity) {
  Tubelet t(0, {Box(0, 0, 10, 10), Box(1, 0, 11, 10), Box(2, 0, 12, 10)});
  EXPECT_DOUBLE_EQ(tubelet_overlap(t, t, t.range()), 1.0);
}

TEST(TubeletOverlap, MeanOfPerFrameIoUs) {
  // frame IoUs {1.0, 0.5, 0.0} -> mean 0.5
  Tubelet a(0, {Box(0, 0, 10, 10), Box(0, 0, 10, 10), Box(0, 0, 10, 10)});
  Tubelet b(0, {Box(0, 0, 10, 10), Box(0, 0, 10, 5), Box(50, 50, 60, 60)});
  EXPECT_DOUBLE_EQ(box_iou(a.boxes[1], b.boxes[1]), 0.5);
  EXPECT_DOUBLE_EQ(tubelet_overlap(a, b, FrameInterval{0, 3}), 0.5);
}

TEST(TubeletOverlap, DisjointEveryFrame) {
  Tubelet a = Tubelet::constant({0, 4}, Box(0, 0, 10, 10));
  Tubelet b = Tubelet::constant({0, 4}, Box(100, 100, 110, 110));
  EXPECT_DOUBLE_EQ(tubelet_overlap(a, b, FrameInterval{0, 4}), 0.0);
}

TEST(TubeletOverlap, RejectsUncoveredRange) {
  Tubelet a = Tubelet::constant({0, 4}, Box(0, 0, 10, 10));
  Tubelet b = Tubelet::constant({2, 6}, Box(0, 0, 10, 10));
  EXPECT_THROW(tubelet_overlap(a, b, FrameInterval{0, 4}), std::invalid_argument);
  EXPECT_THROW(tubelet_overlap(a, b, FrameInterval{4, 4}), std::invalid_argument);
}

TEST(TubeletOverlap, ShrinkingFrameIoUNeverRaisesMean) {
  Tubelet a = Tubelet::constant({0, 3}, Box(0, 0, 10, 10));
  Tubelet b = a;
  const double full = tubelet_overlap(a, b, a.range());
  b.boxes[1] = Box(0, 0, 10, 8);  // lower one frame's IoU
  const double less = tubelet_overlap(a, b, a.range());
  EXPECT_LT(less, full);
  b.boxes[2] = Box(0, 0, 5, 8);
  EXPECT_LT(tubelet_overlap(a, b, a.range()), less);
}

TEST(ClipOverlap, PartialCoverageCountsMissingAsZero) {
  Tubelet a = Tubelet::constant({0, 4}, Box(0, 0, 10, 10));
  Tubelet b = Tubelet::constant({0, 2}, Box(0, 0, 10, 10));
  EXPECT_DOUBLE_EQ(clip_overlap(a, b, FrameInterval{0, 4}), 0.5);
  EXPECT_DOUBLE_EQ(clip_overlap(a, a, FrameInterval{0, 4}), 1.0);
}

TEST(Codec, IdentityTarget) {
  Box anchor(2, 3, 8, 9);
  OffsetVector off = encode_box(anchor, anchor);
  EXPECT_DOUBLE_EQ(off.tx, 0);
  EXPECT_DOUBLE_EQ(off.ty, 0);
  EXPECT_DOUBLE_EQ(off.tw, 0);
  EXPECT_DOUBLE_EQ(off.th, 0);
}

TEST(Codec, HandComputedOffsets) {
  // anchor (cx10,cy10,w4,h4), target (cx12,cy10,w8,h4) -> (0.5, 0, ln 2, 0)
  Box anchor = Box::from_center(10, 10, 4, 4);
  Box target = Box::from_center(12, 10, 8, 4);
  OffsetVector off = encode_box(target, anchor);
  EXPECT_NEAR(off.tx, 0.5, 1e-12);
  EXPECT_NEAR(off.ty, 0.0, 1e-12);
  EXPECT_NEAR(off.tw, std::log(2.0), 1e-12);
  EXPECT_NEAR(off.th, 0.0, 1e-12);

  // anchor (cx0,cy0,w2,h2), target (cx-1,cy1,w1,h1) -> (-0.5, 0.5, ln 0.5, ln 0.5)
  off = encode_box(Box::from_center(-1, 1, 1, 1), Box::from_center(0, 0, 2, 2));
  EXPECT_NEAR(off.tx, -0.5, 1e-12);
  EXPECT_NEAR(off.ty, 0.5, 1e-12);
  EXPECT_NEAR(off.tw, std::log(0.5), 1e-12);
  EXPECT_NEAR(off.th, std::log(0.5), 1e-12);
}

TEST(Codec, DecodeZeroOffsetsReturnsAnchor) {
  Box anchor(2, 3, 8, 9);
  Box out = decode_box(OffsetVector{}, anchor, FrameSize{100, 100});
  EXPECT_NEAR(out.x1, anchor.x1, 1e-12);
  EXPECT_NEAR(out.y1, anchor.y1, 1e-12);
  EXPECT_NEAR(out.x2, anchor.x2, 1e-12);
  EXPECT_NEAR(out.y2, anchor.y2, 1e-12);
}

TEST(Codec, DecodeHandComputed) {
  Box anchor = Box::from_center(10, 10, 4, 4);
  Box out = decode_box(OffsetVector{0.5, 0, std::log(2.0), 0}, anchor, FrameSize{100, 100});
  EXPECT_NEAR(out.cx(), 12, 1e-12);
  EXPECT_NEAR(out.cy(), 10, 1e-12);
  EXPECT_NEAR(out.width(), 8, 1e-12);
  EXPECT_NEAR(out.height(), 4, 1e-12);
}

TEST(Codec, RejectsDegenerateAnchorOrTarget) {
  Box good(0, 0, 10, 10), flat(0, 0, 10, 0);
  EXPECT_THROW(encode_box(good, flat), std::invalid_argument);
  EXPECT_THROW(encode_box(flat, good), std::invalid_argument);
}

TEST(Codec, RoundtripErrorBelow1em9) {
  const FrameSize frame{400, 400};
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> pos(0, 360), size(1e-3, 40);
  double max_err = 0;
  for (int i = 0; i < 10000; ++i) {
    Box t(pos(rng), pos(rng), 0, 0), a(pos(rng), pos(rng), 0, 0);
    t.x2 = t.x1 + size(rng);
    t.y2 = t.y1 + size(rng);
    a.x2 = a.x1 + size(rng);
    a.y2 = a.y1 + size(rng);
    Box back = decode_box(encode_box(t, a), a, frame);
    max_err = std::max({max_err, std::abs(back.x1 - t.x1), std::abs(back.y1 - t.y1),
                        std::abs(back.x2 - t.x2), std::abs(back.y2 - t.y2)});
  }
  EXPECT_LT(max_err, 1e-9);
}

TEST(Codec, DecodeClampsToFrame) {
  Box anchor = Box::from_center(395, 395, 20, 20);
  Box out = decode_box(OffsetVector{1.0, 1.0, 0, 0}, anchor, FrameSize{400, 400});
  EXPECT_LE(out.x2, 400);
  EXPECT_LE(out.y2, 400);
  EXPECT_GE(out.x1, 0);
  EXPECT_TRUE(out.valid());
}

TEST(Miut, StationaryTubeIsOne) {
  EXPECT_DOUBLE_EQ(miut(Tubelet::constant({0, 5}, Box(1, 2, 11, 12))), 1.0);
}

TEST(Miut, LengthOneTubeIsOne) {
  EXPECT_DOUBLE_EQ(miut(Tubelet(3, {Box(0, 0, 4, 4)})), 1.0);
}

TEST(Miut, HandComputedThreeFrames) {
  // center = index 1; min of {1, 1/3}
  Tubelet t(0, {Box(0, 0, 10, 10), Box(0, 0, 10, 10), Box(5, 0, 15, 10)});
  EXPECT_NEAR(miut(t), 1.0 / 3.0, 1e-12);
}

TEST(Miut, EvenLengthUsesLowerMedian) {
  // length 4 -> center index 2
  Tubelet t(0, {Box(5, 0, 15, 10), Box(0, 0, 10, 10), Box(0, 0, 10, 10), Box(0, 0, 10, 10)});
  EXPECT_NEAR(miut(t), 1.0 / 3.0, 1e-12);
}

TEST(Miut, AtMostOneAndOneOnlyWhenAllMatchCenter) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 50);
  for (int i = 0; i < 500; ++i) {
    Tubelet t;
    const int len = 1 + static_cast<int>(rng() % 7);
    for (int k = 0; k < len; ++k) {
      Box b(u(rng), u(rng), 0, 0);
      b.x2 = b.x1 + 5 + u(rng);
      b.y2 = b.y1 + 5 + u(rng);
      t.boxes.push_back(b);
    }
    const double m = miut(t);
    EXPECT_LE(m, 1.0);
    bool all_match = true;
    for (const Box& b : t.boxes)
      all_match = all_match && box_iou(t.boxes[t.boxes.size() / 2], b) == 1.0;
    EXPECT_EQ(m == 1.0, all_match);
  }
}

TEST(Tubelet, NearestBoxLookup) {
  Tubelet t(10, {Box(0, 0, 1, 1), Box(1, 1, 2, 2)});
  EXPECT_DOUBLE_EQ(t.box_at_or_nearest(5).x1, 0);
  EXPECT_DOUBLE_EQ(t.box_at_or_nearest(11).x1, 1);
  EXPECT_DOUBLE_EQ(t.box_at_or_nearest(100).x1, 1);
}

}  // namespace
}  // namespace step
