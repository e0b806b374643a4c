#include <gtest/gtest.h>

#include "step/proposals.hpp"

namespace step {
namespace {

const FrameSize kFrame{400, 400};

TEST(Pyramid, AvaSpecGives34Boxes) {
  PyramidSpec spec{{{4.0 / 3.0, 5.0 / 6.0}, {2.0, 3.0 / 4.0}}, kFrame};
  EXPECT_EQ(generate_pyramid(spec).size(), 34u);
}

TEST(Pyramid, AvaLevelCountsAre9And25) {
  PyramidSpec first{{{4.0 / 3.0, 5.0 / 6.0}}, kFrame};
  PyramidSpec second{{{2.0, 3.0 / 4.0}}, kFrame};
  EXPECT_EQ(generate_pyramid(first).size(), 9u);   // 3x3 of 300px windows, stride 50
  EXPECT_EQ(generate_pyramid(second).size(), 25u); // 5x5 of 200px windows, stride 50
}

TEST(Pyramid, SingleFullFrameLevel) {
  PyramidSpec spec{{{1.0, 0.0}}, kFrame};
  const auto boxes = generate_pyramid(spec);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_DOUBLE_EQ(boxes[0].x1, 0);
  EXPECT_DOUBLE_EQ(boxes[0].y1, 0);
  EXPECT_DOUBLE_EQ(boxes[0].x2, 400);
  EXPECT_DOUBLE_EQ(boxes[0].y2, 400);
}

TEST(Pyramid, AllBoxesInsideFrame) {
  PyramidSpec spec{{{4.0 / 3.0, 5.0 / 6.0}, {2.0, 3.0 / 4.0}, {3.0, 0.4}}, FrameSize{233, 157}};
  for (const Box& b : generate_pyramid(spec)) {
    EXPECT_GE(b.x1, -1e-9);
    EXPECT_GE(b.y1, -1e-9);
    EXPECT_LE(b.x2, 233 + 1e-9);
    EXPECT_LE(b.y2, 157 + 1e-9);
    EXPECT_GT(b.area(), 0);
  }
}

TEST(Pyramid, FlushEdgePositionAddedWhenGridMissesIt) {
  // stride 0.6*W with window 0.6*W: starts {0}, flush-right adds 0.4*W.
  PyramidSpec spec{{{1.0 / 0.6, 0.0}}, FrameSize{100, 100}};
  const auto boxes = generate_pyramid(spec);
  EXPECT_EQ(boxes.size(), 4u);  // 2x2 positions
  bool has_flush = false;
  for (const Box& b : boxes) has_flush = has_flush || std::abs(b.x2 - 100) < 1e-9;
  EXPECT_TRUE(has_flush);
}

TEST(Pyramid, RejectsOverlapOne) {
  PyramidSpec spec{{{2.0, 1.0}}, kFrame};
  EXPECT_THROW(generate_pyramid(spec), std::invalid_argument);
}

TEST(Pyramid, DeduplicatesAcrossLevels) {
  PyramidSpec spec{{{1.0, 0.0}, {1.0, 0.5}}, kFrame};
  EXPECT_EQ(generate_pyramid(spec).size(), 1u);
}

TEST(Pyramid, DefaultLayoutHasElevenBoxes) {
  const auto boxes = default_proposal_boxes(kFrame);
  EXPECT_EQ(boxes.size(), 11u);
  for (const Box& b : boxes) {
    EXPECT_GE(b.x1, -1e-9);
    EXPECT_LE(b.x2, 400 + 1e-9);
  }
}

TEST(Cuboids, SingleBoxSingleFrame) {
  const auto tubes = replicate_to_cuboids({Box(0, 0, 10, 10)}, FrameInterval{5, 6});
  ASSERT_EQ(tubes.size(), 1u);
  EXPECT_EQ(tubes[0].length(), 1);
  EXPECT_EQ(tubes[0].start_frame, 5);
  EXPECT_DOUBLE_EQ(miut(tubes[0]), 1.0);
}

TEST(Cuboids, ElevenBoxesK6) {
  const auto boxes = default_proposal_boxes(kFrame);
  const auto tubes = replicate_to_cuboids(boxes, FrameInterval{0, 6});
  ASSERT_EQ(tubes.size(), 11u);
  for (const Tubelet& t : tubes) {
    EXPECT_EQ(t.length(), 6);
    EXPECT_DOUBLE_EQ(tubelet_overlap(t, t, t.range()), 1.0);
    EXPECT_DOUBLE_EQ(miut(t), 1.0);  // cuboids are temporally constant
  }
}

TEST(Cuboids, AvaSpecK12Gives34Cuboids) {
  PyramidSpec spec{{{4.0 / 3.0, 5.0 / 6.0}, {2.0, 3.0 / 4.0}}, kFrame};
  const auto tubes = replicate_to_cuboids(generate_pyramid(spec), FrameInterval{0, 12});
  EXPECT_EQ(tubes.size(), 34u);
  for (const Tubelet& t : tubes) EXPECT_EQ(t.length(), 12);
}

TEST(Cuboids, RejectsEmptyClip) {
  EXPECT_THROW(replicate_to_cuboids({Box(0, 0, 1, 1)}, FrameInterval{3, 3}), std::invalid_argument);
}

}  // namespace
}  // namespace step
