#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "step/model.hpp"

namespace step {
namespace {

const FrameSize kFrame{400, 400};

Tubelet moving_tube(std::int64_t start, int len, Box b0, double vx, double vy) {
  Tubelet t;
  t.start_frame = start;
  for (int k = 0; k < len; ++k)
    t.boxes.push_back(Box(b0.x1 + vx * k, b0.y1 + vy * k, b0.x2 + vx * k, b0.y2 + vy * k));
  return t;
}

int argmax_action(const std::vector<double>& probs) {
  int best = 1;
  for (int c = 2; c < static_cast<int>(probs.size()); ++c)
    if (probs[c] > probs[best]) best = c;
  return best;
}

TEST(Oracle, NoiseFreeRegressionLandsOnGroundTruth) {
  GroundTruthTube gt{2, moving_tube(0, 6, Box(100, 100, 160, 180), 3, -2)};
  OracleModel oracle({gt}, 4, kFrame, 0.0);
  Tubelet proposal = Tubelet::constant({0, 6}, Box(80, 90, 200, 220));
  std::mt19937_64 rng(1);
  RefineOutput out = oracle.refine(proposal, rng);

  EXPECT_EQ(argmax_action(out.detection.probs), 2);
  Tubelet decoded = decode_tubelet(out.detection.offsets[1], proposal, kFrame);
  for (std::int64_t f = 0; f < 6; ++f) {
    EXPECT_NEAR(decoded.box_at(f).x1, gt.tubelet.box_at(f).x1, 1e-9);
    EXPECT_NEAR(decoded.box_at(f).y2, gt.tubelet.box_at(f).y2, 1e-9);
  }
}

TEST(Oracle, EmptyGroundTruthIsPureBackground) {
  OracleModel oracle({}, 3, kFrame, 0.5);
  std::mt19937_64 rng(1);
  RefineOutput out = oracle.refine(Tubelet::constant({0, 4}, Box(0, 0, 50, 50)), rng);
  EXPECT_DOUBLE_EQ(out.detection.probs[0], 1.0);
  for (const auto& seq : out.detection.offsets)
    for (const auto& off : seq) {
      EXPECT_DOUBLE_EQ(off.tx, 0);
      EXPECT_DOUBLE_EQ(off.tw, 0);
    }
}

TEST(Oracle, BestOverlapTubeWins) {
  // Same class, overlaps ~0.8 vs ~0.1: regression must target the close tube.
  GroundTruthTube near{1, Tubelet::constant({0, 4}, Box(100, 100, 200, 200))};
  GroundTruthTube far{1, Tubelet::constant({0, 4}, Box(300, 300, 350, 350))};
  OracleModel oracle({far, near}, 2, kFrame, 0.0);
  Tubelet proposal = Tubelet::constant({0, 4}, Box(105, 105, 205, 205));
  std::mt19937_64 rng(1);
  RefineOutput out = oracle.refine(proposal, rng);
  Tubelet decoded = decode_tubelet(out.detection.offsets[0], proposal, kFrame);
  EXPECT_NEAR(decoded.box_at(0).x1, 100, 1e-9);
  EXPECT_NEAR(decoded.box_at(0).x2, 200, 1e-9);
}

TEST(Oracle, DistributionIsValidAndDeterministic) {
  GroundTruthTube gt{1, Tubelet::constant({0, 4}, Box(10, 10, 60, 60))};
  OracleModel oracle({gt}, 4, kFrame, 0.2);
  Tubelet proposal = Tubelet::constant({0, 4}, Box(0, 0, 80, 80));
  std::mt19937_64 a(77), b(77);
  RefineOutput ra = oracle.refine(proposal, a);
  RefineOutput rb = oracle.refine(proposal, b);
  double sum = 0;
  for (std::size_t i = 0; i < ra.detection.probs.size(); ++i) {
    EXPECT_GE(ra.detection.probs[i], 0.0);
    EXPECT_DOUBLE_EQ(ra.detection.probs[i], rb.detection.probs[i]);
    sum += ra.detection.probs[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(ra.detection.offsets[0][2].tx, rb.detection.offsets[0][2].tx);
}

TEST(Oracle, AnticipationTracksAdjacentFrames) {
  GroundTruthTube gt{1, moving_tube(-6, 18, Box(100, 100, 150, 150), 2, 0)};
  OracleModel oracle({gt}, 2, kFrame, 0.0, 8.0, /*anticipation_frames=*/6);
  Tubelet proposal = Tubelet::constant({0, 6}, Box(100, 100, 160, 160));
  std::mt19937_64 rng(3);
  RefineOutput out = oracle.refine(proposal, rng);
  ASSERT_TRUE(out.anticipation.has_value());
  // Forward offset k decodes against the box at end-K+k to land on gt at end+k.
  for (int k = 0; k < 6; ++k) {
    Box anchor = proposal.box_at(proposal.range().end - 6 + k);
    Box decoded = decode_box(out.anticipation->forward[0][k], anchor, kFrame);
    EXPECT_NEAR(decoded.x1, gt.tubelet.box_at(6 + k).x1, 1e-9);
  }
}

TEST(LinearHead, ZeroHeadGivesUniformAndZeroOffsets) {
  LinearHead head = LinearHead::zeros(5, 3, 4, 2);
  FeatureVector x(5, 1.5);
  LinearForward out = linear_forward(head, x);
  for (double p : out.detection.probs) EXPECT_NEAR(p, 0.25, 1e-12);
  for (const auto& seq : out.detection.offsets)
    for (const auto& off : seq) EXPECT_DOUBLE_EQ(off.tx + off.ty + off.tw + off.th, 0);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 2; ++k) {
      EXPECT_DOUBLE_EQ(out.anticipation.forward[c][k].tx, 0);
      EXPECT_DOUBLE_EQ(out.anticipation.backward[c][k].th, 0);
    }
}

TEST(LinearHead, ZeroResidualMakesAnticipationEqualMainSlices) {
  std::mt19937_64 rng(11);
  LinearHead head = LinearHead::random(6, 2, 5, 3, rng);
  std::fill(head.w_ant_back.begin(), head.w_ant_back.end(), 0.0);
  std::fill(head.b_ant_back.begin(), head.b_ant_back.end(), 0.0);
  FeatureVector x{0.3, -1.2, 0.8, 0.1, 2.0, -0.5};
  LinearForward out = linear_forward(head, x);
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < 3; ++k) {
      EXPECT_DOUBLE_EQ(out.anticipation.backward[c][k].tx, out.detection.offsets[c][k].tx);
      EXPECT_DOUBLE_EQ(out.anticipation.backward[c][k].th, out.detection.offsets[c][k].th);
    }
}

TEST(LinearHead, ResidualIdentityHoldsExactly) {
  std::mt19937_64 rng(12);
  LinearHead head = LinearHead::random(7, 3, 6, 4, rng, 0.3);
  FeatureVector x{1, -2, 0.5, 0.25, -0.75, 3, 0.125};
  LinearForward out = linear_forward(head, x);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 4; ++k) {
      const OffsetVector& main_first = out.detection.offsets[c][k];
      const OffsetVector& main_last = out.detection.offsets[c][6 - 4 + k];
      EXPECT_DOUBLE_EQ(out.anticipation.backward[c][k].tx - main_first.tx,
                       out.residual_back[c][k].tx);
      EXPECT_DOUBLE_EQ(out.anticipation.forward[c][k].tw - main_last.tw,
                       out.residual_fwd[c][k].tw);
    }
}

std::vector<double*> all_params(LinearHead& h) {
  std::vector<double*> out;
  for (auto* v : {&h.w_cls, &h.b_cls, &h.w_reg, &h.b_reg, &h.w_ant_back, &h.b_ant_back,
                  &h.w_ant_fwd, &h.b_ant_fwd})
    for (double& p : *v) out.push_back(&p);
  return out;
}

std::vector<double> flat_grads(const HeadGradients& g) {
  std::vector<double> out;
  for (const auto* v : {&g.w_cls, &g.b_cls, &g.w_reg, &g.b_reg, &g.w_ant_back, &g.b_ant_back,
                        &g.w_ant_fwd, &g.b_ant_fwd})
    out.insert(out.end(), v->begin(), v->end());
  return out;
}

TEST(Gradients, NearZeroAtConstructedOptimum) {
  LinearHead head = LinearHead::zeros(4, 2, 3, 0);
  head.b_cls[2] = 40.0;  // label-2 prediction saturated
  FeatureVector x{0.5, -0.25, 1.0, 0.75};
  SampleTarget t;
  t.label = 2;
  const LinearForward fwd = linear_forward(head, x);
  for (int k = 0; k < 3; ++k) t.loc.push_back({k, fwd.detection.offsets[1][k]});

  HeadGradients grads = HeadGradients::zeros_like(head);
  head_loss_and_gradients(head, {x}, {t}, 1.0, 0.0, &grads);
  double norm = 0;
  for (double g : flat_grads(grads)) norm += g * g;
  EXPECT_LT(std::sqrt(norm), 1e-8);
}

TEST(Gradients, MatchCentralFiniteDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1);
  const double lambda = 0.7, gamma = 0.3;
  const int D = 6, C = 2, F = 3, K = 2;

  for (int trial = 0; trial < 5; ++trial) {
    LinearHead head = LinearHead::random(D, C, F, K, rng, 0.4);
    std::vector<FeatureVector> xs;
    std::vector<SampleTarget> targets;
    for (int s = 0; s < 4; ++s) {
      FeatureVector x(D);
      for (double& v : x) v = u(rng);
      xs.push_back(x);
      SampleTarget t;
      t.label = static_cast<int>(rng() % (C + 1));
      if (t.label > 0) {
        for (int k = 0; k < F; ++k)
          if (rng() % 4 != 0) t.loc.push_back({k, OffsetVector{u(rng), u(rng), u(rng), u(rng)}});
        for (int k = 0; k < K; ++k) {
          t.ant_back.push_back({k, OffsetVector{u(rng), u(rng), u(rng), u(rng)}});
          if (rng() % 2 == 0)
            t.ant_fwd.push_back({k, OffsetVector{u(rng), u(rng), u(rng), u(rng)}});
        }
      }
      targets.push_back(t);
    }

    HeadGradients grads = HeadGradients::zeros_like(head);
    head_loss_and_gradients(head, xs, targets, lambda, gamma, &grads);
    const std::vector<double> analytic = flat_grads(grads);

    auto params = all_params(head);
    ASSERT_EQ(params.size(), analytic.size());
    const double h = 1e-6;
    double worst = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = *params[i];
      *params[i] = saved + h;
      const double up = head_loss_and_gradients(head, xs, targets, lambda, gamma, nullptr).total();
      *params[i] = saved - h;
      const double dn = head_loss_and_gradients(head, xs, targets, lambda, gamma, nullptr).total();
      *params[i] = saved;
      const double numeric = (up - dn) / (2 * h);
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
    EXPECT_LT(worst, 1e-4);
  }
}

TEST(Gradients, ZeroLambdaZeroesRegressionGradients) {
  std::mt19937_64 rng(5);
  LinearHead head = LinearHead::random(4, 2, 3, 0, rng);
  FeatureVector x{1, 2, 3, 4};
  SampleTarget t;
  t.label = 1;
  for (int k = 0; k < 3; ++k) t.loc.push_back({k, OffsetVector{5, 5, 5, 5}});
  HeadGradients grads = HeadGradients::zeros_like(head);
  head_loss_and_gradients(head, {x}, {t}, 0.0, 0.0, &grads);
  for (double g : grads.w_reg) EXPECT_DOUBLE_EQ(g, 0.0);
  for (double g : grads.b_reg) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(LinearModel, PerStepHeadsAreIndependent) {
  LinearHead head1 = LinearHead::zeros(3, 2, 2, 0);
  LinearHead head2 = LinearHead::zeros(3, 2, 2, 0);
  FeatureFn features = [](const Tubelet&, std::mt19937_64&) {
    return FeatureVector{1.0, 2.0, 3.0};
  };
  LinearModel m1(&head1, features), m2(&head2, features);
  Tubelet proposal = Tubelet::constant({0, 2}, Box(0, 0, 10, 10));
  std::mt19937_64 rng(1);
  const auto before = m1.refine(proposal, rng).detection.probs;
  head2.b_cls[1] = 3.0;  // mutate step-2 head only
  const auto after = m1.refine(proposal, rng).detection.probs;
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_DOUBLE_EQ(before[i], after[i]);
  EXPECT_NE(m2.refine(proposal, rng).detection.probs[1], after[1]);
}

TEST(LinearModel, RejectsWrongProposalLength) {
  LinearHead head = LinearHead::zeros(3, 2, 4, 0);
  LinearModel model(&head, [](const Tubelet&, std::mt19937_64&) {
    return FeatureVector{0, 0, 0};
  });
  std::mt19937_64 rng(1);
  EXPECT_THROW(model.refine(Tubelet::constant({0, 3}, Box(0, 0, 1, 1)), rng),
               std::invalid_argument);
}

TEST(Loss, SmoothL1Values) {
  EXPECT_DOUBLE_EQ(smooth_l1(0.0), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(1.0), 0.5);  // branches agree at the boundary
  EXPECT_DOUBLE_EQ(smooth_l1_grad(1.0), 1.0);
  EXPECT_DOUBLE_EQ(smooth_l1_grad(-1.0), -1.0);
}

TEST(Loss, LocLossExamples) {
  OffsetSequence target{{0, 0, 0, 0}};
  EXPECT_DOUBLE_EQ(loc_loss(target, target), 0.0);
  EXPECT_DOUBLE_EQ(loc_loss({{0.5, 0, 0, 0}}, target), 0.125);
  EXPECT_DOUBLE_EQ(loc_loss({{2.0, 0, 0, 0}}, target), 1.5);
  // averaged over frames
  EXPECT_DOUBLE_EQ(loc_loss({{0.5, 0, 0, 0}, {0, 0, 0, 0}}, {{0, 0, 0, 0}, {0, 0, 0, 0}}),
                   0.0625);
  EXPECT_THROW(loc_loss({{0, 0, 0, 0}}, {}), std::invalid_argument);
}

}  // namespace
}  // namespace step
