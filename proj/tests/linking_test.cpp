#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "step/linking.hpp"

namespace step {
namespace {

LinkCandidate make_candidate(int clip, double score, Box box, int clip_len = 6) {
  LinkCandidate c;
  c.clip = clip;
  c.window = {clip * clip_len, (clip + 1) * clip_len};
  c.score = score;
  c.tubelet = Tubelet::constant(c.window, box);
  return c;
}

// Reference linker: same documented policy, independently realized through
// exhaustive sorted scans over the candidate pool at every choice point.
std::vector<ActionTube> reference_link(std::vector<LinkCandidate> candidates, int label,
                                       double threshold) {
  struct Item {
    LinkCandidate c;
    int index;
    bool used = false;
  };
  std::vector<Item> pool;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    pool.push_back({candidates[i], static_cast<int>(i)});

  std::vector<ActionTube> tubes;
  for (;;) {
    std::vector<Item*> unused;
    for (Item& it : pool)
      if (!it.used) unused.push_back(&it);
    if (unused.empty()) break;
    std::sort(unused.begin(), unused.end(), [](const Item* a, const Item* b) {
      if (a->c.score != b->c.score) return a->c.score > b->c.score;
      if (a->c.clip != b->c.clip) return a->c.clip < b->c.clip;
      return a->index < b->index;
    });
    Item* seed = unused.front();
    seed->used = true;
    std::vector<Item*> chain{seed};

    auto extend = [&](int direction) {
      for (Item* cur = direction > 0 ? chain.back() : chain.front();;) {
        std::vector<Item*> options;
        for (Item& it : pool) {
          if (it.used || it.c.clip != cur->c.clip + direction) continue;
          if (link_overlap(cur->c.tubelet, it.c.tubelet) > threshold) options.push_back(&it);
        }
        if (options.empty()) break;
        std::stable_sort(options.begin(), options.end(), [](const Item* a, const Item* b) {
          if (a->c.score != b->c.score) return a->c.score > b->c.score;
          return a->index < b->index;
        });
        options.front()->used = true;
        if (direction > 0)
          chain.push_back(options.front());
        else
          chain.insert(chain.begin(), options.front());
        cur = options.front();
      }
    };
    extend(+1);
    extend(-1);

    ActionTube tube;
    tube.label = label;
    double sum = 0;
    for (Item* it : chain) {
      tube.members.push_back({it->c.clip, it->c.window, it->c.score, it->c.tubelet});
      sum += it->c.score;
    }
    tube.score = sum / static_cast<double>(chain.size());
    tubes.push_back(std::move(tube));
  }
  return tubes;
}

TEST(LinkTubes, SingleOverlappingChainBecomesOneTube) {
  std::vector<LinkCandidate> cands;
  for (int c = 0; c < 4; ++c) cands.push_back(make_candidate(c, 0.5 + 0.1 * c, Box(100, 100, 160, 160)));
  auto tubes = link_tubes(cands, 2, 0.3);
  ASSERT_EQ(tubes.size(), 1u);
  EXPECT_EQ(tubes[0].label, 2);
  EXPECT_EQ(tubes[0].members.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(tubes[0].members[i].clip, static_cast<int>(i));
  EXPECT_NEAR(tubes[0].score, (0.5 + 0.6 + 0.7 + 0.8) / 4, 1e-12);
}

TEST(LinkTubes, SpatiallyDisjointTracksStaySeparate) {
  std::vector<LinkCandidate> cands;
  for (int c = 0; c < 3; ++c) {
    cands.push_back(make_candidate(c, 0.9, Box(0, 0, 50, 50)));
    cands.push_back(make_candidate(c, 0.8, Box(300, 300, 360, 360)));
  }
  auto tubes = link_tubes(cands, 1, 0.3);
  ASSERT_EQ(tubes.size(), 2u);
  EXPECT_EQ(tubes[0].members.size(), 3u);
  EXPECT_EQ(tubes[1].members.size(), 3u);
  // the higher-score track seeds first
  EXPECT_NEAR(tubes[0].score, 0.9, 1e-12);
}

TEST(LinkTubes, EmptyInputGivesEmptyOutput) {
  EXPECT_TRUE(link_tubes({}, 1, 0.5).empty());
}

TEST(LinkTubes, NoCandidateAppearsTwice) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LinkCandidate> cands;
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < 2; ++j)
        cands.push_back(make_candidate(c, u(rng), Box(u(rng) * 200, u(rng) * 200, 200, 200)));
    auto tubes = link_tubes(cands, 1, 0.2);
    std::size_t total = 0;
    for (const auto& t : tubes) total += t.members.size();
    EXPECT_EQ(total, cands.size());
  }
}

TEST(LinkTubes, MatchesReferenceOnSmallRandomInstances) {
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LinkCandidate> cands;
    const int clips = 2 + static_cast<int>(rng() % 2);
    for (int c = 0; c < clips; ++c) {
      const int per_clip = 1 + static_cast<int>(rng() % 2);
      for (int j = 0; j < per_clip && static_cast<int>(cands.size()) < 6; ++j) {
        const double x = u(rng) * 300, y = u(rng) * 300;
        cands.push_back(make_candidate(c, u(rng), Box(x, y, x + 60 + u(rng) * 60, y + 60 + u(rng) * 60)));
      }
    }
    const auto got = link_tubes(cands, 1, 0.2);
    const auto want = reference_link(cands, 1, 0.2);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t t = 0; t < got.size(); ++t) {
      ASSERT_EQ(got[t].members.size(), want[t].members.size());
      EXPECT_DOUBLE_EQ(got[t].score, want[t].score);
      for (std::size_t m = 0; m < got[t].members.size(); ++m) {
        EXPECT_EQ(got[t].members[m].clip, want[t].members[m].clip);
        EXPECT_DOUBLE_EQ(got[t].members[m].score, want[t].members[m].score);
      }
    }
  }
}

double brute_force_energy(const std::vector<double>& scores, double beta) {
  const std::size_t T = scores.size();
  double best = -1e18;
  for (std::uint32_t mask = 0; mask < (1u << T); ++mask) {
    double e = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const bool in = (mask >> t) & 1;
      e += in ? scores[t] : 1 - scores[t];
      if (t + 1 < T) {
        const bool next = (mask >> (t + 1)) & 1;
        if (in != next) e -= beta;
      }
    }
    best = std::max(best, e);
  }
  return best;
}

TEST(TemporalTrim, AllHighScoresKeepEverything) {
  TrimResult r = temporal_trim_scores({1.0, 1.0, 1.0, 1.0}, 0.3);
  for (bool k : r.keep) EXPECT_TRUE(k);
  EXPECT_EQ(r.first, 0);
  EXPECT_EQ(r.last, 3);
}

TEST(TemporalTrim, BetaZeroThresholdsAtHalf) {
  TrimResult r = temporal_trim_scores({0.9, 0.9, 0.1, 0.1}, 0.0);
  EXPECT_TRUE(r.keep[0]);
  EXPECT_TRUE(r.keep[1]);
  EXPECT_FALSE(r.keep[2]);
  EXPECT_FALSE(r.keep[3]);
  EXPECT_EQ(r.first, 0);
  EXPECT_EQ(r.last, 1);
  // generic beta=0 property
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(6);
    for (double& v : s) v = u(rng);
    TrimResult t = temporal_trim_scores(s, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(t.keep[i], s[i] >= 0.5);
  }
}

TEST(TemporalTrim, SmoothnessBridgesAScoreDip) {
  TrimResult r = temporal_trim_scores({0.9, 0.4, 0.9}, 0.2);
  EXPECT_TRUE(r.keep[0]);
  EXPECT_TRUE(r.keep[1]);
  EXPECT_TRUE(r.keep[2]);
  EXPECT_NEAR(r.energy, brute_force_energy({0.9, 0.4, 0.9}, 0.2), 1e-12);
}

TEST(TemporalTrim, MatchesBruteForceOnRandomTubes) {
  std::mt19937_64 rng(31415);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 1 + rng() % 12;
    std::vector<double> s(T);
    for (double& v : s) v = u(rng);
    const double beta = 0.4 * u(rng);
    TrimResult r = temporal_trim_scores(s, beta);
    EXPECT_NEAR(r.energy, brute_force_energy(s, beta), 1e-12) << "T=" << T << " beta=" << beta;
  }
}

TEST(TemporalTrim, AllOutProducesEmptyInterval) {
  ActionTube tube;
  tube.label = 1;
  for (int c = 0; c < 3; ++c)
    tube.members.push_back({c, {c * 6, (c + 1) * 6}, 0.05, Tubelet::constant({c * 6, (c + 1) * 6},
                                                                             Box(0, 0, 10, 10))});
  FrameInterval interval = temporal_trim(tube, 0.0);
  EXPECT_TRUE(interval.empty());
}

TEST(TemporalTrim, IntervalCoversKeptClipWindows) {
  ActionTube tube;
  tube.label = 1;
  const double scores[] = {0.2, 0.9, 0.8, 0.1};
  for (int c = 0; c < 4; ++c)
    tube.members.push_back({c, {c * 6, (c + 1) * 6}, scores[c],
                            Tubelet::constant({c * 6, (c + 1) * 6}, Box(0, 0, 10, 10))});
  FrameInterval interval = temporal_trim(tube, 0.0);
  EXPECT_EQ(interval, (FrameInterval{6, 18}));
}

}  // namespace
}  // namespace step
