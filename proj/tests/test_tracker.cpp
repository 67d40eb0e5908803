#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "evstab/tracker.hpp"

using namespace evstab;

namespace {

StarMap make_map(const std::vector<Vec2>& pts) {
  StarMap m;
  m.origin_frame = 0;
  for (Vec2 p : pts) m.stars.push_back({p, 0});
  return m;
}

std::vector<StarCentroid> dets_from(const std::vector<Vec2>& pts) {
  std::vector<StarCentroid> d;
  for (Vec2 p : pts) d.push_back({p.x, p.y, 13});
  return d;
}

std::vector<Correspondence> identity_pairs(std::size_t n) {
  std::vector<Correspondence> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({i, i});
  return c;
}

// Independent single-pair hypothesis enumeration: most inliers, then least
// squared residual, then lowest index; mean of inlier displacements.
struct OracleFit {
  Vec2 t;
  std::size_t inliers = 0;
};

OracleFit exhaustive_oracle(const std::vector<Vec2>& disp, double thr) {
  std::size_t best = 0, best_n = 0;
  double best_r = 1e300;
  for (std::size_t h = 0; h < disp.size(); ++h) {
    std::size_t n = 0;
    double r = 0;
    for (Vec2 d : disp) {
      const double dx = d.x - disp[h].x, dy = d.y - disp[h].y;
      if (dx * dx + dy * dy <= thr * thr) ++n, r += dx * dx + dy * dy;
    }
    if (n > best_n || (n == best_n && r < best_r)) best = h, best_n = n, best_r = r;
  }
  OracleFit f;
  Vec2 s;
  for (Vec2 d : disp) {
    const double dx = d.x - disp[best].x, dy = d.y - disp[best].y;
    if (dx * dx + dy * dy <= thr * thr) s += d, ++f.inliers;
  }
  f.t = Vec2{s.x / double(f.inliers), s.y / double(f.inliers)};
  return f;
}

// Minimum-total-distance assignment by trying every permutation of map stars.
std::vector<std::size_t> optimal_assignment(const std::vector<StarCentroid>& dets, const StarMap& map, Vec2 prior) {
  std::vector<std::size_t> perm(map.stars.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best;
  double best_cost = 1e300;
  do {
    double c = 0;
    for (std::size_t i = 0; i < dets.size(); ++i)
      c += norm(Vec2{dets[i].x, dets[i].y} - (map.stars[perm[i]].position + prior));
    if (c < best_cost) best_cost = c, best = perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(Associate, ExactAlignmentMatchesEverything) {
  const std::vector<Vec2> pts{{10, 10}, {50, 20}, {90, 70}, {30, 80}};
  const auto map = make_map(pts);
  MotionEstimate prior;
  prior.t = {2.5, -1.25};
  std::vector<Vec2> shifted;
  for (Vec2 p : pts) shifted.push_back(p + prior.t);
  const auto dets = dets_from(shifted);
  const auto pairs = associate(dets, map, prior);
  ASSERT_EQ(pairs.size(), 4u);
  for (const auto& c : pairs) {
    EXPECT_EQ(c.detection, c.map_star);
    EXPECT_EQ(norm(Vec2{dets[c.detection].x, dets[c.detection].y} - (map.stars[c.map_star].position + prior.t)), 0);
  }
}

TEST(Associate, GateRejectsFarDetections) {
  const auto map = make_map({{10, 10}, {60, 60}});
  TrackerConfig cfg;
  const auto dets = dets_from({{10 + cfg.gate_radius + 1e-6, 10}});
  EXPECT_TRUE(associate(dets, map, {}, cfg).empty());
  const auto inside = dets_from({{10 + cfg.gate_radius, 10}});
  EXPECT_EQ(associate(inside, map, {}, cfg).size(), 1u);
}

TEST(Associate, InjectiveGreedy) {
  const auto map = make_map({{10, 10}});
  const auto dets = dets_from({{11, 10}, {10.5, 10}});
  const auto pairs = associate(dets, map, {});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].detection, 1u);
}

TEST(Associate, AgreesWithOptimalAssignment) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ux(20, 1260), uy(20, 700), jitter(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec2> pts;
    while (pts.size() < 8) {
      const Vec2 p{ux(rng), uy(rng)};
      bool ok = true;
      for (Vec2 q : pts) ok = ok && norm(p - q) > 40;
      if (ok) pts.push_back(p);
    }
    const auto map = make_map(pts);
    const Vec2 truth{3.2, -1.7};
    std::vector<Vec2> moved;
    for (Vec2 p : pts) moved.push_back(p + truth);
    const auto dets = dets_from(moved);
    MotionEstimate prior;
    prior.t = truth + Vec2{jitter(rng) * 0.7, jitter(rng) * 0.7};
    const auto pairs = associate(dets, map, prior);
    const auto best = optimal_assignment(dets, map, prior.t);
    ASSERT_EQ(pairs.size(), pts.size());
    for (const auto& c : pairs) EXPECT_EQ(c.map_star, best[c.detection]);
  }
}

TEST(Estimate, UnanimousShift) {
  const std::vector<Vec2> pts{{10, 10}, {40, 10}, {70, 30}, {20, 60}};
  std::vector<Vec2> moved;
  for (Vec2 p : pts) moved.push_back(p + Vec2{2, 3});
  const auto dets = dets_from(moved);
  const auto pairs = identity_pairs(4);
  const auto fit = estimate_translation(pairs, dets, make_map(pts), {});
  EXPECT_EQ(fit.estimate.t, (Vec2{2, 3}));
  EXPECT_EQ(fit.estimate.inlier_count, 4);
  EXPECT_TRUE(fit.estimate.confident);
}

TEST(Estimate, SingleOutlierRejected) {
  std::vector<Vec2> pts, moved;
  for (int i = 0; i < 6; ++i) pts.push_back({10.0 + 30 * i, 20.0 + 7 * i});
  for (int i = 0; i < 5; ++i) moved.push_back(pts[i] + Vec2{1, 0});
  moved.push_back(pts[5] + Vec2{10, 5});
  const auto fit = estimate_translation(identity_pairs(6), dets_from(moved), make_map(pts), {});
  EXPECT_NEAR(fit.estimate.t.x, 1.0, 1e-12);
  EXPECT_NEAR(fit.estimate.t.y, 0.0, 1e-12);
  EXPECT_EQ(fit.estimate.inlier_count, 5);
}

TEST(Estimate, TightThresholdAveragesAllInliers) {
  const std::vector<Vec2> pts{{10, 10}, {40, 10}, {70, 30}};
  const auto dets = dets_from({pts[0] + Vec2{1, 0}, pts[1] + Vec2{1, 0}, pts[2] + Vec2{1.05, 0}});
  TrackerConfig cfg;
  cfg.inlier_threshold = 0.1;
  const auto fit = estimate_translation(identity_pairs(3), dets, make_map(pts), {}, cfg);
  EXPECT_NEAR(fit.estimate.t.x, (1 + 1 + 1.05) / 3.0, 1e-12);
  EXPECT_EQ(fit.estimate.inlier_count, 3);
}

TEST(Estimate, NoPairsCarriesPrior) {
  MotionEstimate prior;
  prior.t = {4, 5};
  const auto fit = estimate_translation({}, {}, make_map({}), prior);
  EXPECT_EQ(fit.estimate.t, prior.t);
  EXPECT_FALSE(fit.estimate.confident);
  EXPECT_EQ(fit.estimate.inlier_count, 0);
}

// Every instance with up to six pairs and at most one far outlier.
TEST(EstimateOracle, MatchesExhaustiveHypothesisSearch) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> noise(0, 0.2);
  std::uniform_real_distribution<double> u(-1, 1), pos(0, 600);
  TrackerConfig cfg;
  int checked = 0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (int outliers = 0; outliers <= 1; ++outliers) {
      if (outliers > 0 && n < 2) continue;
      for (int trial = 0; trial < 200; ++trial) {
        const Vec2 truth{u(rng) * 20, u(rng) * 20};
        std::vector<Vec2> pts, moved, disp;
        for (std::size_t i = 0; i < n; ++i) {
          const Vec2 p{pos(rng), pos(rng)};
          Vec2 d = truth + Vec2{noise(rng), noise(rng)};
          if (outliers && i == n - 1) {
            const double ang = u(rng) * 3.14159;
            d = truth + Vec2{std::cos(ang), std::sin(ang)} * (10 * cfg.inlier_threshold + 5 * std::abs(u(rng)));
          }
          pts.push_back(p);
          moved.push_back(p + d);
        }
        const auto dets = dets_from(moved);
        const auto map = make_map(pts);
        for (std::size_t i = 0; i < n; ++i) disp.push_back(Vec2{dets[i].x, dets[i].y} - map.stars[i].position);
        const auto fit = estimate_translation(identity_pairs(n), dets, map, {}, cfg);
        const OracleFit o = exhaustive_oracle(disp, cfg.inlier_threshold);
        EXPECT_EQ(fit.estimate.t, o.t);
        EXPECT_EQ(static_cast<std::size_t>(fit.estimate.inlier_count), o.inliers);
        ++checked;
      }
    }
  EXPECT_EQ(checked, 6 * 200 + 5 * 200);
}

TEST(EstimateProperty, IntegerShiftEquivariance) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> q(0, 64 * 600);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec2> pts, moved;
    for (int i = 0; i < 7; ++i) {
      pts.push_back({q(rng) / 64.0, q(rng) / 64.0});
      moved.push_back(pts.back() + Vec2{(q(rng) % 64) / 64.0, (q(rng) % 64) / 64.0});
    }
    const auto map = make_map(pts);
    const Vec2 k{double(q(rng) % 13) - 6, double(q(rng) % 13) - 6};
    std::vector<Vec2> shifted;
    for (Vec2 m : moved) shifted.push_back(m + k);
    const auto a = estimate_translation(identity_pairs(7), dets_from(moved), map, {});
    const auto b = estimate_translation(identity_pairs(7), dets_from(shifted), map, {});
    EXPECT_NEAR(b.estimate.t.x, a.estimate.t.x + k.x, 1e-12);
    EXPECT_NEAR(b.estimate.t.y, a.estimate.t.y + k.y, 1e-12);
  }
}

TEST(Estimate, SampledRansacIsSeededAndFindsConsensus) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> pos(0, 1000);
  std::vector<Vec2> pts, moved;
  for (int i = 0; i < 60; ++i) {
    pts.push_back({pos(rng), pos(rng)});
    moved.push_back(pts.back() + (i % 5 == 0 ? Vec2{40, -30} : Vec2{2, 1}));
  }
  const auto map = make_map(pts);
  const auto dets = dets_from(moved);
  const auto a = estimate_translation(identity_pairs(60), dets, map, {}, {}, 3);
  const auto b = estimate_translation(identity_pairs(60), dets, map, {}, {}, 3);
  EXPECT_EQ(a.estimate.t, b.estimate.t);
  EXPECT_NEAR(a.estimate.t.x, 2, 1e-12);
  EXPECT_EQ(a.estimate.inlier_count, 48);
}

TEST(Reacquire, FindsJumpBeyondGate) {
  const std::vector<Vec2> pts{{100, 100}, {300, 120}, {500, 400}, {200, 600}, {900, 300}};
  std::vector<Vec2> moved;
  for (Vec2 p : pts) moved.push_back(p + Vec2{-25, 17});
  const auto jump = reacquire(dets_from(moved), make_map(pts), {});
  ASSERT_TRUE(jump);
  EXPECT_NEAR(jump->x, -25, 1e-12);
  EXPECT_NEAR(jump->y, 17, 1e-12);
}

TEST(UpdateMap, HealthyTrackingOnlyRefreshes) {
  const std::vector<Vec2> pts{{10, 10}, {40, 10}, {70, 30}, {20, 60}, {90, 90}};
  const auto map = make_map(pts);
  const auto dets = dets_from({{10, 10}, {40, 10}, {70, 30}, {20, 60}, {90, 90}, {200, 200}});
  const auto out = update_map(map, dets, identity_pairs(5), {}, 3);
  ASSERT_EQ(out.stars.size(), 5u);
  for (const auto& s : out.stars) EXPECT_EQ(s.last_seen, 3);
}

TEST(UpdateMap, FewMatchesInsertBackTransformed) {
  const auto map = make_map({{10, 10}, {40, 10}});
  MotionEstimate est;
  est.t = {1, 2};
  const auto dets = dets_from({{11, 12}, {41, 12}, {101, 102}, {201, 52}, {301, 302}});
  const auto out = update_map(map, dets, identity_pairs(2), est, 1);
  ASSERT_EQ(out.stars.size(), 5u);
  EXPECT_EQ(out.stars[2].position, (Vec2{100, 100}));
  // Next frame the same detections all match.
  MotionEstimate prior;
  prior.t = est.t;
  EXPECT_EQ(associate(dets, out, prior).size(), 5u);
}

TEST(UpdateMap, RespectsMergeRadius) {
  const auto map = make_map({{10, 10}});
  const auto dets = dets_from({{12, 10}, {50, 50}, {51, 51}});
  const auto out = update_map(map, dets, {}, {}, 1);
  EXPECT_EQ(out.stars.size(), 2u);  // (12,10) too close to (10,10); (51,51) too close to (50,50)
}

TEST(UpdateMap, StaleStarsRemoved) {
  TrackerConfig cfg;
  auto map = make_map({{10, 10}, {40, 10}});
  map.stars[1].last_seen = 0;
  const auto keep = update_map(map, {}, {}, {}, cfg.stale_frames, cfg);
  EXPECT_EQ(keep.stars.size(), 2u);
  const auto drop = update_map(map, {}, {}, {}, cfg.stale_frames + 1, cfg);
  EXPECT_TRUE(drop.stars.empty());
}

TEST(Tracker, EmptyFramesAreNeverConfident) {
  Tracker t;
  for (int i = 0; i < 20; ++i) {
    const auto est = t.process(std::vector<StarCentroid>{});
    EXPECT_FALSE(est.confident);
    EXPECT_EQ(est.t, (Vec2{}));
  }
  EXPECT_FALSE(t.map().seeded());
  EXPECT_TRUE(t.ever_lost());
}

TEST(Tracker, SeedsOnFirstFrameWithThreeStars) {
  Tracker t;
  EXPECT_FALSE(t.process(dets_from({{10, 10}, {50, 50}})).confident);
  const auto seeded = t.process(dets_from({{10, 10}, {50, 50}, {90, 20}}));
  EXPECT_TRUE(seeded.confident);
  EXPECT_EQ(t.map().origin_frame, 1);
  EXPECT_EQ(seeded.t, (Vec2{}));
}

TEST(Tracker, LostAfterElevenMisses) {
  Tracker t;
  t.process(dets_from({{10, 10}, {50, 50}, {90, 20}}));
  for (int i = 1; i <= 11; ++i) {
    const auto est = t.process(std::vector<StarCentroid>{});
    EXPECT_EQ(est.track_lost, i > 10) << i;
  }
}

TEST(TrackerProperty, CumulativeEqualsSumOfIncrements) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(50, 600), step(-1.5, 1.5);
  std::vector<Vec2> field;
  for (int i = 0; i < 12; ++i) field.push_back({pos(rng), pos(rng)});
  Tracker t;
  Vec2 truth, sum;
  for (int k = 0; k < 200; ++k) {
    if (k > 0) truth += Vec2{step(rng), step(rng)};
    std::vector<Vec2> moved;
    for (Vec2 p : field) moved.push_back(p + truth);
    const auto est = t.process(dets_from(moved));
    sum += est.per_frame;
    EXPECT_NEAR(est.t.x, sum.x, 1e-9 * (k + 1));
    EXPECT_NEAR(est.t.y, sum.y, 1e-9 * (k + 1));
    EXPECT_NEAR(est.t.x, truth.x, 1e-9);
  }
  EXPECT_LE(t.map().stars.size(), field.size());
}

TEST(TrackerProperty, MapSizeBounded) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(0, 700);
  TrackerConfig cfg;
  Tracker t(cfg);
  for (int k = 0; k < 100; ++k) {
    // Two persistent stars plus a fresh random scatter each frame.
    std::vector<Vec2> pts{{100, 100}, {400, 300}};
    for (int i = 0; i < 4; ++i) pts.push_back({pos(rng), pos(rng)});
    t.process(dets_from(pts));
    EXPECT_LE(t.map().stars.size(), 6u * (cfg.stale_frames + 2));
  }
}
