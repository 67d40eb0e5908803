#pragma once

// Relative attitude from star motion: keeps a local star map anchored at the
// first frame with enough stars, and estimates the 2-D translation of every
// later frame against it.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include "evstab/common.hpp"
#include "evstab/pipeline.hpp"

namespace evstab {

struct TrackerConfig {
  double gate_radius = 8.0;       // px, nearest-neighbour acceptance
  double merge_radius = 3.0;      // px, minimum spacing of map stars
  int stale_frames = 5;           // drop map stars unseen for longer than this
  double inlier_threshold = 1.5;  // px
  int ransac_iterations = 32;
  double early_exit_ratio = 0.8;
  int min_matched = 3;            // stars needed for a confident estimate
  int lost_after = 10;            // consecutive non-confident frames before "lost"
  int min_cluster_size = kDefaultMinClusterSize;
  bool reacquire = true;          // global hypothesis search when gating fails
  std::uint64_t seed = 7;

  void validate() const {
    if (!(gate_radius > 0.0) || !(merge_radius >= 0.0) || !(inlier_threshold > 0.0))
      throw ConfigError("tracker radii must be positive");
    if (stale_frames < 0 || ransac_iterations < 1 || min_matched < 1 || lost_after < 0 || min_cluster_size < 1)
      throw ConfigError("tracker counts out of range");
  }
};

struct MapStar {
  Vec2 position;  // origin-frame pixels
  std::int64_t last_seen = 0;
};

struct StarMap {
  std::vector<MapStar> stars;
  std::int64_t origin_frame = -1;

  bool seeded() const { return origin_frame >= 0; }
};

struct MotionEstimate {
  Vec2 t;          // cumulative translation from the origin frame, px
  Vec2 per_frame;  // increment against the previous estimate, px
  int inlier_count = 0;
  bool confident = false;
  bool track_lost = false;
};

struct Correspondence {
  std::size_t detection = 0;
  std::size_t map_star = 0;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

/// Greedy injective nearest-neighbour matching of detections against map
/// stars shifted by the prior translation. Pairs further apart than the gate
/// are never formed. Result is ordered by detection index.
inline std::vector<Correspondence> associate(std::span<const StarCentroid> detections, const StarMap& map,
                                             const MotionEstimate& prior, const TrackerConfig& cfg = {}) {
  struct Candidate {
    double d2;
    std::size_t det;
    std::size_t star;
  };
  std::vector<Candidate> candidates;
  const double gate2 = cfg.gate_radius * cfg.gate_radius;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Vec2 det{detections[i].x, detections[i].y};
    for (std::size_t p = 0; p < map.stars.size(); ++p) {
      const double d2 = squared_norm(det - (map.stars[p].position + prior.t));
      if (d2 <= gate2) candidates.push_back({d2, i, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.d2, a.det, a.star) < std::tie(b.d2, b.det, b.star);
  });

  std::vector<char> det_used(detections.size(), 0);
  std::vector<char> star_used(map.stars.size(), 0);
  std::vector<Correspondence> pairs;
  for (const Candidate& c : candidates) {
    if (det_used[c.det] || star_used[c.star]) continue;
    det_used[c.det] = star_used[c.star] = 1;
    pairs.push_back({c.det, c.star});
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Correspondence& a, const Correspondence& b) { return a.detection < b.detection; });
  return pairs;
}

struct TranslationFit {
  MotionEstimate estimate;
  std::vector<std::size_t> inliers;  // indices into the pair list, ascending
};

namespace detail {

inline Vec2 displacement(const Correspondence& c, std::span<const StarCentroid> detections, const StarMap& map) {
  return Vec2{detections[c.detection].x, detections[c.detection].y} - map.stars[c.map_star].position;
}

}  // namespace detail

/// Single-correspondence RANSAC over a pure 2-D translation. Every pair is a
/// hypothesis; when there are more pairs than iterations, hypotheses are
/// drawn with a seeded generator and the search stops once the inlier ratio
/// reaches cfg.early_exit_ratio. The best hypothesis has the most inliers,
/// then the smallest squared residual, then the lowest index. The returned
/// translation is the mean inlier displacement (detection minus map star).
inline TranslationFit estimate_translation(std::span<const Correspondence> pairs,
                                           std::span<const StarCentroid> detections, const StarMap& map,
                                           const MotionEstimate& prior, const TrackerConfig& cfg = {},
                                           std::uint64_t seed = 0) {
  TranslationFit fit;
  fit.estimate.t = prior.t;
  if (pairs.empty()) return fit;

  std::vector<Vec2> d(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) d[i] = detail::displacement(pairs[i], detections, map);

  const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;
  std::size_t best_count = 0;
  double best_residual = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  auto score = [&](std::size_t h) {
    std::size_t count = 0;
    double residual = 0.0;
    for (const Vec2& di : d) {
      const double r2 = squared_norm(di - d[h]);
      if (r2 <= thr2) {
        ++count;
        residual += r2;
      }
    }
    if (count > best_count || (count == best_count && residual < best_residual)) {
      best_count = count;
      best_residual = residual;
      best_index = h;
    }
  };

  const auto n = pairs.size();
  if (n <= static_cast<std::size_t>(cfg.ransac_iterations)) {
    for (std::size_t h = 0; h < n; ++h) score(h);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int it = 0; it < cfg.ransac_iterations; ++it) {
      score(pick(rng));
      if (static_cast<double>(best_count) >= cfg.early_exit_ratio * static_cast<double>(n)) break;
    }
  }

  Vec2 sum;
  for (std::size_t i = 0; i < n; ++i) {
    if (squared_norm(d[i] - d[best_index]) <= thr2) {
      fit.inliers.push_back(i);
      sum += d[i];
    }
  }
  const auto k = static_cast<double>(fit.inliers.size());
  fit.estimate.t = Vec2{sum.x / k, sum.y / k};
  fit.estimate.per_frame = fit.estimate.t - prior.t;
  fit.estimate.inlier_count = static_cast<int>(fit.inliers.size());
  fit.estimate.confident = fit.estimate.inlier_count >= cfg.min_matched;
  return fit;
}

/// Exhaustive search over every detection/map-star pairing as a translation
/// hypothesis, scored by how many detections land within the inlier
/// threshold of some shifted map star. Used when prior-gated matching fails,
/// e.g. after a jump larger than the gate.
inline std::optional<Vec2> reacquire(std::span<const StarCentroid> detections, const StarMap& map,
                                     const MotionEstimate& prior, const TrackerConfig& cfg = {}) {
  const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;
  std::size_t best_count = 0;
  double best_residual = std::numeric_limits<double>::infinity();
  double best_jump = std::numeric_limits<double>::infinity();
  Vec2 best;
  for (const StarCentroid& a : detections) {
    for (const MapStar& m : map.stars) {
      const Vec2 h = Vec2{a.x, a.y} - m.position;
      std::size_t count = 0;
      double residual = 0.0;
      for (const StarCentroid& b : detections) {
        double nearest = std::numeric_limits<double>::infinity();
        for (const MapStar& q : map.stars)
          nearest = std::min(nearest, squared_norm(Vec2{b.x, b.y} - (q.position + h)));
        if (nearest <= thr2) {
          ++count;
          residual += nearest;
        }
      }
      const double jump = squared_norm(h - prior.t);
      if (count > best_count || (count == best_count && (residual < best_residual ||
                                                         (residual == best_residual && jump < best_jump)))) {
        best_count = count;
        best_residual = residual;
        best_jump = jump;
        best = h;
      }
    }
  }
  if (best_count < static_cast<std::size_t>(cfg.min_matched)) return std::nullopt;
  return best;
}

/// Map maintenance after a frame. Matched stars get their last_seen
/// refreshed. When fewer than cfg.min_matched stars matched, unmatched
/// detections are moved back into origin coordinates and added unless they
/// fall within merge_radius of an existing star. Stars unseen for more than
/// stale_frames frames are dropped. The origin itself never moves.
inline StarMap update_map(StarMap map, std::span<const StarCentroid> detections,
                          std::span<const Correspondence> matched, const MotionEstimate& estimate,
                          std::int64_t frame_index, const TrackerConfig& cfg = {}) {
  std::vector<char> det_matched(detections.size(), 0);
  for (const Correspondence& c : matched) {
    map.stars[c.map_star].last_seen = frame_index;
    det_matched[c.detection] = 1;
  }

  if (matched.size() < static_cast<std::size_t>(cfg.min_matched)) {
    const double merge2 = cfg.merge_radius * cfg.merge_radius;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (det_matched[i]) continue;
      const Vec2 pos = Vec2{detections[i].x, detections[i].y} - estimate.t;
      const bool crowded = std::any_of(map.stars.begin(), map.stars.end(),
                                       [&](const MapStar& s) { return squared_norm(s.position - pos) < merge2; });
      if (!crowded) map.stars.push_back({pos, frame_index});
    }
  }

  std::erase_if(map.stars, [&](const MapStar& s) { return frame_index - s.last_seen > cfg.stale_frames; });
  return map;
}

/// Frame-by-frame tracking loop (detect, associate, estimate, update).
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const StarMap& map() const { return map_; }
  const TrackerConfig& config() const { return cfg_; }
  bool ever_lost() const { return ever_lost_; }
  std::int64_t frames_processed() const { return frame_index_; }

  MotionEstimate process(const EventFrame& frame) {
    return process(detect_stars(frame, cfg_.min_cluster_size));
  }

  MotionEstimate process(const std::vector<StarCentroid>& detections) {
    const std::int64_t index = frame_index_++;
    MotionEstimate out;
    if (!map_.seeded()) {
      if (detections.size() >= static_cast<std::size_t>(cfg_.min_matched)) seed_map(detections, index, out);
      else out.t = prior_.t;
    } else {
      TranslationFit fit = fit_frame(detections, prior_, index);
      std::vector<Correspondence> matched;
      for (std::size_t i : fit.inliers) matched.push_back(last_pairs_[i]);
      map_ = update_map(std::move(map_), detections, matched, fit.estimate, index, cfg_);
      out = fit.estimate;
    }
    out.per_frame = out.t - prior_.t;

    miss_streak_ = out.confident ? 0 : miss_streak_ + 1;
    out.track_lost = miss_streak_ > cfg_.lost_after;
    ever_lost_ = ever_lost_ || out.track_lost;
    prior_ = out;
    return out;
  }

 private:
  void seed_map(const std::vector<StarCentroid>& detections, std::int64_t index, MotionEstimate& out) {
    map_.origin_frame = index;
    const double merge2 = cfg_.merge_radius * cfg_.merge_radius;
    for (const StarCentroid& d : detections) {
      const Vec2 pos{d.x, d.y};
      const bool crowded = std::any_of(map_.stars.begin(), map_.stars.end(),
                                       [&](const MapStar& s) { return squared_norm(s.position - pos) < merge2; });
      if (!crowded) map_.stars.push_back({pos, index});
    }
    out.t = {};
    out.inlier_count = static_cast<int>(map_.stars.size());
    out.confident = out.inlier_count >= cfg_.min_matched;
  }

  TranslationFit fit_frame(const std::vector<StarCentroid>& detections, const MotionEstimate& prior,
                           std::int64_t index) {
    const std::uint64_t seed = cfg_.seed + static_cast<std::uint64_t>(index);
    last_pairs_ = associate(detections, map_, prior, cfg_);
    TranslationFit fit = estimate_translation(last_pairs_, detections, map_, prior, cfg_, seed);
    if (!cfg_.reacquire || fit.estimate.inlier_count >= cfg_.min_matched) return fit;

    auto jump = reacquire(detections, map_, prior, cfg_);
    if (!jump) return fit;
    MotionEstimate shifted = prior;
    shifted.t = *jump;
    auto pairs = associate(detections, map_, shifted, cfg_);
    TranslationFit again = estimate_translation(pairs, detections, map_, prior, cfg_, seed);
    if (again.estimate.inlier_count <= fit.estimate.inlier_count) return fit;
    last_pairs_ = std::move(pairs);
    return again;
  }

  TrackerConfig cfg_;
  StarMap map_;
  MotionEstimate prior_;
  std::vector<Correspondence> last_pairs_;
  std::int64_t frame_index_ = 0;
  int miss_streak_ = 0;
  bool ever_lost_ = false;
};

inline std::vector<MotionEstimate> track(std::span<const EventFrame> frames, const TrackerConfig& cfg = {}) {
  Tracker tracker(cfg);
  std::vector<MotionEstimate> out;
  out.reserve(frames.size());
  for (const EventFrame& f : frames) out.push_back(tracker.process(f));
  return out;
}

}  // namespace evstab
