#pragma once

// Synthesizes event-sensor output for a star field seen along a trajectory.
//
// Each star is a hard binary disc. Between consecutive samples a star emits
// +1 events on pixels its disc newly covers and -1 events on pixels it left.
// On top of that every visible star flickers: it fires a fixed number of
// random-polarity events on random pixels of its current disc per sample,
// and the sensor adds uniform background noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <random>
#include <span>
#include <vector>

#include "evstab/common.hpp"
#include "evstab/sky.hpp"
#include "evstab/trajectory.hpp"

namespace evstab {

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;  // +1 or -1
  std::int64_t t_us = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  std::vector<Event> events;
  SensorGeometry geom;
  std::int64_t t0_us = 0;
  std::int64_t t1_us = 0;  // exclusive
};

struct SimConfig {
  double psf_radius = 2.0;
  int events_per_star_per_sample = 30;
  double background_rate = 1e-3;  // events per pixel per second
  std::uint64_t seed = 1;

  void validate() const {
    if (!(psf_radius >= 1.0)) throw ConfigError("psf_radius must be at least 1 pixel");
    if (events_per_star_per_sample < 0) throw ConfigError("flicker count must be non-negative");
    if (!(background_rate >= 0.0)) throw ConfigError("background rate must be non-negative");
  }
};

inline std::int64_t seconds_to_us(double t_s) { return std::llround(t_s * 1e6); }

/// Linear pixel indices (y * width + x) covered by a disc, ascending.
inline std::vector<std::uint32_t> rasterize_disc(Vec2 center, double radius, const SensorGeometry& geom) {
  std::vector<std::uint32_t> out;
  const int x0 = std::max(0, static_cast<int>(std::ceil(center.x - radius)));
  const int x1 = std::min(geom.width - 1, static_cast<int>(std::floor(center.x + radius)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(center.y - radius)));
  const int y1 = std::min(geom.height - 1, static_cast<int>(std::floor(center.y + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    const double dy = y - center.y;
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center.x;
      if (dx * dx + dy * dy <= r2)
        out.push_back(static_cast<std::uint32_t>(y) * static_cast<std::uint32_t>(geom.width) +
                      static_cast<std::uint32_t>(x));
    }
  }
  return out;
}

/// Stateful, sample-at-a-time generator. The closed loop drives it directly
/// so stage corrections shift what the sensor sees at the next sample.
class EventSynthesizer {
 public:
  EventSynthesizer(std::vector<CatalogStar> stars, SensorGeometry geom, SimConfig cfg)
      : stars_(std::move(stars)), geom_(geom), cfg_(cfg), rng_(cfg.seed), discs_(stars_.size()) {
    geom_.validate();
    cfg_.validate();
  }

  const SensorGeometry& geometry() const { return geom_; }

  /// Appends the events of one sample interval [t, t + interval) to `out`,
  /// sorted by time. `image_shift_px` is added to every projected star
  /// position (used for stage corrections).
  void emit(const Pointing& pointing, double interval_s, Vec2 image_shift_px, std::vector<Event>& out) {
    const std::int64_t t_begin = seconds_to_us(pointing.t_s);
    const std::int64_t t_end = std::max(t_begin + 1, seconds_to_us(pointing.t_s + interval_s));
    std::uniform_int_distribution<std::int64_t> when(t_begin, t_end - 1);
    std::bernoulli_distribution coin(0.5);

    const std::size_t first = out.size();
    auto push = [&](std::uint32_t index, std::int8_t p) {
      Event e;
      e.x = static_cast<std::uint16_t>(index % static_cast<std::uint32_t>(geom_.width));
      e.y = static_cast<std::uint16_t>(index / static_cast<std::uint32_t>(geom_.width));
      e.p = p;
      e.t_us = when(rng_);
      out.push_back(e);
    };

    const double margin = cfg_.psf_radius + 1.0;
    for (std::size_t i = 0; i < stars_.size(); ++i) {
      std::vector<std::uint32_t> disc;
      if (auto px = project_unclipped(stars_[i], pointing, geom_)) {
        const Vec2 c = *px + image_shift_px;
        if (c.x > -margin && c.x < geom_.width + margin && c.y > -margin && c.y < geom_.height + margin)
          disc = rasterize_disc(c, cfg_.psf_radius, geom_);
      }
      std::vector<std::uint32_t>& prev = discs_[i];
      if (disc.empty() && prev.empty()) continue;

      scratch_.clear();
      std::set_difference(disc.begin(), disc.end(), prev.begin(), prev.end(), std::back_inserter(scratch_));
      for (auto idx : scratch_) push(idx, +1);
      scratch_.clear();
      std::set_difference(prev.begin(), prev.end(), disc.begin(), disc.end(), std::back_inserter(scratch_));
      for (auto idx : scratch_) push(idx, -1);

      if (!disc.empty() && cfg_.events_per_star_per_sample > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, disc.size() - 1);
        for (int k = 0; k < cfg_.events_per_star_per_sample; ++k) {
          const std::uint32_t idx = disc[pick(rng_)];
          push(idx, coin(rng_) ? std::int8_t{1} : std::int8_t{-1});
        }
      }
      prev = std::move(disc);
    }

    if (cfg_.background_rate > 0.0) {
      const double mean = cfg_.background_rate * geom_.width * geom_.height *
                          (static_cast<double>(t_end - t_begin) * 1e-6);
      std::poisson_distribution<long> count(mean);
      std::uniform_int_distribution<std::uint32_t> pixel(
          0, static_cast<std::uint32_t>(geom_.width) * static_cast<std::uint32_t>(geom_.height) - 1);
      const long n = count(rng_);
      for (long k = 0; k < n; ++k) push(pixel(rng_), coin(rng_) ? std::int8_t{1} : std::int8_t{-1});
    }

    std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                     [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
  }

 private:
  std::vector<CatalogStar> stars_;
  SensorGeometry geom_;
  SimConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<std::vector<std::uint32_t>> discs_;
  std::vector<std::uint32_t> scratch_;
};

/// Interval between sample i and the next one; the last sample reuses the
/// previous spacing.
inline double sample_interval(std::span<const GroundTruthSample> samples, std::size_t i) {
  if (samples.size() < 2) return 1.0;
  if (i + 1 < samples.size()) return samples[i + 1].t_s - samples[i].t_s;
  return samples[i].t_s - samples[i - 1].t_s;
}

/// Open-loop stream for a whole trajectory. Stars outside the field emit
/// nothing.
inline EventStream synthesize(std::span<const GroundTruthSample> samples, const std::vector<CatalogStar>& stars,
                              const SensorGeometry& geom, const SimConfig& cfg,
                              std::span<const Vec2> image_shift_px = {}) {
  if (samples.empty()) throw ConfigError("synthesize needs at least one ground-truth sample");
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].t_s > samples[i - 1].t_s)) throw ConfigError("ground-truth samples must be time ordered");
  if (!image_shift_px.empty() && image_shift_px.size() != samples.size())
    throw ConfigError("one image shift per sample expected");

  EventSynthesizer synth(stars, geom, cfg);
  EventStream stream;
  stream.geom = geom;
  stream.t0_us = seconds_to_us(samples.front().t_s);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec2 shift = image_shift_px.empty() ? Vec2{} : image_shift_px[i];
    synth.emit(samples[i].pointing, sample_interval(samples, i), shift, stream.events);
  }
  stream.t1_us = seconds_to_us(samples.back().t_s + sample_interval(samples, samples.size() - 1));
  return stream;
}

}  // namespace evstab
