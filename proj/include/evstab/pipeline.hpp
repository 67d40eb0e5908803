#pragma once

// Event batching, noise suppression and star detection.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evstab/common.hpp"
#include "evstab/evsim.hpp"

namespace evstab {

enum class PolarityFilter { both, positive };

inline PolarityFilter parse_polarity_filter(std::string_view name) {
  if (name == "both") return PolarityFilter::both;
  if (name == "positive") return PolarityFilter::positive;
  throw ConfigError("unknown polarity filter '" + std::string(name) + "'");
}

inline const char* to_string(PolarityFilter f) { return f == PolarityFilter::both ? "both" : "positive"; }

/// Binary occupancy of one batch window. Keeps the list of set pixels next
/// to the dense grid so sparse frames are cheap to walk.
class EventFrame {
 public:
  EventFrame() = default;
  EventFrame(int width, int height, std::int64_t window_start_us, std::int64_t window_end_us)
      : window_start_us(window_start_us),
        window_end_us(window_end_us),
        width_(width),
        height_(height),
        grid_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {}

  std::int64_t window_start_us = 0;
  std::int64_t window_end_us = 0;
  std::size_t event_count = 0;

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_ && grid_[index(x, y)] != 0;
  }

  void set(int x, int y) {
    const std::size_t i = index(x, y);
    if (grid_[i] == 0) {
      grid_[i] = 1;
      set_pixels_.push_back(static_cast<std::uint32_t>(i));
    }
  }

  /// Linear indices of set pixels in the order they were first set.
  const std::vector<std::uint32_t>& set_pixels() const { return set_pixels_; }
  std::size_t set_count() const { return set_pixels_.size(); }
  const std::vector<std::uint8_t>& grid() const { return grid_; }

  friend bool operator==(const EventFrame& a, const EventFrame& b) {
    return a.window_start_us == b.window_start_us && a.window_end_us == b.window_end_us &&
           a.event_count == b.event_count && a.width_ == b.width_ && a.height_ == b.height_ && a.grid_ == b.grid_;
  }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> grid_;
  std::vector<std::uint32_t> set_pixels_;
};

inline bool accepts(PolarityFilter f, const Event& e) { return f == PolarityFilter::both || e.p > 0; }

/// Frame from events already known to lie in [start, end).
inline EventFrame make_frame(std::span<const Event> events, std::int64_t start_us, std::int64_t end_us,
                             const SensorGeometry& geom, PolarityFilter filter = PolarityFilter::both) {
  EventFrame frame(geom.width, geom.height, start_us, end_us);
  for (const Event& e : events) {
    if (!accepts(filter, e)) continue;
    frame.set(e.x, e.y);
    ++frame.event_count;
  }
  return frame;
}

/// Visits frame k = [t0 + k*dt, t0 + (k+1)*dt) for every window up to the end
/// of the stream. An event stream without events yields no frames.
template <class Visitor>
void for_each_frame(const EventStream& stream, std::int64_t delta_t_us, Visitor&& visit,
                    PolarityFilter filter = PolarityFilter::both) {
  if (delta_t_us <= 0) throw ConfigError("delta_t must be positive");
  if (stream.events.empty()) return;
  const std::int64_t last = std::max(stream.t1_us, stream.events.back().t_us + 1);
  const std::int64_t frames = (last - stream.t0_us + delta_t_us - 1) / delta_t_us;
  auto it = stream.events.begin();
  while (it != stream.events.end() && it->t_us < stream.t0_us) ++it;  // not part of any window
  for (std::int64_t k = 0; k < frames; ++k) {
    const std::int64_t start = stream.t0_us + k * delta_t_us;
    const std::int64_t end = start + delta_t_us;
    auto stop = it;
    while (stop != stream.events.end() && stop->t_us < end) ++stop;
    visit(make_frame(std::span<const Event>(it, stop), start, end,
                     stream.geom, filter));
    it = stop;
  }
}

inline std::vector<EventFrame> batch(const EventStream& stream, std::int64_t delta_t_us,
                                     PolarityFilter filter = PolarityFilter::both) {
  std::vector<EventFrame> frames;
  for_each_frame(stream, delta_t_us, [&](EventFrame&& f) { frames.push_back(std::move(f)); }, filter);
  return frames;
}

/// 3x3 binary median: a pixel is set iff at least 5 of its 9 neighbourhood
/// cells are set, borders padded with zeros. event_count becomes the number
/// of surviving set pixels.
inline EventFrame median_filter(const EventFrame& in) {
  const int w = in.width();
  const int h = in.height();
  EventFrame out(w, h, in.window_start_us, in.window_end_us);
  if (in.set_count() == 0) return out;

  std::vector<std::uint8_t> votes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  std::vector<std::uint32_t> touched;
  touched.reserve(in.set_count() * 9);
  for (std::uint32_t idx : in.set_pixels()) {
    const int x = static_cast<int>(idx % static_cast<std::uint32_t>(w));
    const int y = static_cast<int>(idx / static_cast<std::uint32_t>(w));
    for (int dy = -1; dy <= 1; ++dy) {
      const int yy = y + dy;
      if (yy < 0 || yy >= h) continue;
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = x + dx;
        if (xx < 0 || xx >= w) continue;
        const std::size_t j = static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx);
        if (votes[j]++ == 0) touched.push_back(static_cast<std::uint32_t>(j));
      }
    }
  }
  std::sort(touched.begin(), touched.end());
  for (std::uint32_t j : touched)
    if (votes[j] >= 5)
      out.set(static_cast<int>(j % static_cast<std::uint32_t>(w)), static_cast<int>(j / static_cast<std::uint32_t>(w)));
  out.event_count = out.set_count();
  return out;
}

struct StarCentroid {
  double x = 0.0;
  double y = 0.0;
  int pixel_count = 0;
};

inline constexpr int kDefaultMinClusterSize = 4;

/// 8-connected components of set pixels with at least `min_cluster_size`
/// pixels, reported by unweighted centroid, largest first. Equal sizes keep
/// raster order of each component's first pixel.
inline std::vector<StarCentroid> detect_stars(const EventFrame& frame, int min_cluster_size = kDefaultMinClusterSize) {
  const int w = frame.width();
  const int h = frame.height();
  std::vector<StarCentroid> found;
  if (frame.set_count() == 0) return found;

  std::vector<std::uint32_t> seeds = frame.set_pixels();
  std::sort(seeds.begin(), seeds.end());
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  const auto& grid = frame.grid();
  std::vector<std::uint32_t> stack;

  for (std::uint32_t seed : seeds) {
    if (seen[seed]) continue;
    seen[seed] = 1;
    stack.assign(1, seed);
    long long sx = 0, sy = 0;
    int n = 0;
    while (!stack.empty()) {
      const std::uint32_t idx = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(idx % static_cast<std::uint32_t>(w));
      const int y = static_cast<int>(idx / static_cast<std::uint32_t>(w));
      sx += x;
      sy += y;
      ++n;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if ((dx == 0 && dy == 0) || xx < 0 || xx >= w) continue;
          const std::size_t j = static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx);
          if (grid[j] && !seen[j]) {
            seen[j] = 1;
            stack.push_back(static_cast<std::uint32_t>(j));
          }
        }
      }
    }
    if (n >= min_cluster_size)
      found.push_back({static_cast<double>(sx) / n, static_cast<double>(sy) / n, n});
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const StarCentroid& a, const StarCentroid& b) { return a.pixel_count > b.pixel_count; });
  return found;
}

}  // namespace evstab
