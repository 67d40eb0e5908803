#pragma once

// Per-stage timing of the open-loop tracking pipeline.

#include <chrono>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "evstab/experiment.hpp"

namespace evstab {

inline constexpr double kBenchDurationS = 35.0;

struct BenchResult {
  std::string machine;
  Timings timings;
  double duration_s = 0.0;

  double total_hz() const { return timings.total.mean_ms > 0.0 ? 1000.0 / timings.total.mean_ms : 0.0; }
  double detection_pct() const { return pct(timings.detection.mean_ms); }
  double median_pct() const { return pct(timings.median.mean_ms); }

 private:
  double pct(double ms) const { return timings.total.mean_ms > 0.0 ? 100.0 * ms / timings.total.mean_ms : 0.0; }
};

/// Times the pipeline over a sequence of at least 35 s. A short run first
/// warms caches and the allocator.
inline BenchResult run_bench(ExperimentSpec spec, const std::string& machine = "this machine") {
  spec.duration_s = std::max(spec.duration_s, kBenchDurationS);
  ExperimentSpec warm = spec;
  warm.duration_s = 1.0;
  (void)run_open_loop(warm);
  const RunRecord rec = run_open_loop(spec);
  return {machine, rec.timings, spec.duration_s};
}

/// Rows in the layout "machine | system time (frequency) | star detection (%) | median filtering (%)".
inline void print_bench_table(std::ostream& os, const std::vector<BenchResult>& rows) {
  os << "Machine | System time (Frequency) | Star Detection Time (%) | Median Filtering Time (%)\n";
  char buf[256];
  for (const BenchResult& r : rows) {
    std::snprintf(buf, sizeof buf, "%s | %.3f ms (%.0fHz) | %.3f ms (%.2f%%) | %.3f ms (%.2f%%)\n", r.machine.c_str(),
                  r.timings.total.mean_ms, r.total_hz(), r.timings.detection.mean_ms, r.detection_pct(),
                  r.timings.median.mean_ms, r.median_pct());
    os << buf;
  }
}

struct ScalingPoint {
  int stars = 0;
  double detection_ms = 0.0;
};

/// Mean detect_stars time on synthetic frames with `n` randomly placed discs.
inline std::vector<ScalingPoint> detection_scaling(const std::vector<int>& star_counts, int repeats = 20,
                                                   std::uint64_t seed = 1) {
  const SensorGeometry geom;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(4.0, geom.width - 5.0), uy(4.0, geom.height - 5.0);
  std::vector<ScalingPoint> out;
  for (int n : star_counts) {
    EventFrame frame(geom.width, geom.height, 0, 1);
    for (int s = 0; s < n; ++s)
      for (std::uint32_t idx : rasterize_disc({ux(rng), uy(rng)}, 2.0, geom))
        frame.set(static_cast<int>(idx % geom.width), static_cast<int>(idx / geom.width));
    std::size_t sink = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) sink += detect_stars(frame).size();
    const auto t1 = std::chrono::steady_clock::now();
    if (sink == static_cast<std::size_t>(-1)) out.clear();  // keeps the loop observable
    out.push_back({n, std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats});
  }
  return out;
}

}  // namespace evstab
