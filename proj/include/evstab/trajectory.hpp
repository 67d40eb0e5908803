#pragma once

// Ground-truth pointing trajectories with random-walk jitter.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evstab/common.hpp"
#include "evstab/sky.hpp"

namespace evstab {

enum class TrajectoryKind { linear, square, circle, stationary };

inline TrajectoryKind parse_trajectory_kind(std::string_view name) {
  if (name == "linear") return TrajectoryKind::linear;
  if (name == "square") return TrajectoryKind::square;
  if (name == "circle") return TrajectoryKind::circle;
  if (name == "stationary") return TrajectoryKind::stationary;
  throw ConfigError("unknown trajectory kind '" + std::string(name) + "'");
}

inline const char* to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::linear: return "linear";
    case TrajectoryKind::square: return "square";
    case TrajectoryKind::circle: return "circle";
    case TrajectoryKind::stationary: return "stationary";
  }
  return "?";
}

// Jitter presets, arcsec per incremental step. N6 is anchored at 84 arcsec
// per step and each preset below is a factor ten smaller.
enum class NoisePreset { none, n9, n8, n7, n6 };

inline NoisePreset parse_noise_preset(std::string_view raw) {
  std::string name(raw);
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (name == "none") return NoisePreset::none;
  if (name == "n9") return NoisePreset::n9;
  if (name == "n8") return NoisePreset::n8;
  if (name == "n7") return NoisePreset::n7;
  if (name == "n6") return NoisePreset::n6;
  throw ConfigError("unknown noise preset '" + std::string(raw) + "'");
}

inline const char* to_string(NoisePreset p) {
  switch (p) {
    case NoisePreset::none: return "none";
    case NoisePreset::n9: return "n9";
    case NoisePreset::n8: return "n8";
    case NoisePreset::n7: return "n7";
    case NoisePreset::n6: return "n6";
  }
  return "?";
}

inline double preset_sigma_arcsec(NoisePreset p) {
  switch (p) {
    case NoisePreset::none: return 0.0;
    case NoisePreset::n9: return 0.084;
    case NoisePreset::n8: return 0.84;
    case NoisePreset::n7: return 8.4;
    case NoisePreset::n6: return 84.0;
  }
  return 0.0;
}

// Table geometry of the benchmark trajectories (arcsec, seconds).
inline constexpr double kLinearSpeedAsPerS = 18.0;  // 0.005 deg/s
inline constexpr double kSquareSideAs = 360.0;      // 0.1 deg
inline constexpr double kSquarePeriodS = 20.0;
inline constexpr double kCircleRadiusAs = 180.0;    // 0.05 deg
inline constexpr double kCirclePeriodS = 45.0;

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::linear;
  double duration_s = 10.0;
  double rate_hz = 100.0;
  double noise_sigma_as = 0.0;
  std::uint64_t seed = 1;
  Pointing start{88.0, 0.0, 0.0};

  void validate() const {
    if (!(duration_s > 0.0)) throw ConfigError("trajectory duration must be positive");
    if (!(rate_hz > 0.0)) throw ConfigError("trajectory rate must be positive");
    if (!(noise_sigma_as >= 0.0)) throw ConfigError("noise sigma must be non-negative");
    check_pole(start.dec_deg);
  }
};

struct GroundTruthSample {
  double t_s = 0.0;
  Pointing pointing;
  Pointing clean_pointing;
  // Tangent-plane offsets from the start pointing, arcsec.
  Vec2 offset_as;
  Vec2 clean_offset_as;
};

/// Jitter-free offset from the start pointing at time t.
inline Vec2 clean_offset(TrajectoryKind kind, double t_s) {
  switch (kind) {
    case TrajectoryKind::stationary:
      return {};
    case TrajectoryKind::linear:
      return {kLinearSpeedAsPerS * t_s, 0.0};
    case TrajectoryKind::square: {
      // Corners (0,0) (s,0) (s,s) (0,s), constant speed along each side.
      const double phase = std::fmod(t_s, kSquarePeriodS) / kSquarePeriodS * 4.0;
      const int side = std::min(3, static_cast<int>(phase));
      const double f = (phase - side) * kSquareSideAs;
      switch (side) {
        case 0: return {f, 0.0};
        case 1: return {kSquareSideAs, f};
        case 2: return {kSquareSideAs - f, kSquareSideAs};
        default: return {0.0, kSquareSideAs - f};
      }
    }
    case TrajectoryKind::circle: {
      // Starts on the circle; centre sits one radius in -xi from the start.
      const double w = 2.0 * std::numbers::pi * t_s / kCirclePeriodS;
      return {kCircleRadiusAs * (std::cos(w) - 1.0), kCircleRadiusAs * std::sin(w)};
    }
  }
  throw ConfigError("unknown trajectory kind");
}

inline std::size_t sample_count(const TrajectorySpec& spec) {
  return static_cast<std::size_t>(std::floor(spec.duration_s * spec.rate_hz + 1e-9)) + 1;
}

/// Samples at t = k / rate for k = 0 .. floor(duration * rate). The jittered
/// offset adds a cumulative sum of N(0, noise_sigma) increments per axis; the
/// first sample carries no jitter.
inline std::vector<GroundTruthSample> generate(const TrajectorySpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> step(0.0, 1.0);

  const std::size_t n = sample_count(spec);
  std::vector<GroundTruthSample> out;
  out.reserve(n);
  Vec2 walk;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / spec.rate_hz;
    if (k > 0 && spec.noise_sigma_as > 0.0) {
      const double dx = step(rng);
      const double dy = step(rng);
      walk += Vec2{dx, dy} * spec.noise_sigma_as;
    }
    GroundTruthSample s;
    s.t_s = t;
    s.clean_offset_as = clean_offset(spec.kind, t);
    s.offset_as = s.clean_offset_as + walk;
    s.clean_pointing = inverse_gnomonic(spec.start, s.clean_offset_as);
    s.pointing = inverse_gnomonic(spec.start, s.offset_as);
    s.clean_pointing.t_s = t;
    s.pointing.t_s = t;
    out.push_back(s);
  }
  return out;
}

inline void write_ground_truth_csv(std::ostream& os, const std::vector<GroundTruthSample>& samples) {
  os << "t_s,ra_deg,dec_deg,clean_ra_deg,clean_dec_deg\n";
  std::ostringstream row;
  row << std::setprecision(9);
  for (const auto& s : samples) {
    row.str("");
    row << s.t_s << ',' << s.pointing.ra_deg << ',' << s.pointing.dec_deg << ','
        << s.clean_pointing.ra_deg << ',' << s.clean_pointing.dec_deg << '\n';
    os << row.str();
  }
}

/// Reads the CSV written above. Offsets are recomputed against the first
/// clean pointing, so they carry the 9-digit rounding of the file.
inline std::vector<GroundTruthSample> read_ground_truth_csv(std::istream& is) {
  std::vector<GroundTruthSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line.rfind("t_s,", 0) != 0) throw ParseError("missing ground-truth header", line_no);
      continue;
    }
    if (line.empty()) continue;
    std::istringstream row(line);
    GroundTruthSample s;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    if (!(row >> s.t_s >> c1 >> s.pointing.ra_deg >> c2 >> s.pointing.dec_deg >> c3 >>
          s.clean_pointing.ra_deg >> c4 >> s.clean_pointing.dec_deg) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',')
      throw ParseError("malformed ground-truth row", line_no);
    s.pointing.t_s = s.clean_pointing.t_s = s.t_s;
    out.push_back(s);
  }
  if (!out.empty()) {
    const Pointing origin = out.front().clean_pointing;
    for (auto& s : out) {
      s.offset_as = *gnomonic(s.pointing.ra_deg, s.pointing.dec_deg, origin.ra_deg, origin.dec_deg);
      s.clean_offset_as =
          *gnomonic(s.clean_pointing.ra_deg, s.clean_pointing.dec_deg, origin.ra_deg, origin.dec_deg);
    }
  }
  return out;
}

}  // namespace evstab
