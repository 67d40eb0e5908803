#pragma once

// Flat `key = value` experiment configuration, used both for --config files
// and for the config echo written next to every run.

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "evstab/experiment.hpp"

namespace evstab {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<std::string(const ExperimentSpec&)> get;
  std::function<void(ExperimentSpec&, const std::string&, const std::string&)> set;
};

#define EVSTAB_DOUBLE(name, member)                                                                      \
  {name,                                                                                                \
   {[](const ExperimentSpec& s) { return fmt(static_cast<double>(s.member)); },                         \
    [](ExperimentSpec& s, const std::string& k, const std::string& v) { s.member = parse_double(k, v); }}}
#define EVSTAB_INT(name, member, type)                                                                   \
  {name,                                                                                                \
   {[](const ExperimentSpec& s) { return std::to_string(s.member); },                                   \
    [](ExperimentSpec& s, const std::string& k, const std::string& v) { s.member = parse_int<type>(k, v); }}}
#define EVSTAB_BOOL(name, member)                                                                        \
  {name,                                                                                                \
   {[](const ExperimentSpec& s) { return fmt(s.member); },                                              \
    [](ExperimentSpec& s, const std::string& k, const std::string& v) { s.member = parse_bool(k, v); }}}

inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"trajectory",
       {[](const ExperimentSpec& s) { return std::string(to_string(s.trajectory)); },
        [](ExperimentSpec& s, const std::string&, const std::string& v) { s.trajectory = parse_trajectory_kind(v); }}},
      {"noise_preset",
       {[](const ExperimentSpec& s) { return std::string(to_string(s.preset)); },
        [](ExperimentSpec& s, const std::string&, const std::string& v) { s.preset = parse_noise_preset(v); }}},
      EVSTAB_DOUBLE("noise_rate_hz", noise_rate_hz),
      EVSTAB_DOUBLE("duration_s", duration_s),
      EVSTAB_DOUBLE("delta_t_ms", delta_t_ms),
      EVSTAB_BOOL("kalman_filter", use_kf),
      EVSTAB_BOOL("median_filter", median_filter),
      EVSTAB_BOOL("control_lead", control_lead),
      {"polarity",
       {[](const ExperimentSpec& s) { return std::string(to_string(s.polarity)); },
        [](ExperimentSpec& s, const std::string&, const std::string& v) { s.polarity = parse_polarity_filter(v); }}},
      EVSTAB_INT("seed", seed, std::uint64_t),
      {"catalog",
       {[](const ExperimentSpec& s) { return s.catalog_path; },
        [](ExperimentSpec& s, const std::string&, const std::string& v) { s.catalog_path = v; }}},
      EVSTAB_DOUBLE("mag_limit", mag_limit),
      EVSTAB_DOUBLE("start_ra_deg", start.ra_deg),
      EVSTAB_DOUBLE("start_dec_deg", start.dec_deg),
      EVSTAB_INT("sensor_width", geom.width, int),
      EVSTAB_INT("sensor_height", geom.height, int),
      EVSTAB_DOUBLE("fov_x_deg", geom.fov_x_deg),
      EVSTAB_DOUBLE("fov_y_deg", geom.fov_y_deg),
      EVSTAB_DOUBLE("psf_radius_px", sim.psf_radius),
      EVSTAB_INT("flicker_events", sim.events_per_star_per_sample, int),
      EVSTAB_DOUBLE("background_rate", sim.background_rate),
      EVSTAB_DOUBLE("gate_radius_px", tracker.gate_radius),
      EVSTAB_DOUBLE("merge_radius_px", tracker.merge_radius),
      EVSTAB_INT("stale_frames", tracker.stale_frames, int),
      EVSTAB_DOUBLE("inlier_threshold_px", tracker.inlier_threshold),
      EVSTAB_INT("ransac_iterations", tracker.ransac_iterations, int),
      EVSTAB_DOUBLE("early_exit_ratio", tracker.early_exit_ratio),
      EVSTAB_INT("min_matched", tracker.min_matched, int),
      EVSTAB_INT("lost_after", tracker.lost_after, int),
      EVSTAB_INT("min_cluster", tracker.min_cluster_size, int),
      EVSTAB_BOOL("reacquire", tracker.reacquire),
      EVSTAB_DOUBLE("kf_q_pos", kf.q_pos),
      EVSTAB_DOUBLE("kf_q_vel", kf.q_vel),
      EVSTAB_DOUBLE("kf_r", kf.r),
      EVSTAB_DOUBLE("kf_p0_pos", kf.p0_pos),
      EVSTAB_DOUBLE("kf_p0_vel", kf.p0_vel),
      EVSTAB_BOOL("kf_jitter_process_noise", kf_jitter_process_noise),
      EVSTAB_DOUBLE("kp", gains.kp),
      EVSTAB_DOUBLE("ki", gains.ki),
      EVSTAB_DOUBLE("kd", gains.kd),
      EVSTAB_DOUBLE("integral_limit", gains.integral_limit),
      EVSTAB_DOUBLE("stage_step_as", stage.step_size_as),
      EVSTAB_DOUBLE("stage_max_rate_hz", stage.max_rate_hz),
      EVSTAB_INT("stage_latency_ticks", stage.latency_ticks, int),
      EVSTAB_DOUBLE("stage_max_move_as", stage.max_move_per_tick_as),
      EVSTAB_DOUBLE("stage_start_x_as", stage_start_as.x),
      EVSTAB_DOUBLE("stage_start_y_as", stage_start_as.y),
      EVSTAB_DOUBLE("settle_threshold_as", settle_threshold_as),
      EVSTAB_DOUBLE("settle_hold_s", settle_hold_s),
  };
  return table;
}

#undef EVSTAB_DOUBLE
#undef EVSTAB_INT
#undef EVSTAB_BOOL

}  // namespace detail

/// Sets one field by its config key. Unknown keys are an error.
inline void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : detail::fields())
    if (name == key) {
      field.set(spec, key, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Reads `key = value` lines onto `spec`. Blank lines and lines starting
/// with '#' are skipped.
inline void apply_config(ExperimentSpec& spec, std::istream& in) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    try {
      apply_setting(spec, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void load_config(ExperimentSpec& spec, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  apply_config(spec, in);
}

/// Every setting as `key = value`, followed by the derived seeds and the
/// generator name as comments.
inline void write_config(std::ostream& os, const ExperimentSpec& spec) {
  for (const auto& [name, field] : detail::fields()) os << name << " = " << field.get(spec) << '\n';
  os << "# generator = " << kGeneratorName << '\n';
  os << "# sim_seed = " << spec.sim_seed() << '\n';
  os << "# tracker_seed = " << spec.tracker_seed() << '\n';
  os << "# effective_kf_q_pos = " << detail::fmt(spec.effective_kf().q_pos) << '\n';
}

}  // namespace evstab
