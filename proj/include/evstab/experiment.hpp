#pragma once

// End-to-end experiments: simulator -> pipeline -> tracker -> (KF -> PID -> stage).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evstab/common.hpp"
#include "evstab/control.hpp"
#include "evstab/evsim.hpp"
#include "evstab/metrics.hpp"
#include "evstab/pipeline.hpp"
#include "evstab/sky.hpp"
#include "evstab/tracker.hpp"
#include "evstab/trajectory.hpp"

#ifndef EVSTAB_DATA_DIR
#define EVSTAB_DATA_DIR "data"
#endif

namespace evstab {

inline std::string default_catalog_path() { return std::string(EVSTAB_DATA_DIR) + "/catalog_500.txt"; }

struct ExperimentSpec {
  TrajectoryKind trajectory = TrajectoryKind::linear;
  NoisePreset preset = NoisePreset::n8;
  double noise_rate_hz = 100.0;
  double duration_s = 20.0;
  double delta_t_ms = 100.0;  // frame window; also the control period in closed loop
  bool use_kf = true;
  bool median_filter = true;
  bool control_lead = true;  // controller acts on the KF prediction one latency ahead
  PolarityFilter polarity = PolarityFilter::both;
  std::uint64_t seed = 1;

  std::string catalog_path = default_catalog_path();
  double mag_limit = 6.0;
  Pointing start{88.0, 0.0, 0.0};
  SensorGeometry geom;
  SimConfig sim;
  TrackerConfig tracker;
  KalmanConfig kf;
  bool kf_jitter_process_noise = true;  // add the preset's random-walk variance to q_pos
  PidGains gains;
  StageConfig stage;
  Vec2 stage_start_as;

  double settle_threshold_as = 10.0;
  double settle_hold_s = 1.0;

  std::int64_t delta_t_us() const { return std::llround(delta_t_ms * 1000.0); }
  double delta_t_s() const { return static_cast<double>(delta_t_us()) * 1e-6; }
  double noise_sigma_as() const { return preset_sigma_arcsec(preset); }

  TrajectorySpec trajectory_spec() const {
    TrajectorySpec t;
    t.kind = trajectory;
    t.duration_s = duration_s;
    t.rate_hz = noise_rate_hz;
    t.noise_sigma_as = noise_sigma_as();
    t.seed = seed;
    t.start = start;
    return t;
  }

  // Subsystem seeds derive from the one experiment seed.
  std::uint64_t sim_seed() const { return seed * 0x9E3779B97F4A7C15ull + 1; }
  std::uint64_t tracker_seed() const { return seed * 0xBF58476D1CE4E5B9ull + 7; }

  /// Process noise actually used: configured q_pos plus, optionally, the
  /// random-walk variance the jitter preset injects over one frame.
  KalmanConfig effective_kf() const {
    KalmanConfig k = kf;
    if (kf_jitter_process_noise) {
      const double ps = 0.5 * (geom.plate_scale_x() + geom.plate_scale_y());
      const double sigma_px = noise_sigma_as() / ps;
      k.q_pos += sigma_px * sigma_px * noise_rate_hz * delta_t_s();
    }
    return k;
  }

  void validate() const {
    trajectory_spec().validate();
    geom.validate();
    sim.validate();
    tracker.validate();
    gains.validate();
    stage.validate();
    if (!(delta_t_ms > 0.0)) throw ConfigError("delta_t must be positive");
    if (!std::isfinite(mag_limit)) throw ConfigError("magnitude limit must be finite");
  }
};

struct FrameRecord {
  std::int64_t frame = 0;
  std::int64_t t_us = 0;  // window midpoint
  Vec2 raw_px;            // tracker cumulative translation
  Vec2 est_px;            // reported estimate (KF position when enabled)
  int inliers = 0;
  bool confident = false;
  bool track_lost = false;
  std::size_t detections = 0;
};

struct ControlRecord {
  std::int64_t tick = 0;
  double t_s = 0.0;
  Vec2 err_as;    // error the controller acted on
  Vec2 u_as;      // quantized command sent to the stage
  Vec2 stage_as;  // stage position when the command was issued
  bool saturated = false;
};

struct StageTiming {
  double mean_ms = 0.0;
  double max_ms = 0.0;
};

struct Timings {
  std::size_t frames = 0;
  StageTiming median;
  StageTiming detection;
  StageTiming tracking;  // association, estimation, map update and filtering
  StageTiming total;
};

struct RunRecord {
  ExperimentSpec spec;
  std::vector<GroundTruthSample> gt;
  std::vector<FrameRecord> frames;
  std::vector<ControlRecord> control;
  // Arcsec image-shift traces, relative to the tracker origin, one per frame.
  std::vector<TracePoint> gt_trace;
  std::vector<TracePoint> est_trace;
  // Closed loop only: true pointing error at every ground-truth sample.
  std::vector<TracePoint> err_trace;
  Timings timings;
  std::int64_t origin_frame = -1;
  std::size_t event_count = 0;
  bool track_lost = false;
  bool diverged = false;
  std::string diagnostic;
  std::optional<double> rmse_as;
};

namespace detail {

class StopWatch {
 public:
  StopWatch() : start_(std::chrono::steady_clock::now()) {}
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - start_).count();
    start_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct TimingAccumulator {
  double sum = 0.0;
  double max = 0.0;
  void add(double ms) {
    sum += ms;
    max = std::max(max, ms);
  }
  StageTiming finish(std::size_t n) const { return {n ? sum / static_cast<double>(n) : 0.0, max}; }
};

/// Pixel displacement of the star field caused by `pointing`, measured on a
/// reference star placed at the start boresight.
inline Vec2 image_shift_px(const Pointing& pointing, const Pointing& start, const SensorGeometry& geom) {
  const CatalogStar ref{start.ra_deg, start.dec_deg, 0.0};
  return *project_unclipped(ref, pointing, geom) - geom.center();
}

/// Image shift (arcsec) of every ground-truth sample, plus the stage
/// position in effect at that sample when given.
inline std::vector<TracePoint> sample_shifts_as(const std::vector<GroundTruthSample>& gt, const ExperimentSpec& spec,
                                                std::span<const Vec2> stage_as = {}) {
  std::vector<TracePoint> out;
  out.reserve(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i)
    out.push_back({gt[i].t_s, spec.geom.pixels_to_arcsec(image_shift_px(gt[i].pointing, spec.start, spec.geom)) +
                                  (stage_as.empty() ? Vec2{} : stage_as[i])});
  return out;
}

/// Mean of the samples whose timestamp lies in [start, end), falling back to
/// the sample nearest the window centre for empty windows.
inline Vec2 window_mean(std::span<const TracePoint> shifts, std::int64_t start_us, std::int64_t end_us) {
  auto lo = std::lower_bound(shifts.begin(), shifts.end(), start_us,
                             [](const TracePoint& p, std::int64_t t) { return seconds_to_us(p.t_s) < t; });
  auto hi = std::lower_bound(lo, shifts.end(), end_us,
                             [](const TracePoint& p, std::int64_t t) { return seconds_to_us(p.t_s) < t; });
  if (lo == hi) return shifts[nearest_index(shifts, 0.5e-6 * static_cast<double>(start_us + end_us))].v;
  Vec2 sum;
  for (auto it = lo; it != hi; ++it) sum += it->v;
  return sum * (1.0 / static_cast<double>(hi - lo));
}

/// KF bookkeeping shared by both loops.
class Smoother {
 public:
  Smoother(bool enabled, KalmanConfig cfg) : enabled_(enabled), cfg_(cfg) {}

  /// Feeds one frame; returns the position to report (px).
  Vec2 step(const MotionEstimate& est, double t_s, double dt, Vec2 control_px) {
    if (!enabled_) return est.t;
    if (!state_) {
      if (!est.confident) return est.t;
      state_ = kf_init(est.t, t_s, cfg_);
      return est.t;
    }
    FilterState s = kf_predict(*state_, dt, control_px, cfg_);
    if (est.confident) s = kf_update(s, est.t, cfg_).state;
    state_ = s;
    return s.position();
  }

  bool ready() const { return state_.has_value(); }
  Vec2 velocity() const { return state_ ? state_->velocity() : Vec2{}; }

 private:
  bool enabled_;
  KalmanConfig cfg_;
  std::optional<FilterState> state_;
};

}  // namespace detail

/// Tracking without actuation. The stage stays put; the estimate trace is
/// the tracker output, optionally smoothed by the Kalman filter.
inline RunRecord run_open_loop(const ExperimentSpec& spec) {
  spec.validate();
  RunRecord rec;
  rec.spec = spec;
  const auto stars = load_catalog(spec.catalog_path, spec.mag_limit);
  rec.gt = generate(spec.trajectory_spec());

  SimConfig sim = spec.sim;
  sim.seed = spec.sim_seed();
  const EventStream stream = synthesize(rec.gt, stars, spec.geom, sim);
  rec.event_count = stream.events.size();

  TrackerConfig tcfg = spec.tracker;
  tcfg.seed = spec.tracker_seed();
  Tracker tracker(tcfg);
  detail::Smoother smoother(spec.use_kf, spec.effective_kf());
  detail::TimingAccumulator t_median, t_detect, t_track, t_total;
  const double dt = spec.delta_t_s();

  std::int64_t index = 0;
  for_each_frame(
      stream, spec.delta_t_us(),
      [&](EventFrame&& raw) {
        detail::StopWatch sw;
        double total = 0.0;
        EventFrame filtered;
        const EventFrame* frame = &raw;
        if (spec.median_filter) {
          filtered = median_filter(raw);
          frame = &filtered;
        }
        const double ms_median = sw.lap_ms();
        const auto dets = detect_stars(*frame, tcfg.min_cluster_size);
        const double ms_detect = sw.lap_ms();
        const MotionEstimate est = tracker.process(dets);
        const double mid_s = 0.5e-6 * static_cast<double>(raw.window_start_us + raw.window_end_us);
        const Vec2 reported = smoother.step(est, mid_s, dt, {});
        const double ms_track = sw.lap_ms();
        total = ms_median + ms_detect + ms_track;
        t_median.add(ms_median);
        t_detect.add(ms_detect);
        t_track.add(ms_track);
        t_total.add(total);

        FrameRecord fr;
        fr.frame = index++;
        fr.t_us = (raw.window_start_us + raw.window_end_us) / 2;
        fr.raw_px = est.t;
        fr.est_px = reported;
        fr.inliers = est.inlier_count;
        fr.confident = est.confident;
        fr.track_lost = est.track_lost;
        fr.detections = dets.size();
        rec.frames.push_back(fr);
      },
      spec.polarity);

  rec.origin_frame = tracker.map().origin_frame;
  rec.track_lost = tracker.ever_lost();
  const std::size_t n = rec.frames.size();
  rec.timings = {n, t_median.finish(n), t_detect.finish(n), t_track.finish(n), t_total.finish(n)};

  if (rec.origin_frame < 0) {
    rec.diagnostic = "tracker never found enough stars to seed its map";
    return rec;
  }
  const auto origin = static_cast<std::size_t>(rec.origin_frame);
  const std::int64_t dt_us = spec.delta_t_us();
  const auto shifts = detail::sample_shifts_as(rec.gt, spec);
  auto window_gt = [&](std::size_t k) {
    const std::int64_t start = stream.t0_us + static_cast<std::int64_t>(k) * dt_us;
    return detail::window_mean(shifts, start, start + dt_us);
  };
  const Vec2 gt_origin = window_gt(origin);
  for (std::size_t k = origin; k < n; ++k) {
    const double t_s = static_cast<double>(rec.frames[k].t_us) * 1e-6;
    rec.gt_trace.push_back({t_s, window_gt(k) - gt_origin});
    rec.est_trace.push_back({t_s, spec.geom.pixels_to_arcsec(rec.frames[k].est_px)});
  }
  rec.rmse_as = compute_rmse(rec.est_trace, rec.gt_trace, 0.5 * dt);
  if (rec.track_lost) rec.diagnostic = "track lost";
  return rec;
}

/// Stabilisation run. Every control tick the synthesizer renders the samples
/// of the next window with the stage offset in effect, the tracker measures
/// the resulting frame and the PID output is queued on the stage.
inline RunRecord run_closed_loop(const ExperimentSpec& spec) {
  spec.validate();
  const double dt = spec.delta_t_s();
  if (1.0 / dt > spec.stage.max_rate_hz + 1e-9)
    throw ConfigError("control rate exceeds the stage's maximum command rate");

  RunRecord rec;
  rec.spec = spec;
  const auto stars = load_catalog(spec.catalog_path, spec.mag_limit);
  rec.gt = generate(spec.trajectory_spec());

  SimConfig sim = spec.sim;
  sim.seed = spec.sim_seed();
  EventSynthesizer synth(stars, spec.geom, sim);
  TrackerConfig tcfg = spec.tracker;
  tcfg.seed = spec.tracker_seed();
  Tracker tracker(tcfg);
  detail::Smoother smoother(spec.use_kf, spec.effective_kf());
  StageState stage = make_stage(spec.stage, spec.stage_start_as);
  PidMemory pid;
  detail::TimingAccumulator t_median, t_detect, t_track, t_total;

  const Vec2 ps = spec.geom.plate_scale();
  const Vec2 half_fov{spec.geom.fov_x_deg * kArcsecPerDeg / 2.0, spec.geom.fov_y_deg * kArcsecPerDeg / 2.0};
  const std::int64_t dt_us = spec.delta_t_us();
  const std::int64_t t0_us = seconds_to_us(rec.gt.front().t_s);
  const std::int64_t t_end_us = seconds_to_us(rec.gt.back().t_s + sample_interval(rec.gt, rec.gt.size() - 1));
  const std::int64_t ticks = (t_end_us - t0_us + dt_us - 1) / dt_us;

  std::vector<Vec2> stage_at_sample(rec.gt.size());
  std::vector<Event> pending;
  std::size_t next_sample = 0;
  std::optional<Vec2> desired_px;  // target for the tracker's cumulative translation
  Vec2 applied_since_predict;

  for (std::int64_t k = 0; k < ticks; ++k) {
    const std::int64_t w_start = t0_us + k * dt_us;
    const std::int64_t w_end = w_start + dt_us;
    applied_since_predict += stage_advance(stage, k);
    const Vec2 stage_pos = stage.position();
    const Vec2 stage_px{stage_pos.x / ps.x, stage_pos.y / ps.y};

    while (next_sample < rec.gt.size() && seconds_to_us(rec.gt[next_sample].t_s) < w_end) {
      const auto& s = rec.gt[next_sample];
      synth.emit(s.pointing, sample_interval(rec.gt, next_sample), stage_px, pending);
      stage_at_sample[next_sample] = stage_pos;
      const Vec2 err = spec.geom.pixels_to_arcsec(detail::image_shift_px(s.pointing, spec.start, spec.geom)) + stage_pos;
      rec.err_trace.push_back({s.t_s, err});
      if (std::abs(err.x) > half_fov.x || std::abs(err.y) > half_fov.y) {
        rec.diverged = true;
        rec.diagnostic = "pointing error exceeded half the field of view at t=" + std::to_string(s.t_s) + " s";
      }
      ++next_sample;
    }
    if (rec.diverged) break;

    auto split = std::partition_point(pending.begin(), pending.end(), [&](const Event& e) { return e.t_us < w_end; });
    detail::StopWatch sw;
    EventFrame raw = make_frame(std::span<const Event>(pending.begin(), split), w_start, w_end, spec.geom, spec.polarity);
    rec.event_count += static_cast<std::size_t>(split - pending.begin());
    pending.erase(pending.begin(), split);

    const EventFrame frame = spec.median_filter ? median_filter(raw) : std::move(raw);
    const double ms_median = sw.lap_ms();
    const auto dets = detect_stars(frame, tcfg.min_cluster_size);
    const double ms_detect = sw.lap_ms();
    const MotionEstimate est = tracker.process(dets);
    const double mid_s = 0.5e-6 * static_cast<double>(w_start + w_end);
    const Vec2 control_px{applied_since_predict.x / ps.x, applied_since_predict.y / ps.y};
    const bool was_ready = smoother.ready();
    const Vec2 reported = smoother.step(est, mid_s, dt, control_px);
    if (!spec.use_kf || was_ready) applied_since_predict = {};
    const double ms_track = sw.lap_ms();
    t_median.add(ms_median);
    t_detect.add(ms_detect);
    t_track.add(ms_track);
    t_total.add(ms_median + ms_detect + ms_track);

    FrameRecord fr;
    fr.frame = k;
    fr.t_us = (w_start + w_end) / 2;
    fr.raw_px = est.t;
    fr.est_px = reported;
    fr.inliers = est.inlier_count;
    fr.confident = est.confident;
    fr.track_lost = est.track_lost;
    fr.detections = dets.size();
    rec.frames.push_back(fr);

    // The origin frame saw the sky through the stage's position at that time;
    // zero error means undoing that offset.
    if (!desired_px && tracker.map().seeded()) desired_px = Vec2{-stage_pos.x / ps.x, -stage_pos.y / ps.y};

    Vec2 command;
    Vec2 err_as;
    if (desired_px && (!spec.use_kf || smoother.ready())) {
      Vec2 position = reported;
      if (spec.use_kf && spec.control_lead)
        position += smoother.velocity() * (dt * std::max(1, spec.stage.latency_ticks));
      err_as = spec.geom.pixels_to_arcsec(*desired_px - position);
      PidOutput out = pid_step(spec.gains, err_as, dt, pid);
      pid = out.memory;
      command = out.command;
    }
    StageResult sr = stage_apply(std::move(stage), command, k);
    stage = std::move(sr.stage);
    applied_since_predict += sr.applied_as;
    rec.control.push_back({k, static_cast<double>(w_end - t0_us) * 1e-6, err_as, sr.queued_as, stage_pos, sr.saturated});
  }

  rec.origin_frame = tracker.map().origin_frame;
  rec.track_lost = tracker.ever_lost();
  const std::size_t n = rec.frames.size();
  rec.timings = {n, t_median.finish(n), t_detect.finish(n), t_track.finish(n), t_total.finish(n)};

  if (rec.origin_frame >= 0) {
    const auto origin = static_cast<std::size_t>(rec.origin_frame);
    const auto shifts = detail::sample_shifts_as(rec.gt, spec, stage_at_sample);
    auto window_gt = [&](std::size_t k) {
      const std::int64_t start = t0_us + static_cast<std::int64_t>(k) * dt_us;
      return detail::window_mean(shifts, start, start + dt_us);
    };
    const Vec2 gt_origin = window_gt(origin);
    for (std::size_t k = origin; k < n; ++k) {
      const double t_s = static_cast<double>(rec.frames[k].t_us) * 1e-6;
      rec.gt_trace.push_back({t_s, window_gt(k) - gt_origin});
      rec.est_trace.push_back({t_s, spec.geom.pixels_to_arcsec(rec.frames[k].est_px)});
    }
    if (!rec.est_trace.empty()) rec.rmse_as = compute_rmse(rec.est_trace, rec.gt_trace, 0.5 * dt);
  }
  if (rec.track_lost && rec.diagnostic.empty()) rec.diagnostic = "track lost";
  return rec;
}

inline StabilizationReport stabilization_report(const RunRecord& rec) {
  return stabilization_report(rec.err_trace, rec.spec.settle_threshold_as, rec.spec.settle_hold_s);
}

/// Share of frames with a confident translation estimate.
inline double confident_fraction(const RunRecord& rec) {
  if (rec.frames.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& f : rec.frames) n += f.confident ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(rec.frames.size());
}

/// Pearson correlation between frame-to-frame changes of the estimate and of
/// the ground truth, both axes pooled.
inline double step_correlation(const RunRecord& rec) {
  std::vector<double> est, gt;
  for (std::size_t i = 1; i < rec.est_trace.size() && i < rec.gt_trace.size(); ++i) {
    const Vec2 de = rec.est_trace[i].v - rec.est_trace[i - 1].v;
    const Vec2 dg = rec.gt_trace[i].v - rec.gt_trace[i - 1].v;
    est.insert(est.end(), {de.x, de.y});
    gt.insert(gt.end(), {dg.x, dg.y});
  }
  return pearson(est, gt);
}

// Canonical experiment set-ups.

/// 10 Hz open-loop accuracy run (100 ms windows, KF on). Jitter is drawn at
/// 30 Hz, the low end of the simulated noise band.
inline ExperimentSpec accuracy_spec(TrajectoryKind kind, NoisePreset preset, double duration_s = 20.0) {
  ExperimentSpec s;
  s.trajectory = kind;
  s.preset = preset;
  s.noise_rate_hz = 30.0;
  s.delta_t_ms = 100.0;
  s.duration_s = duration_s;
  s.use_kf = true;
  return s;
}

/// 100 Hz tracking of the per-step jitter: 10 ms windows, no KF, and only
/// positive events so each frame shows where the stars are now rather than
/// where they were.
inline ExperimentSpec high_frequency_spec(double duration_s = 20.0) {
  ExperimentSpec s;
  s.trajectory = TrajectoryKind::linear;
  s.preset = NoisePreset::n6;
  s.noise_rate_hz = 100.0;
  s.delta_t_ms = 10.0;
  s.duration_s = duration_s;
  s.use_kf = false;
  s.polarity = PolarityFilter::positive;
  return s;
}

/// Closed-loop stabilisation at the stage's 50 Hz ceiling, with jitter drawn
/// once per control tick. Gains from the 50 Hz tuning sweep.
inline ExperimentSpec stabilization_spec(TrajectoryKind kind, NoisePreset preset, double duration_s = 30.0) {
  ExperimentSpec s;
  s.trajectory = kind;
  s.preset = preset;
  s.noise_rate_hz = 50.0;
  s.delta_t_ms = 20.0;
  s.duration_s = duration_s;
  s.use_kf = true;
  s.polarity = PolarityFilter::positive;
  s.gains.kp = 1.0;
  s.gains.ki = 0.1;
  s.gains.kd = 0.0;
  return s;
}

}  // namespace evstab
