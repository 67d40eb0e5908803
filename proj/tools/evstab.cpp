// Command-line front end: simulate, track, stabilize, bench, report.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "evstab/bench.hpp"
#include "evstab/config.hpp"
#include "evstab/event_io.hpp"
#include "evstab/experiment.hpp"
#include "evstab/report.hpp"
#include "evstab/run_io.hpp"

namespace fs = std::filesystem;
using namespace evstab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitTrackLost = 2;
constexpr int kExitDiverged = 3;

struct Options {
  std::string setup = "default";
  std::string config;
  std::optional<std::string> trajectory, preset, polarity;
  std::optional<double> rate_hz, delta_t_ms, duration, mag_limit, control_rate_hz;
  std::optional<std::uint64_t> seed;
  std::optional<int> min_cluster;
  std::optional<std::string> catalog;
  std::vector<double> stage_offset;
  bool no_median = false;
  bool no_kf = false;
  std::string out = "run";
  std::string events;
  std::vector<std::string> set;
};

void add_spec_options(CLI::App* app, Options& o) {
  app->add_option("--setup", o.setup, "Starting point: default, accuracy, high-frequency, stabilization")
      ->check(CLI::IsMember({"default", "accuracy", "high-frequency", "stabilization"}));
  app->add_option("--config", o.config, "key = value file applied after --setup");
  app->add_option("--trajectory", o.trajectory, "linear, square, circle or stationary");
  app->add_option("--noise-preset", o.preset, "none, N9, N8, N7 or N6");
  app->add_option("--rate-hz", o.rate_hz, "Trajectory sample and jitter rate");
  app->add_option("--delta-t-ms", o.delta_t_ms, "Batch window");
  app->add_option("--duration", o.duration, "Seconds of trajectory");
  app->add_option("--seed", o.seed, "Experiment seed");
  app->add_option("--catalog", o.catalog, "Star catalog file");
  app->add_option("--mag-limit", o.mag_limit, "Faintest magnitude kept");
  app->add_option("--min-cluster", o.min_cluster, "Smallest pixel cluster reported as a star");
  app->add_option("--polarity", o.polarity, "both or positive");
  app->add_flag("--no-median-filter", o.no_median, "Skip the 3x3 median filter");
  app->add_flag("--no-kf", o.no_kf, "Report raw tracker output");
  app->add_option("--set", o.set, "Extra key=value overrides (repeatable)");
  app->add_option("--out", o.out, "Output directory");
}

ExperimentSpec build_spec(const Options& o) {
  ExperimentSpec s;
  const auto kind = o.trajectory ? parse_trajectory_kind(*o.trajectory) : TrajectoryKind::linear;
  const auto preset = o.preset ? parse_noise_preset(*o.preset) : NoisePreset::n8;
  if (o.setup == "accuracy") s = accuracy_spec(kind, preset);
  if (o.setup == "high-frequency") s = high_frequency_spec();
  if (o.setup == "stabilization") s = stabilization_spec(kind, preset);
  if (!o.config.empty()) load_config(s, o.config);
  if (o.trajectory) s.trajectory = kind;
  if (o.preset) s.preset = preset;
  if (o.polarity) s.polarity = parse_polarity_filter(*o.polarity);
  if (o.rate_hz) s.noise_rate_hz = *o.rate_hz;
  if (o.delta_t_ms) s.delta_t_ms = *o.delta_t_ms;
  if (o.control_rate_hz) {
    if (!(*o.control_rate_hz > 0.0)) throw ConfigError("control rate must be positive");
    s.delta_t_ms = 1000.0 / *o.control_rate_hz;
  }
  if (o.duration) s.duration_s = *o.duration;
  if (o.seed) s.seed = *o.seed;
  if (o.catalog) s.catalog_path = *o.catalog;
  if (o.mag_limit) s.mag_limit = *o.mag_limit;
  if (o.min_cluster) s.tracker.min_cluster_size = *o.min_cluster;
  if (o.no_median) s.median_filter = false;
  if (o.no_kf) s.use_kf = false;
  if (!o.stage_offset.empty()) {
    if (o.stage_offset.size() != 2) throw ConfigError("--stage-offset takes two values");
    s.stage_start_as = {o.stage_offset[0], o.stage_offset[1]};
  }
  for (const std::string& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(s, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  s.validate();
  return s;
}

int cmd_simulate(const Options& o) {
  const ExperimentSpec spec = build_spec(o);
  const auto stars = load_catalog(spec.catalog_path, spec.mag_limit);
  const auto gt = generate(spec.trajectory_spec());
  SimConfig sim = spec.sim;
  sim.seed = spec.sim_seed();
  const EventStream stream = synthesize(gt, stars, spec.geom, sim);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  detail::write_file(dir / "config.txt", [&](std::ostream& os) { write_config(os, spec); });
  detail::write_file(dir / "gt.csv", [&](std::ostream& os) { write_ground_truth_csv(os, gt); });
  detail::write_file(dir / "events.bin", [&](std::ostream& os) { write_events_binary(os, stream); });
  std::printf("%zu samples, %zu events, %zu catalog stars -> %s\n", gt.size(), stream.events.size(), stars.size(),
              dir.string().c_str());
  return kExitOk;
}

// Tracks a recorded event file. No ground truth, so only the trace is written.
int track_recording(const Options& o, const ExperimentSpec& spec) {
  std::ifstream in(o.events, std::ios::binary);
  if (!in) throw IoError("cannot open '" + o.events + "'");
  const EventStream stream = read_events_binary(in, &spec.geom);
  RunRecord rec;
  rec.spec = spec;
  Tracker tracker(spec.tracker);
  std::int64_t k = 0;
  for_each_frame(
      stream, spec.delta_t_us(),
      [&](EventFrame&& raw) {
        const EventFrame frame = spec.median_filter ? median_filter(raw) : std::move(raw);
        const auto dets = detect_stars(frame, spec.tracker.min_cluster_size);
        const MotionEstimate est = tracker.process(dets);
        FrameRecord fr;
        fr.frame = k++;
        fr.t_us = (frame.window_start_us + frame.window_end_us) / 2;
        fr.raw_px = fr.est_px = est.t;
        fr.inliers = est.inlier_count;
        fr.confident = est.confident;
        fr.detections = dets.size();
        rec.frames.push_back(fr);
      },
      spec.polarity);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  detail::write_file(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, rec); });
  std::printf("%zu frames, confident %.1f%% -> %s\n", rec.frames.size(), 100.0 * confident_fraction(rec),
              (dir / "trace.csv").string().c_str());
  return tracker.ever_lost() ? kExitTrackLost : kExitOk;
}

int cmd_track(const Options& o) {
  const ExperimentSpec spec = build_spec(o);
  if (!o.events.empty()) return track_recording(o, spec);
  const RunRecord rec = run_open_loop(spec);
  save_run(o.out, rec, false);
  std::printf("frames %zu, confident %.1f%%, RMSE %s arcsec%s\n", rec.frames.size(), 100.0 * confident_fraction(rec),
              rec.rmse_as ? std::to_string(*rec.rmse_as).c_str() : "n/a", rec.track_lost ? ", TRACK LOST" : "");
  return rec.track_lost ? kExitTrackLost : kExitOk;
}

int cmd_stabilize(const Options& o) {
  const ExperimentSpec spec = build_spec(o);
  const RunRecord rec = run_closed_loop(spec);
  save_run(o.out, rec, true);
  if (!rec.err_trace.empty()) {
    const StabilizationReport rep = stabilization_report(rec);
    std::printf("sigma_x %.3f, sigma_y %.3f arcsec, %s %.2f s\n", rep.sigma_x, rep.sigma_y,
                rep.settled ? "settled at" : "never settled; spread from", rep.settle_time_s);
  }
  if (rec.diverged) {
    std::fprintf(stderr, "diverged: %s\n", rec.diagnostic.c_str());
    return kExitDiverged;
  }
  if (rec.track_lost) {
    std::fprintf(stderr, "track lost\n");
    return kExitTrackLost;
  }
  return kExitOk;
}

int cmd_bench(const Options& o, const std::string& machine) {
  ExperimentSpec spec = build_spec(o);
  const BenchResult r = run_bench(spec, machine);
  print_bench_table(std::cout, {r});
  std::cout << "\ndetection time vs stars in frame\n";
  for (const ScalingPoint& p : detection_scaling({10, 20, 50, 100, 200, 500}))
    std::printf("%5d stars  %.4f ms\n", p.stars, p.detection_ms);
  return kExitOk;
}

int cmd_report(const Options& o) {
  for (const fs::path& p : render_report(o.out)) std::printf("%s\n", p.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera star tracking and stabilisation simulator"};
  app.require_subcommand(1);
  Options o;
  std::string machine = "this machine";

  auto* sim = app.add_subcommand("simulate", "Generate ground truth and an event file");
  add_spec_options(sim, o);
  auto* trk = app.add_subcommand("track", "Open-loop tracking");
  add_spec_options(trk, o);
  trk->add_option("--events", o.events, "Track a recorded event file instead of simulating");
  auto* stab = app.add_subcommand("stabilize", "Closed-loop stabilisation");
  add_spec_options(stab, o);
  stab->add_option("--control-rate-hz", o.control_rate_hz, "Control rate; sets the batch window to 1/rate");
  stab->add_option("--stage-offset", o.stage_offset, "Initial stage offset x y in arcsec")->expected(2);
  auto* bench = app.add_subcommand("bench", "Time the pipeline over a 35 s sequence");
  add_spec_options(bench, o);
  bench->add_option("--machine", machine, "Label for the table row");
  auto* rep = app.add_subcommand("report", "Render SVG plots for a run directory");
  rep->add_option("--out", o.out, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(o);
    if (*trk) return cmd_track(o);
    if (*stab) return cmd_stabilize(o);
    if (*bench) return cmd_bench(o, machine);
    if (*rep) return cmd_report(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
