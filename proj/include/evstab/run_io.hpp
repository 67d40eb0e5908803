#pragma once

// Run directories: config echo, ground truth, traces and a summary.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>

#include "evstab/config.hpp"
#include "evstab/experiment.hpp"

namespace evstab {

inline void write_trace_csv(std::ostream& os, const RunRecord& rec) {
  const Vec2 ps = rec.spec.geom.plate_scale();
  os << "frame,t_us,tx_px,ty_px,tx_arcsec,ty_arcsec,inliers,confident\n";
  os << std::fixed << std::setprecision(6);
  for (const FrameRecord& f : rec.frames)
    os << f.frame << ',' << f.t_us << ',' << f.est_px.x << ',' << f.est_px.y << ',' << f.est_px.x * ps.x << ','
       << f.est_px.y * ps.y << ',' << f.inliers << ',' << (f.confident ? 1 : 0) << '\n';
}

inline void write_points_csv(std::ostream& os, std::span<const TracePoint> pts, const char* header) {
  os << header << '\n' << std::fixed << std::setprecision(6);
  for (const TracePoint& p : pts) os << p.t_s << ',' << p.v.x << ',' << p.v.y << '\n';
}

inline void write_control_csv(std::ostream& os, const RunRecord& rec) {
  os << "tick,t_s,err_x_as,err_y_as,u_x_as,u_y_as,stage_x_as,stage_y_as\n" << std::fixed << std::setprecision(6);
  for (const ControlRecord& c : rec.control)
    os << c.tick << ',' << c.t_s << ',' << c.err_as.x << ',' << c.err_as.y << ',' << c.u_as.x << ',' << c.u_as.y << ','
       << c.stage_as.x << ',' << c.stage_as.y << '\n';
}

inline void write_summary(std::ostream& os, const RunRecord& rec, bool closed_loop) {
  os << std::setprecision(6);
  os << "mode = " << (closed_loop ? "closed_loop" : "open_loop") << '\n';
  os << "frames = " << rec.frames.size() << '\n';
  os << "events = " << rec.event_count << '\n';
  os << "origin_frame = " << rec.origin_frame << '\n';
  os << "confident_fraction = " << confident_fraction(rec) << '\n';
  os << "track_lost = " << (rec.track_lost ? "true" : "false") << '\n';
  if (rec.rmse_as) os << "rmse_arcsec = " << *rec.rmse_as << '\n';
  if (closed_loop) {
    os << "diverged = " << (rec.diverged ? "true" : "false") << '\n';
    if (!rec.err_trace.empty()) {
      const StabilizationReport rep = stabilization_report(rec);
      os << "settled = " << (rep.settled ? "true" : "false") << '\n';
      os << "settle_time_s = " << rep.settle_time_s << '\n';
      os << "sigma_x_arcsec = " << rep.sigma_x << '\n';
      os << "sigma_y_arcsec = " << rep.sigma_y << '\n';
      os << "mean_x_arcsec = " << rep.mean.x << '\n';
      os << "mean_y_arcsec = " << rep.mean.y << '\n';
      os << "ellipse_3sigma_major_arcsec = " << rep.ellipse_major_3sigma << '\n';
      os << "ellipse_3sigma_minor_arcsec = " << rep.ellipse_minor_3sigma << '\n';
      os << "ellipse_angle_rad = " << rep.ellipse_angle_rad << '\n';
    }
  }
  os << "mean_frame_ms = " << rec.timings.total.mean_ms << '\n';
  os << "mean_detection_ms = " << rec.timings.detection.mean_ms << '\n';
  os << "mean_median_ms = " << rec.timings.median.mean_ms << '\n';
  if (!rec.diagnostic.empty()) os << "diagnostic = " << rec.diagnostic << '\n';
}

namespace detail {
template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  fn(os);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}
}  // namespace detail

/// Writes config.txt, gt.csv, trace.csv, gt_trace.csv and summary.txt, plus
/// control.csv and pointing_error.csv for closed-loop runs.
inline void save_run(const std::filesystem::path& dir, const RunRecord& rec, bool closed_loop) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "config.txt", [&](std::ostream& os) { write_config(os, rec.spec); });
  detail::write_file(dir / "gt.csv", [&](std::ostream& os) { write_ground_truth_csv(os, rec.gt); });
  detail::write_file(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, rec); });
  detail::write_file(dir / "gt_trace.csv",
                     [&](std::ostream& os) { write_points_csv(os, rec.gt_trace, "t_s,x_arcsec,y_arcsec"); });
  if (closed_loop) {
    detail::write_file(dir / "control.csv", [&](std::ostream& os) { write_control_csv(os, rec); });
    detail::write_file(dir / "pointing_error.csv",
                       [&](std::ostream& os) { write_points_csv(os, rec.err_trace, "t_s,err_x_as,err_y_as"); });
  }
  detail::write_file(dir / "summary.txt", [&](std::ostream& os) { write_summary(os, rec, closed_loop); });
}

/// Reads a `t, x, y` CSV with a header line (gt_trace.csv, pointing_error.csv).
inline std::vector<TracePoint> read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<TracePoint> out;
  std::string line;
  std::getline(in, line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    TracePoint p;
    char c1 = 0, c2 = 0;
    if (!(ss >> p.t_s >> c1 >> p.v.x >> c2 >> p.v.y) || c1 != ',' || c2 != ',')
      throw ParseError("malformed row in " + path.filename().string(), line_no);
    out.push_back(p);
  }
  return out;
}

/// Estimate trace (arcsec) from trace.csv.
inline std::vector<TracePoint> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<TracePoint> out;
  std::string line;
  std::getline(in, line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() != 8) throw ParseError("expected 8 columns in trace.csv", line_no);
    try {
      out.push_back({std::stod(cols[1]) * 1e-6, {std::stod(cols[4]), std::stod(cols[5])}});
    } catch (const std::exception&) {
      throw ParseError("non-numeric value in trace.csv", line_no);
    }
  }
  return out;
}

}  // namespace evstab
