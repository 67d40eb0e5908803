#pragma once

// SVG plots of a saved run directory.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "evstab/metrics.hpp"
#include "evstab/run_io.hpp"

namespace evstab {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  bool points = false;  // scatter instead of polyline
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 360;
  bool equal_axes = false;
  double circle_radius = 0.0;  // optional reference circle at the origin
};

namespace detail {

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-9) lo -= 1.0, hi += 1.0;
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

}  // namespace detail

inline std::string render_svg(const std::vector<Series>& series, const PlotOptions& opt,
                              const std::vector<std::vector<std::pair<double, double>>>& outlines = {}) {
  const double left = 60, right = 20, top = 30, bottom = 45;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  detail::Range rx, ry;
  for (const auto& s : series) {
    for (double v : s.x) rx.add(v);
    for (double v : s.y) ry.add(v);
  }
  for (const auto& o : outlines)
    for (auto [x, y] : o) rx.add(x), ry.add(y);
  if (opt.circle_radius > 0.0) {
    rx.add(-opt.circle_radius), rx.add(opt.circle_radius);
    ry.add(-opt.circle_radius), ry.add(opt.circle_radius);
  }
  rx.pad();
  ry.pad();
  if (opt.equal_axes) {
    const double sx = (rx.hi - rx.lo) / pw, sy = (ry.hi - ry.lo) / ph;
    const double s = std::max(sx, sy);
    const double cx = 0.5 * (rx.lo + rx.hi), cy = 0.5 * (ry.lo + ry.hi);
    rx = {cx - 0.5 * s * pw, cx + 0.5 * s * pw};
    ry = {cy - 0.5 * s * ph, cy + 0.5 * s * ph};
  }
  auto X = [&](double v) { return left + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto Y = [&](double v) { return top + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double vx = rx.lo + (rx.hi - rx.lo) * i / 4.0, vy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    os << "<text x=\"" << X(vx) << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << vx << "</text>\n";
    os << "<text x=\"" << left - 5 << "\" y=\"" << Y(vy) + 4 << "\" text-anchor=\"end\">" << vy << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << opt.title
     << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 8 << "\" text-anchor=\"middle\">" << opt.x_label
     << "</text>\n";
  os << "<text x=\"14\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << top + ph / 2 << ")\">" << opt.y_label << "</text>\n";
  if (opt.circle_radius > 0.0)
    os << "<ellipse cx=\"" << X(0) << "\" cy=\"" << Y(0) << "\" rx=\"" << X(opt.circle_radius) - X(0) << "\" ry=\""
       << Y(0) - Y(opt.circle_radius) << "\" fill=\"none\" stroke=\"#d4a017\" stroke-width=\"2\"/>\n";
  for (const auto& s : series) {
    if (s.points) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        os << "<circle cx=\"" << X(s.x[i]) << "\" cy=\"" << Y(s.y[i]) << "\" r=\"1.2\" fill=\"" << s.color
           << "\" fill-opacity=\"0.5\"/>\n";
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) os << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
      os << "\"/>\n";
    }
  }
  for (const auto& o : outlines) {
    os << "<polygon fill=\"none\" stroke=\"#c00\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : o) os << X(x) << ',' << Y(y) << ' ';
    os << "\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i)
    os << "<text x=\"" << left + 8 << "\" y=\"" << top + 14 + 13 * i << "\" fill=\"" << series[i].color << "\">"
       << series[i].label << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

/// Polygon approximating the 3-sigma ellipse of a stabilisation report.
inline std::vector<std::pair<double, double>> ellipse_outline(const StabilizationReport& rep, int segments = 72) {
  std::vector<std::pair<double, double>> pts;
  const double c = std::cos(rep.ellipse_angle_rad), s = std::sin(rep.ellipse_angle_rad);
  for (int i = 0; i <= segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    const double u = rep.ellipse_major_3sigma * std::cos(a), v = rep.ellipse_minor_3sigma * std::sin(a);
    pts.emplace_back(rep.mean.x + c * u - s * v, rep.mean.y + s * u + c * v);
  }
  return pts;
}

/// Renders the plots for a run directory written by save_run and returns the
/// files produced.
inline std::vector<std::filesystem::path> render_report(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& svg) {
    detail::write_file(dir / name, [&](std::ostream& os) { os << svg; });
    written.push_back(dir / name);
  };

  const auto est = read_trace_csv(dir / "trace.csv");
  const auto gt = read_points_csv(dir / "gt_trace.csv");
  for (int axis = 0; axis < 2; ++axis) {
    Series e{"estimate", "#1f77b4", {}, {}, false}, g{"ground truth", "#2ca02c", {}, {}, false};
    for (const auto& p : est) e.x.push_back(p.t_s), e.y.push_back(axis ? p.v.y : p.v.x);
    for (const auto& p : gt) g.x.push_back(p.t_s), g.y.push_back(axis ? p.v.y : p.v.x);
    PlotOptions opt;
    opt.title = std::string("image translation, ") + (axis ? "y" : "x");
    opt.x_label = "time [s]";
    opt.y_label = "arcsec";
    emit(axis ? "tracking_y.svg" : "tracking_x.svg", render_svg({g, e}, opt));
  }

  if (std::filesystem::exists(dir / "pointing_error.csv")) {
    const auto err = read_points_csv(dir / "pointing_error.csv");
    if (!err.empty()) {
      const StabilizationReport rep = stabilization_report(err);
      Series pre{"before settling", "#999999", {}, {}, true}, post{"after settling", "#1f77b4", {}, {}, true};
      for (const auto& p : err) {
        Series& s = (rep.settled && p.t_s < rep.settle_time_s) ? pre : post;
        s.x.push_back(p.v.x);
        s.y.push_back(p.v.y);
      }
      PlotOptions opt;
      opt.title = "pointing error with 3-sigma ellipse and 10 arcsec circle";
      opt.x_label = "x [arcsec]";
      opt.y_label = "y [arcsec]";
      opt.width = opt.height = 520;
      opt.equal_axes = true;
      opt.circle_radius = 10.0;
      emit("error_scatter.svg", render_svg({pre, post}, opt, {ellipse_outline(rep)}));

      Series ex{"x", "#1f77b4", {}, {}, false}, ey{"y", "#d62728", {}, {}, false};
      for (const auto& p : err) ex.x.push_back(p.t_s), ex.y.push_back(p.v.x), ey.x.push_back(p.t_s), ey.y.push_back(p.v.y);
      PlotOptions t;
      t.title = "pointing error over time";
      t.x_label = "time [s]";
      t.y_label = "arcsec";
      emit("error_time.svg", render_svg({ex, ey}, t));
    }
  }
  return written;
}

}  // namespace evstab
