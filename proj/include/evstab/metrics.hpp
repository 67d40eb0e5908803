#pragma once

// Accuracy and stabilisation metrics over time-stamped 2-D traces.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "evstab/common.hpp"

namespace evstab {

struct TracePoint {
  double t_s = 0.0;
  Vec2 v;  // arcsec unless stated otherwise
};

/// Index of the sample nearest in time to t; ties go to the earlier sample.
inline std::size_t nearest_index(std::span<const TracePoint> trace, double t_s) {
  auto it = std::lower_bound(trace.begin(), trace.end(), t_s,
                             [](const TracePoint& p, double t) { return p.t_s < t; });
  if (it == trace.end()) return trace.size() - 1;
  const auto i = static_cast<std::size_t>(it - trace.begin());
  if (i == 0) return 0;
  return (t_s - trace[i - 1].t_s <= it->t_s - t_s) ? i - 1 : i;
}

/// Root mean square of the Euclidean distance between each estimate and the
/// ground-truth sample nearest in time. Estimates with no ground truth within
/// max_skew_s are skipped; no overlap at all is an error.
inline double compute_rmse(std::span<const TracePoint> est, std::span<const TracePoint> gt, double max_skew_s) {
  if (gt.empty() || est.empty()) throw DomainError("compute_rmse: empty trace");
  double sum = 0.0;
  std::size_t n = 0;
  for (const TracePoint& e : est) {
    const TracePoint& g = gt[nearest_index(gt, e.t_s)];
    if (std::abs(g.t_s - e.t_s) > max_skew_s) continue;
    sum += squared_norm(e.v - g.v);
    ++n;
  }
  if (n == 0) throw DomainError("compute_rmse: traces do not overlap in time");
  return std::sqrt(sum / static_cast<double>(n));
}

/// First time from which the error norm stays below `threshold` for `hold_s`
/// seconds of trace. nullopt if that never happens.
inline std::optional<double> settle_time(std::span<const TracePoint> err, double threshold = 10.0,
                                         double hold_s = 1.0) {
  std::optional<double> run_start;
  for (const TracePoint& p : err) {
    if (norm(p.v) < threshold) {
      if (!run_start) run_start = p.t_s;
      if (p.t_s - *run_start >= hold_s) return run_start;
    } else {
      run_start.reset();
    }
  }
  return std::nullopt;
}

struct StabilizationReport {
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  Vec2 mean;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  // 3-sigma error ellipse from the covariance eigendecomposition.
  double ellipse_major_3sigma = 0.0;
  double ellipse_minor_3sigma = 0.0;
  double ellipse_angle_rad = 0.0;
  double settle_time_s = 0.0;
  bool settled = true;
  std::size_t samples = 0;
};

/// Per-axis population standard deviation and covariance of the samples at
/// or after settle_cut_s.
inline StabilizationReport compute_spread(std::span<const TracePoint> err, double settle_cut_s) {
  if (err.empty() || !(err.back().t_s >= settle_cut_s))
    throw DomainError("compute_spread: trace ends before the settling cut");
  StabilizationReport rep;
  rep.settle_time_s = settle_cut_s;

  Vec2 sum;
  std::size_t n = 0;
  for (const TracePoint& p : err)
    if (p.t_s >= settle_cut_s) {
      sum += p.v;
      ++n;
    }
  rep.samples = n;
  rep.mean = sum * (1.0 / static_cast<double>(n));

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const TracePoint& p : err)
    if (p.t_s >= settle_cut_s) {
      const Vec2 d = p.v - rep.mean;
      sxx += d.x * d.x;
      syy += d.y * d.y;
      sxy += d.x * d.y;
    }
  const double inv = 1.0 / static_cast<double>(n);
  rep.covariance << sxx * inv, sxy * inv, sxy * inv, syy * inv;
  rep.sigma_x = std::sqrt(rep.covariance(0, 0));
  rep.sigma_y = std::sqrt(rep.covariance(1, 1));

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(rep.covariance);
  const Eigen::Vector2d values = eig.eigenvalues().cwiseMax(0.0);  // ascending
  rep.ellipse_minor_3sigma = 3.0 * std::sqrt(values(0));
  rep.ellipse_major_3sigma = 3.0 * std::sqrt(values(1));
  const Eigen::Vector2d major = eig.eigenvectors().col(1);
  rep.ellipse_angle_rad = (values(1) > 0.0) ? std::atan2(major(1), major(0)) : 0.0;
  return rep;
}

/// Settling per the 10 arcsec / 1 s rule, then spread over the rest. If the
/// trace never settles the spread covers the whole trace and `settled` is
/// false.
inline StabilizationReport stabilization_report(std::span<const TracePoint> err, double threshold = 10.0,
                                                double hold_s = 1.0) {
  if (err.empty()) throw DomainError("stabilization_report: empty trace");
  const auto cut = settle_time(err, threshold, hold_s);
  StabilizationReport rep = compute_spread(err, cut.value_or(err.front().t_s));
  rep.settled = cut.has_value();
  return rep;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("pearson: need two equal series of length >= 2");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace evstab
