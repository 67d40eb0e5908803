#pragma once

// Constant-velocity Kalman filter, PID controller and stepper stage model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>

#include "evstab/common.hpp"

namespace evstab {

// ---------------------------------------------------------------------------
// Kalman filter. State [px py vx vy] in pixels and pixels/second.

struct KalmanConfig {
  double q_pos = 0.01;  // px^2 per predict step
  double q_vel = 0.1;   // (px/s)^2 per predict step
  double r = 0.25;      // px^2
  double p0_pos = 10.0;
  double p0_vel = 100.0;
  double regularization = 1e-12;  // added to the innovation covariance diagonal
};

struct FilterState {
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
  double t_s = 0.0;

  Vec2 position() const { return {x(0), x(1)}; }
  Vec2 velocity() const { return {x(2), x(3)}; }
};

inline Eigen::Matrix4d transition_matrix(double dt) {
  Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  return F;
}

/// Control input enters the position components only.
inline Eigen::Matrix<double, 4, 2> control_matrix() {
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
  B(0, 0) = 1.0;
  B(1, 1) = 1.0;
  return B;
}

inline Eigen::Matrix4d process_noise(const KalmanConfig& cfg) {
  return Eigen::Vector4d(cfg.q_pos, cfg.q_pos, cfg.q_vel, cfg.q_vel).asDiagonal();
}

inline void symmetrize(Eigen::Matrix4d& P) { P = 0.5 * (P + P.transpose()).eval(); }

inline FilterState kf_init(Vec2 position, double t_s, const KalmanConfig& cfg = {}) {
  FilterState s;
  s.x << position.x, position.y, 0.0, 0.0;
  s.P = Eigen::Vector4d(cfg.p0_pos, cfg.p0_pos, cfg.p0_vel, cfg.p0_vel).asDiagonal();
  s.t_s = t_s;
  return s;
}

inline FilterState kf_predict(const FilterState& state, double dt, Vec2 u, const KalmanConfig& cfg = {}) {
  if (!(dt > 0.0)) throw DomainError("kf_predict needs dt > 0");
  const Eigen::Matrix4d F = transition_matrix(dt);
  FilterState next;
  next.x = F * state.x + control_matrix() * Eigen::Vector2d(u.x, u.y);
  next.P = F * state.P * F.transpose() + process_noise(cfg);
  symmetrize(next.P);
  next.t_s = state.t_s + dt;
  return next;
}

struct KalmanUpdate {
  FilterState state;
  bool accepted = false;
};

/// Position measurement update. Non-finite measurements are rejected and
/// leave the state untouched. Covariance uses the Joseph form.
inline KalmanUpdate kf_update(const FilterState& state, Vec2 z, const KalmanConfig& cfg = {}) {
  if (!std::isfinite(z.x) || !std::isfinite(z.y)) return {state, false};
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  const Eigen::Matrix2d R = Eigen::Matrix2d::Identity() * cfg.r;
  Eigen::Matrix2d S = H * state.P * H.transpose() + R;
  S.diagonal().array() += cfg.regularization;
  const Eigen::Matrix<double, 4, 2> K = state.P * H.transpose() * S.inverse();
  const Eigen::Vector2d innovation = Eigen::Vector2d(z.x, z.y) - H * state.x;

  KalmanUpdate out;
  out.state = state;
  out.state.x = state.x + K * innovation;
  const Eigen::Matrix4d I_KH = Eigen::Matrix4d::Identity() - K * H;
  out.state.P = I_KH * state.P * I_KH.transpose() + K * R * K.transpose();
  symmetrize(out.state.P);
  out.accepted = true;
  return out;
}

// ---------------------------------------------------------------------------
// PID, per axis, arcsec in and arcsec out.

struct PidGains {
  double kp = 0.8;
  double ki = 0.1;
  double kd = 0.05;
  double integral_limit = 50.0;  // arcsec * s

  void validate() const {
    if (kp < 0.0 || ki < 0.0 || kd < 0.0) throw ConfigError("PID gains must be non-negative");
    if (!(integral_limit > 0.0)) throw ConfigError("integral limit must be positive");
  }
};

struct PidMemory {
  Vec2 integral;
  Vec2 previous_error;
  bool has_previous = false;
};

struct PidOutput {
  Vec2 command;
  PidMemory memory;
};

inline PidOutput pid_step(const PidGains& gains, Vec2 error, double dt, const PidMemory& memory) {
  if (!(dt > 0.0)) throw DomainError("pid_step needs dt > 0");
  PidOutput out;
  out.memory = memory;
  const double lim = gains.integral_limit;
  out.memory.integral.x = std::clamp(memory.integral.x + error.x * dt, -lim, lim);
  out.memory.integral.y = std::clamp(memory.integral.y + error.y * dt, -lim, lim);
  const Vec2 derivative = memory.has_previous ? (error - memory.previous_error) * (1.0 / dt) : Vec2{};
  out.command = error * gains.kp + out.memory.integral * gains.ki + derivative * gains.kd;
  out.memory.previous_error = error;
  out.memory.has_previous = true;
  return out;
}

// ---------------------------------------------------------------------------
// Stepper piezo stage. Commands are relative moves in sensor-plane arcsec,
// quantized to whole steps and executed `latency_ticks` control ticks later.

struct StageConfig {
  double step_size_as = 0.05;
  double max_rate_hz = 50.0;
  int latency_ticks = 1;
  double max_move_per_tick_as = 60.0;

  void validate() const {
    if (!(step_size_as > 0.0)) throw ConfigError("stage step must be positive");
    if (!(max_rate_hz > 0.0)) throw ConfigError("stage rate must be positive");
    if (latency_ticks < 0) throw ConfigError("stage latency must be non-negative");
    if (!(max_move_per_tick_as > 0.0)) throw ConfigError("stage travel limit must be positive");
  }
};

struct PendingMove {
  std::int64_t due_tick = 0;
  std::int64_t steps_x = 0;
  std::int64_t steps_y = 0;
};

struct StageState {
  StageConfig config;
  std::int64_t steps_x = 0;
  std::int64_t steps_y = 0;
  std::deque<PendingMove> pending;

  Vec2 position() const { return Vec2{static_cast<double>(steps_x), static_cast<double>(steps_y)} * config.step_size_as; }
};

inline StageState make_stage(const StageConfig& cfg, Vec2 start_as = {}) {
  cfg.validate();
  StageState s;
  s.config = cfg;
  s.steps_x = std::llround(start_as.x / cfg.step_size_as);
  s.steps_y = std::llround(start_as.y / cfg.step_size_as);
  return s;
}

struct StageResult {
  StageState stage;
  Vec2 queued_as;     // quantized, possibly saturated command
  Vec2 applied_as;    // motion executed at this tick
  bool saturated = false;
};

/// Executes moves due at or before `now`.
inline Vec2 stage_advance(StageState& stage, std::int64_t now) {
  std::int64_t dx = 0, dy = 0;
  while (!stage.pending.empty() && stage.pending.front().due_tick <= now) {
    dx += stage.pending.front().steps_x;
    dy += stage.pending.front().steps_y;
    stage.pending.pop_front();
  }
  stage.steps_x += dx;
  stage.steps_y += dy;
  return Vec2{static_cast<double>(dx), static_cast<double>(dy)} * stage.config.step_size_as;
}

/// Queues `command` (relative move, arcsec) issued at tick `now`, then runs
/// every move that is due. With latency 1 a command issued at tick k shows up
/// in the position at tick k + 1.
inline StageResult stage_apply(StageState stage, Vec2 command, std::int64_t now) {
  StageResult out;
  const double limit = stage.config.max_move_per_tick_as;
  Vec2 c = command;
  if (!std::isfinite(c.x) || !std::isfinite(c.y)) c = {};
  if (std::abs(c.x) > limit || std::abs(c.y) > limit) {
    out.saturated = true;
    c.x = std::clamp(c.x, -limit, limit);
    c.y = std::clamp(c.y, -limit, limit);
  }
  const std::int64_t sx = std::llround(c.x / stage.config.step_size_as);
  const std::int64_t sy = std::llround(c.y / stage.config.step_size_as);
  out.queued_as = Vec2{static_cast<double>(sx), static_cast<double>(sy)} * stage.config.step_size_as;
  if (sx != 0 || sy != 0) stage.pending.push_back({now + stage.config.latency_ticks, sx, sy});
  out.applied_as = stage_advance(stage, now);
  out.stage = std::move(stage);
  return out;
}

}  // namespace evstab
