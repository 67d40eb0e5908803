#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evstab/control.hpp"

using namespace evstab;

namespace {

// Plain 4x4 / 2x2 arithmetic on arrays, independent of Eigen.
using M4 = std::array<std::array<double, 4>, 4>;
using V4 = std::array<double, 4>;

M4 mul(const M4& a, const M4& b) {
  M4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

M4 transpose(const M4& a) {
  M4 t{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) t[i][j] = a[j][i];
  return t;
}

M4 from_eigen(const Eigen::Matrix4d& m) {
  M4 a{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a[i][j] = m(i, j);
  return a;
}

struct DenseState {
  V4 x;
  M4 P;
};

DenseState dense_predict(const DenseState& s, double dt, Vec2 u, const KalmanConfig& cfg) {
  M4 F{};
  for (int i = 0; i < 4; ++i) F[i][i] = 1;
  F[0][2] = F[1][3] = dt;
  DenseState o;
  for (int i = 0; i < 4; ++i) {
    o.x[i] = 0;
    for (int k = 0; k < 4; ++k) o.x[i] += F[i][k] * s.x[k];
  }
  o.x[0] += u.x;
  o.x[1] += u.y;
  o.P = mul(mul(F, s.P), transpose(F));
  const double q[4] = {cfg.q_pos, cfg.q_pos, cfg.q_vel, cfg.q_vel};
  for (int i = 0; i < 4; ++i) o.P[i][i] += q[i];
  return o;
}

// Position update with the 2x2 innovation covariance inverted in closed form
// and the covariance in the simple (I - KH) P form, which equals the Joseph
// form for the optimal gain.
DenseState dense_update(const DenseState& s, Vec2 z, const KalmanConfig& cfg) {
  const double s00 = s.P[0][0] + cfg.r + cfg.regularization, s01 = s.P[0][1], s10 = s.P[1][0],
               s11 = s.P[1][1] + cfg.r + cfg.regularization;
  const double det = s00 * s11 - s01 * s10;
  const double i00 = s11 / det, i01 = -s01 / det, i10 = -s10 / det, i11 = s00 / det;
  double K[4][2];
  for (int i = 0; i < 4; ++i) {
    K[i][0] = s.P[i][0] * i00 + s.P[i][1] * i10;
    K[i][1] = s.P[i][0] * i01 + s.P[i][1] * i11;
  }
  const double y0 = z.x - s.x[0], y1 = z.y - s.x[1];
  DenseState o;
  for (int i = 0; i < 4; ++i) o.x[i] = s.x[i] + K[i][0] * y0 + K[i][1] * y1;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) o.P[i][j] = s.P[i][j] - K[i][0] * s.P[0][j] - K[i][1] * s.P[1][j];
  return o;
}

double max_abs_diff(const M4& a, const Eigen::Matrix4d& b) {
  double m = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m = std::max(m, std::abs(a[i][j] - b(i, j)));
  return m;
}

double max_abs(const M4& a) {
  double m = 0;
  for (auto& r : a)
    for (double v : r) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST(Kalman, PredictMovesPositionByVelocity) {
  FilterState s;
  s.x << 0, 0, 1, 0;
  const auto p = kf_predict(s, 1.0, {});
  EXPECT_DOUBLE_EQ(p.position().x, 1.0);
  EXPECT_DOUBLE_EQ(p.position().y, 0.0);
  EXPECT_DOUBLE_EQ(p.t_s, 1.0);
  const auto q = kf_predict(s, 0.5, {2, -3});
  EXPECT_DOUBLE_EQ(q.position().x, 2.5);
  EXPECT_DOUBLE_EQ(q.position().y, -3.0);
  EXPECT_THROW(kf_predict(s, 0.0, {}), DomainError);
}

TEST(Kalman, InitUsesConfiguredCovariance) {
  const auto s = kf_init({3, 4}, 2.0);
  EXPECT_EQ(s.P(0, 0), 10.0);
  EXPECT_EQ(s.P(2, 2), 100.0);
  EXPECT_EQ(s.P(0, 1), 0.0);
  EXPECT_EQ(s.velocity().x, 0.0);
}

TEST(KalmanOracle, PredictUpdateMatchDenseArithmetic) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-5, 5), dtd(0.005, 0.2);
  KalmanConfig cfg;
  cfg.regularization = 0;
  for (int trial = 0; trial < 200; ++trial) {
    FilterState s = kf_init({u(rng), u(rng)}, 0, cfg);
    s.x(2) = u(rng);
    s.x(3) = u(rng);
    DenseState d{{s.x(0), s.x(1), s.x(2), s.x(3)}, from_eigen(s.P)};
    for (int step = 0; step < 20; ++step) {
      const double dt = dtd(rng);
      const Vec2 ctl{u(rng) * 0.1, u(rng) * 0.1};
      s = kf_predict(s, dt, ctl, cfg);
      d = dense_predict(d, dt, ctl, cfg);
      EXPECT_LE(max_abs_diff(d.P, s.P), 1e-12 * std::max(1.0, max_abs(d.P)));
      const Vec2 z{s.x(0) + u(rng), s.x(1) + u(rng)};
      s = kf_update(s, z, cfg).state;
      d = dense_update(d, z, cfg);
      for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.x(i), d.x[i], 1e-12 * std::max(1.0, std::abs(d.x[i])));
      EXPECT_LE(max_abs_diff(d.P, s.P), 1e-12 * std::max(1.0, max_abs(d.P)));
    }
  }
}

TEST(Kalman, NearZeroNoiseUpdateSnapsToMeasurement) {
  KalmanConfig cfg;
  cfg.r = 1e-12;
  const auto s = kf_predict(kf_init({0, 0}, 0, cfg), 0.1, {}, cfg);
  const auto u = kf_update(s, {7, -2}, cfg);
  ASSERT_TRUE(u.accepted);
  EXPECT_NEAR(u.state.position().x, 7, 1e-9);
  EXPECT_NEAR(u.state.position().y, -2, 1e-9);
}

TEST(Kalman, NoiselessRampRecoversVelocity) {
  KalmanConfig cfg;
  cfg.q_pos = cfg.q_vel = 0;
  FilterState s = kf_init({0, 0}, 0, cfg);
  for (int k = 1; k <= 100; ++k) {
    s = kf_predict(s, 0.1, {}, cfg);
    s = kf_update(s, {0.3 * k, -0.2 * k}, cfg).state;
  }
  EXPECT_NEAR(s.velocity().x, 3.0, 1e-4);
  EXPECT_NEAR(s.velocity().y, -2.0, 1e-4);
}

TEST(Kalman, ZeroInnovationKeepsMeanAndShrinksCovariance) {
  FilterState s = kf_predict(kf_init({1, 2}, 0), 0.1, {});
  const auto u = kf_update(s, s.position());
  EXPECT_NEAR((u.state.x - s.x).norm(), 0.0, 1e-12);
  EXPECT_LE(u.state.P.trace(), s.P.trace());
}

TEST(Kalman, NonFiniteMeasurementRejected) {
  const FilterState s = kf_init({1, 2}, 0);
  const auto u = kf_update(s, {std::nan(""), 0});
  EXPECT_FALSE(u.accepted);
  EXPECT_EQ(u.state.x, s.x);
  EXPECT_EQ(u.state.P, s.P);
  EXPECT_FALSE(kf_update(s, {0, INFINITY}).accepted);
}

TEST(KalmanProperty, CovarianceStaysSymmetricPositiveSemidefinite) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50), dtd(0.001, 0.5);
  FilterState s = kf_init({0, 0}, 0);
  for (int k = 0; k < 10'000; ++k) {
    s = kf_predict(s, dtd(rng), {}, {});
    if (k % 3) s = kf_update(s, {u(rng), u(rng)}).state;
    ASSERT_EQ(s.P, s.P.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(s.P);
    ASSERT_GE(eig.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(Pid, ProportionalOnly) {
  PidGains g;
  g.kp = 0.5;
  g.ki = g.kd = 0;
  const auto out = pid_step(g, {4, -2}, 0.1, {});
  EXPECT_DOUBLE_EQ(out.command.x, 2.0);
  EXPECT_DOUBLE_EQ(out.command.y, -1.0);
  EXPECT_THROW(pid_step(g, {}, 0, {}), DomainError);
}

TEST(Pid, IntegralGrowsLinearlyUntilClamp) {
  PidGains g;
  g.kp = g.kd = 0;
  g.ki = 1;
  g.integral_limit = 50;
  PidMemory m;
  for (int k = 1; k <= 200; ++k) {
    const auto out = pid_step(g, {10, -10}, 0.1, m);
    m = out.memory;
    const double expected = std::min(1.0 * k, 50.0);
    EXPECT_NEAR(out.command.x, expected, 1e-9);
    EXPECT_NEAR(out.command.y, -expected, 1e-9);
  }
}

TEST(Pid, DerivativeIsBackwardDifference) {
  PidGains g;
  g.kp = g.ki = 0;
  g.kd = 2;
  auto a = pid_step(g, {1, 1}, 0.5, {});
  EXPECT_EQ(a.command.x, 0.0);  // no previous error yet
  auto b = pid_step(g, {3, 0}, 0.5, a.memory);
  EXPECT_DOUBLE_EQ(b.command.x, 2 * (3 - 1) / 0.5);
  EXPECT_DOUBLE_EQ(b.command.y, 2 * (0 - 1) / 0.5);
}

TEST(Pid, InvalidGainsRejected) {
  PidGains g;
  g.kp = -1;
  EXPECT_THROW(g.validate(), ConfigError);
  g = {};
  g.integral_limit = 0;
  EXPECT_THROW(g.validate(), ConfigError);
}

// Proportional control of an integrator plant contracts the error by (1 - kp) per tick.
TEST(PidProperty, ProportionalLoopContracts) {
  for (double kp : {0.2, 0.5, 0.9, 1.3}) {
    PidGains g;
    g.kp = kp;
    g.ki = g.kd = 0;
    Vec2 err{40, -25};
    PidMemory m;
    for (int k = 0; k < 30; ++k) {
      const double before = norm(err);
      const auto out = pid_step(g, err, 0.02, m);
      m = out.memory;
      err -= out.command;
      EXPECT_NEAR(norm(err), std::abs(1 - kp) * before, 1e-9);
    }
  }
}

TEST(Stage, QuantizesToWholeSteps) {
  StageState s = make_stage({});
  auto r = stage_apply(s, {1.03, -0.024}, 0);
  EXPECT_NEAR(r.queued_as.x, 1.05, 1e-12);
  EXPECT_NEAR(r.queued_as.y, 0.0, 1e-12);
  EXPECT_FALSE(r.saturated);
}

TEST(Stage, CommandTakesEffectAfterLatency) {
  StageState s = make_stage({});
  auto r = stage_apply(s, {1.0, 2.0}, 0);
  EXPECT_EQ(r.applied_as.x, 0.0);
  EXPECT_EQ(r.stage.position().x, 0.0);
  s = r.stage;
  const Vec2 moved = stage_advance(s, 1);
  EXPECT_NEAR(moved.x, 1.0, 1e-12);
  EXPECT_NEAR(s.position().y, 2.0, 1e-12);

  StageConfig zero;
  zero.latency_ticks = 0;
  auto z = stage_apply(make_stage(zero), {0.5, 0}, 4);
  EXPECT_NEAR(z.applied_as.x, 0.5, 1e-12);
  EXPECT_NEAR(z.stage.position().x, 0.5, 1e-12);
}

TEST(Stage, SaturatesLargeCommands) {
  auto r = stage_apply(make_stage({}), {500, -10}, 0);
  EXPECT_TRUE(r.saturated);
  EXPECT_NEAR(r.queued_as.x, 60.0, 1e-9);
  EXPECT_NEAR(r.queued_as.y, -10.0, 1e-9);
  EXPECT_EQ(stage_apply(make_stage({}), {NAN, 1}, 0).queued_as.x, 0.0);
}

TEST(Stage, StartPositionAndValidation) {
  EXPECT_NEAR(make_stage({}, {12.34, -5}).position().x, 12.35, 1e-12);
  StageConfig bad;
  bad.step_size_as = 0;
  EXPECT_THROW(make_stage(bad), ConfigError);
}

TEST(StageProperty, PositionIsQuantizedCumulativeSum) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-20, 20);
  StageState s = make_stage({});
  std::int64_t sx = 0, sy = 0;
  for (int k = 0; k < 100; ++k) {
    const Vec2 c{u(rng), u(rng)};
    auto r = stage_apply(std::move(s), c, k);
    s = std::move(r.stage);
    EXPECT_LE(std::abs(r.queued_as.x - c.x), 0.025 + 1e-12);
    EXPECT_LE(std::abs(r.queued_as.y - c.y), 0.025 + 1e-12);
    sx += std::llround(c.x / 0.05);
    sy += std::llround(c.y / 0.05);
  }
  stage_advance(s, 100);
  EXPECT_EQ(s.steps_x, sx);
  EXPECT_EQ(s.steps_y, sy);
}
