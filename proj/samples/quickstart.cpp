// Tracks a simulated star field for ten seconds and stabilises it.

#include <cstdio>

#include "evstab/experiment.hpp"

int main() {
  using namespace evstab;

  ExperimentSpec open = accuracy_spec(TrajectoryKind::circle, NoisePreset::n8, 10.0);
  const RunRecord tracked = run_open_loop(open);
  std::printf("open loop: %zu frames, RMSE %.2f arcsec\n", tracked.frames.size(), tracked.rmse_as.value_or(-1.0));

  ExperimentSpec closed = stabilization_spec(TrajectoryKind::circle, NoisePreset::n8, 10.0);
  const RunRecord stabilised = run_closed_loop(closed);
  const StabilizationReport rep = stabilization_report(stabilised);
  std::printf("closed loop: sigma_x %.2f, sigma_y %.2f arcsec\n", rep.sigma_x, rep.sigma_y);
}
