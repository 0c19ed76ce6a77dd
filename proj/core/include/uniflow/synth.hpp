#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uniflow/data.hpp"

namespace uniflow::synth {

/// Weekly weight used by the suite. The lag-period_daily autocorrelation of a
/// noise-free series is then (1 + w^2 cos(2 pi / 7) / 2) / (1 + w^2 / 2) > 0.99.
inline constexpr double kSuiteWeeklyWeight = 0.2;

/// Generator knobs shared by grid and graph datasets.
///
/// Every cell/node first carries a daily-periodic series P(t): a base profile
///   amplitude * level * (1 + 0.6 sin(2 pi t / period_daily + phase))
/// plus hotspots on closed daily routes (diffused along edges for graphs),
/// where phase and level vary smoothly in space (scaled by phase_spread and
/// spatial_variation). The weekly harmonic then scales each node's swing
/// around its mean m:
///   m + (P(t) - m) (1 + weekly_weight sin(2 pi t / period_weekly + phase / 2)),
/// so a config with noise_std = 0 and weekly_weight = 0 is exactly
/// period_daily-periodic. Noise is added last and values are clamped at 0.
struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t T = 2000;
  std::size_t period_daily = 24;
  std::size_t period_weekly = 168;
  double amplitude = 1.0;
  std::size_t hotspot_count = 0;
  /// Cells (grid) or hops (graph) travelled per step.
  double hotspot_speed = 0.25;
  double hotspot_strength = 0.8;
  double hotspot_sigma = 1.2;
  double noise_std = 0.0;
  double weekly_weight = 0.0;
  double phase_spread = 0.0;
  double spatial_variation = 0.0;
  /// Graph only: fraction of each node's mass shared with its neighbours per step.
  double diffusion = 0.0;
  /// Graph only: steps simulated before recording starts.
  std::size_t burn_in = 240;

  void validate() const;
};

FlowDataset gen_grid(const SynthConfig& cfg, std::size_t height, std::size_t width);
FlowDataset gen_graph(const SynthConfig& cfg, std::size_t num_nodes, double avg_degree);

/// Random geometric graph on the unit square, patched into one component by
/// repeatedly linking the lowest-indexed component to its nearest outside node.
GraphTopology random_geometric_graph(std::size_t num_nodes, double avg_degree, std::uint64_t seed);

/// One mass-conserving diffusion step: each node keeps (1 - lambda) of its
/// value and sends lambda split evenly to its neighbours. Isolated nodes keep
/// everything.
std::vector<double> diffuse_step(const std::vector<std::vector<std::size_t>>& adjacency,
                                 double lambda, std::span<const double> x);

/// Marker carried by the name of the held-out dataset.
inline constexpr const char* kTargetMarker = "target";

/// Fixed catalogue: two grids, two graphs and one held-out target grid.
std::vector<FlowDataset> gen_suite(std::uint64_t seed);

bool is_target(const FlowDataset& ds);

}  // namespace uniflow::synth
