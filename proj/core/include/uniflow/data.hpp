#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace uniflow {

enum class DataKind { grid, graph };

const char* to_string(DataKind kind) noexcept;
DataKind parse_data_kind(const std::string& s);

struct GridSpec {
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Undirected, unweighted, simple graph.
struct GraphTopology {
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  /// Throws if an index is out of range, an edge is a self-loop or an
  /// undirected pair appears twice.
  void validate() const;
  std::vector<std::vector<std::size_t>> adjacency() const;
};

/// Affine map of [lo, hi] onto [0, 1].
struct Normalizer {
  double lo = 0.0;
  double hi = 1.0;

  /// Min-max over the given values. Throws degenerate_range when constant.
  static Normalizer fit(std::span<const double> values);

  double normalize(double x) const { return (x - lo) / (hi - lo); }
  double denormalize(double y) const { return lo + y * (hi - lo); }
  double scale() const { return hi - lo; }
};

struct DatasetMeta {
  std::string interval = "1 step";
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  /// Fitted on the train split; stored so reports can be denormalized.
  std::optional<Normalizer> normalizer;
};

struct TaskSpec {
  std::size_t history_len = 12;
  std::size_t horizon_len = 12;

  std::size_t window_len() const { return history_len + horizon_len; }
};

/// Half-open index range [begin, end) along time.
struct TimeRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

struct Splits {
  TimeRange train;
  TimeRange val;
  TimeRange test;
};

/// T x N x C flow tensor, row-major [t][n][c].
struct FlowDataset {
  std::string name;
  DataKind kind = DataKind::grid;
  std::size_t T = 0;
  std::size_t N = 0;
  std::size_t C = 1;
  std::vector<double> values;
  std::optional<GridSpec> grid;
  std::optional<GraphTopology> topology;
  DatasetMeta meta;

  double at(std::size_t t, std::size_t n, std::size_t c) const {
    return values[(t * N + n) * C + c];
  }
  double& at(std::size_t t, std::size_t n, std::size_t c) {
    return values[(t * N + n) * C + c];
  }

  /// Checks every structural invariant; throws uniflow::Error on violation.
  void validate() const;

  /// Values of channel c restricted to a time range, as a flat vector.
  std::vector<double> channel_values(std::size_t c, TimeRange range) const;
  /// Recomputes mean/std/min/max from the values.
  void refresh_stats();
};

/// A history+future window of one channel: rows are timesteps, columns are
/// locations, row-major.
struct Window {
  std::size_t start = 0;  // absolute timestep of the first history row
  std::size_t channel = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t n) const { return values[t * cols + n]; }
};

FlowDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const FlowDataset& ds, const std::filesystem::path& dir);

/// Fits a normalizer over every value of the dataset and applies it.
std::pair<FlowDataset, Normalizer> normalize(const FlowDataset& ds);
/// Applies an existing normalizer.
FlowDataset normalize(const FlowDataset& ds, const Normalizer& norm);
FlowDataset denormalize(const FlowDataset& ds, const Normalizer& norm);

/// Fits the min-max normalizer on the train split only.
Normalizer fit_train_normalizer(const FlowDataset& ds);

/// 6:2:2 temporally ordered split.
Splits split_622(std::size_t T);
inline Splits split_622(const FlowDataset& ds) { return split_622(ds.T); }

/// Number of stride-1 windows that fit in a range.
std::size_t window_count(std::size_t range_len, const TaskSpec& task);

/// Start offsets (absolute timesteps) of every stride-1 window in range.
std::vector<std::size_t> window_starts(TimeRange range, const TaskSpec& task);

/// Extracts one channel window starting at `start`.
Window extract_window(const FlowDataset& ds, std::size_t start, std::size_t channel,
                      const TaskSpec& task);

/// All windows in range, channels folded in as independent samples.
std::vector<Window> window_samples(const FlowDataset& ds, const TaskSpec& task,
                                   TimeRange range);

}  // namespace uniflow
