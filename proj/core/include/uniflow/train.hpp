#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniflow/data.hpp"
#include "uniflow/model.hpp"
#include "uniflow/partition.hpp"

namespace uniflow::train {

using ad::Matrix;

struct TrainConfig {
  std::size_t max_epochs = 200;
  double lr_initial = 5e-4;
  double lr_late = 5e-5;
  std::size_t lr_switch_epoch = 150;
  std::size_t early_stop_patience = 15;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip = 1.0;
  /// K: target iterations per dataset per epoch.
  std::size_t iterations_per_epoch = 100;
  /// Validation windows per dataset used for early stopping, evenly spaced.
  std::size_t val_windows = 64;
  /// Caps the training windows drawn from each dataset (evenly spaced
  /// subset); 0 uses all of them.
  std::size_t max_train_windows = 0;

  void validate() const;
  /// Budget sized for a single desktop core.
  static TrainConfig desk();
  /// Few-shot budget paired with desk(): half the steps at half the rate.
  static TrainConfig desk_finetune();
};

/// A normalized dataset with its splits, window offsets and (for graphs)
/// a cached partition.
struct PreparedDataset {
  FlowDataset data;  // normalized with `norm`
  Normalizer norm;
  Splits splits;
  std::optional<partition::Partition> partition;
  std::vector<std::size_t> train_starts, val_starts, test_starts;

  const std::string& name() const { return data.name; }
  model::SampleContext context() const;
  /// Training samples, channels folded in.
  std::size_t train_windows() const { return train_starts.size() * data.C; }
  /// T' x N normalized window.
  Matrix window(std::size_t start, std::size_t channel, const TaskSpec& task) const;
};

/// Splits 6:2:2, fits the normalizer on train, partitions graphs into
/// patch.num_subgraphs parts (read from or written to `cache_dir` if set).
PreparedDataset prepare(const FlowDataset& raw, const patching::PatchConfig& patch, const TaskSpec& task,
                        const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

/// Mean squared error over the horizon rows only. History rows of `pred`
/// are never read.
double horizon_mse(const Matrix& pred, const Matrix& target, const TaskSpec& task);

struct BatchPlan {
  std::size_t iterations = 0;  // K
  std::vector<std::size_t> batch_sizes;
};

/// B_d = max(1, round(N_d / K)).
BatchPlan make_batch_plan(std::span<const std::size_t> window_counts, std::size_t iterations);

struct StepRecord {
  std::size_t step = 0;
  std::string dataset;
  double loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_rmse = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  /// 0 means the initial parameters were kept.
  std::size_t best_epoch = 0;
  double best_val_rmse = 0.0;
  bool stopped_early = false;
};

struct TrainHooks {
  /// Called after every epoch with the current (not best) state.
  std::function<void(const EpochRecord&, const model::ModelState&)> on_epoch;
};

/// Mean over datasets of the denormalized validation RMSE on up to
/// cfg.val_windows evenly spaced windows each.
double validation_rmse(const model::ModelState& state, std::span<const PreparedDataset> datasets,
                       std::size_t max_windows);

/// Joint training. An epoch visits every dataset exactly K times in a
/// shuffled order and takes a batch of B_d windows per visit; the state ends
/// at the best-validation parameters.
TrainResult train(model::ModelState& state, std::span<const PreparedDataset> datasets, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// ceil(fraction * n), at least 1; fraction must lie in (0, 1].
std::size_t fewshot_windows(std::size_t n, double fraction);

/// Fine-tunes every parameter on the first fewshot_windows(N, fraction)
/// training windows of the target.
TrainResult finetune_fewshot(model::ModelState& state, const PreparedDataset& target, double fraction,
                             const TrainConfig& cfg);

struct Sample {
  const PreparedDataset* dataset = nullptr;
  std::size_t start = 0;
  std::size_t channel = 0;
};

/// Accumulates the gradient of the batch-mean horizon MSE into `grads` and
/// returns that loss.
double batch_gradient(const model::ModelState& state, std::span<const Sample> batch, nn::Gradients& grads,
                      bool training, std::uint64_t dropout_seed);

}  // namespace uniflow::train
