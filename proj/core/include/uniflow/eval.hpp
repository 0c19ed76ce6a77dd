#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uniflow/model.hpp"
#include "uniflow/train.hpp"

namespace uniflow::eval {

using ad::Matrix;

struct EvalReport {
  std::string dataset;
  std::string protocol;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t horizon = 0;
  std::size_t windows = 0;
  std::uint64_t seed = 0;
};

double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

/// Running squared and absolute error sums in flow units.
struct ErrorAccumulator {
  double sum_sq = 0.0;
  double sum_abs = 0.0;
  std::size_t count = 0;

  /// Adds the horizon rows of a normalized prediction/target pair.
  void add_horizon(const Matrix& pred, const Matrix& truth, const TaskSpec& task, const Normalizer& norm);
  void merge(const ErrorAccumulator& other);
  double rmse() const;
  double mae() const;
};

enum class Protocol { short_term, long_term };
const char* to_string(Protocol p) noexcept;
Protocol parse_protocol(const std::string& s);
/// 12 -> 12 or 64 -> 64.
TaskSpec task_for(Protocol p);

/// Horizon predictions (P x N) as the mean of history values sharing each
/// step's phase modulo `period`; the plain history mean when the history
/// holds no value of that phase.
Matrix baseline_history_average(const Matrix& history, const TaskSpec& task, std::size_t period);

struct EvalOptions {
  /// Gaussian noise std as a fraction of the dataset mean, history only.
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  /// 0 evaluates every test window.
  std::size_t max_windows = 0;
  std::string protocol = "short";
};

/// Averages RMSE/MAE over the test windows and every horizon step,
/// denormalized.
EvalReport evaluate(const model::ModelState& state, const train::PreparedDataset& ds, const EvalOptions& opts = {});

EvalReport protocol_predict(const model::ModelState& state, const train::PreparedDataset& ds, Protocol protocol,
                            std::uint64_t seed = 0);

/// History-Average baseline on the same test windows.
EvalReport history_average_report(const train::PreparedDataset& ds, const TaskSpec& task, std::size_t period,
                                  std::size_t max_windows = 0);

/// All-zeros predictor on the same test windows.
EvalReport zeros_report(const train::PreparedDataset& ds, const TaskSpec& task, std::size_t max_windows = 0);

/// Noise standard deviation in flow units: level times the dataset mean.
double noise_std(double level, double dataset_mean);

EvalReport noise_eval(const model::ModelState& state, const train::PreparedDataset& ds, double level,
                      std::uint64_t seed);

/// Everything needed to train one model variant from scratch.
struct Recipe {
  patching::PatchConfig patch;
  model::ModelConfig model;
  TaskSpec task;
  train::TrainConfig train;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kUnitSweep[] = {64, 128, 256, 512, 1024};

struct AblationVariant {
  std::string label;
  model::ModelConfig model;
};

/// Memory-unit sweep variants, one per count in kUnitSweep.
std::vector<AblationVariant> unit_variants(const model::ModelConfig& base);
/// Full model, each bank dropped in turn, and all banks dropped.
std::vector<AblationVariant> bank_variants(const model::ModelConfig& base);

/// Trains each variant on `corpus` and reports on every dataset of it
/// (one row per variant and dataset, protocol = variant label), plus one
/// "<label>/mean" row with the mean across datasets.
std::vector<EvalReport> ablate(const Recipe& recipe, std::span<const AblationVariant> variants,
                               std::span<const train::PreparedDataset> corpus);

/// Zero-shot, 5% and 10% few-shot reports on a target absent from the
/// state's training manifest.
std::vector<EvalReport> zero_few_shot(const model::ModelState& state, const train::PreparedDataset& target,
                                      const train::TrainConfig& finetune, std::span<const double> fractions);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Cosine similarity of the retrieval signatures of two windows.
double case_study(const model::ModelState& state, const Matrix& window_a, const Matrix& window_b,
                  const model::SampleContext& ctx);

void write_reports_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
void write_reports_json(std::span<const EvalReport> reports, const std::filesystem::path& path);

}  // namespace uniflow::eval
