#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniflow/eval.hpp"
#include "uniflow/model.hpp"
#include "uniflow/patching.hpp"
#include "uniflow/train.hpp"

namespace uniflow::cli {

namespace fs = std::filesystem;

/// Everything one invocation needs. Built from presets, then a JSON file,
/// then command-line flags, in that order of precedence.
struct RunConfig {
  std::string preset = "desk";  // desk | full
  /// Dataset directories; when empty, every non-target dataset listed in
  /// data_dir/manifest.json.
  std::vector<fs::path> datasets;
  std::optional<fs::path> data_dir;
  std::optional<fs::path> target;
  std::optional<fs::path> checkpoint;
  patching::PatchConfig patch;
  model::ModelConfig model;
  train::TrainConfig train;
  /// Fine-tuning budget for few-shot runs.
  train::TrainConfig finetune;
  eval::Protocol protocol = eval::Protocol::short_term;
  std::optional<TaskSpec> task;  // overrides the protocol's task
  std::vector<double> noise_levels;
  std::vector<double> fractions{0.05, 0.10};
  std::string ablation = "banks";  // banks | units
  std::size_t ha_period = 24;
  std::size_t max_eval_windows = 0;
  std::size_t inspect_windows = 8;
  std::uint64_t seed = 0;
  std::optional<fs::path> out;

  TaskSpec resolved_task() const { return task ? *task : eval::task_for(protocol); }
  /// Dataset directories after manifest expansion.
  std::vector<fs::path> dataset_dirs() const;
  fs::path target_dir() const;
  fs::path out_dir() const;

  nlohmann::json to_json() const;
};

/// Presets for the named profile with `seed` applied everywhere.
RunConfig preset_config(const std::string& preset);

/// Reads a config file; relative paths resolve against the file's directory.
RunConfig load_run_config(const fs::path& path);
RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir);

}  // namespace uniflow::cli
