#include "run_config.hpp"

#include <fstream>

#include "uniflow/config.hpp"
#include "uniflow/error.hpp"

namespace uniflow::cli {

using nlohmann::json;

namespace {

std::vector<fs::path> manifest_datasets(const fs::path& dir, bool want_target) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open " + path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
  std::vector<fs::path> out;
  for (const auto& d : m.at("datasets"))
    if (d.at("target").get<bool>() == want_target) out.push_back(dir / d.at("path").get<std::string>());
  return out;
}

fs::path resolve(const fs::path& base, const json& v, const std::string& key) {
  require(v.is_string(), ErrorCode::parse_error, key + " must be a path string");
  fs::path p = v.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

std::vector<double> doubles(const json& v, const std::string& key) {
  require(v.is_array(), ErrorCode::parse_error, key + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    require(x.is_number(), ErrorCode::parse_error, key + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::size_t unsigned_value(const json& v, const std::string& key) {
  require(v.is_number_unsigned(), ErrorCode::parse_error, key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

std::vector<fs::path> RunConfig::dataset_dirs() const {
  if (!datasets.empty()) return datasets;
  require(data_dir.has_value(), ErrorCode::invalid_argument, "config names neither datasets nor data_dir");
  return manifest_datasets(*data_dir, false);
}

fs::path RunConfig::target_dir() const {
  if (target) return *target;
  require(data_dir.has_value(), ErrorCode::invalid_argument, "config names neither target nor data_dir");
  const auto t = manifest_datasets(*data_dir, true);
  require(t.size() == 1, ErrorCode::invalid_argument, "manifest must list exactly one target dataset");
  return t.front();
}

fs::path RunConfig::out_dir() const {
  require(out.has_value(), ErrorCode::invalid_argument, "no output directory (use --out)");
  return *out;
}

json RunConfig::to_json() const {
  json j;
  j["preset"] = preset;
  json ds = json::array();
  for (const auto& d : datasets) ds.push_back(fs::absolute(d).string());
  j["datasets"] = ds;
  if (data_dir) j["data_dir"] = fs::absolute(*data_dir).string();
  if (target) j["target"] = fs::absolute(*target).string();
  if (checkpoint) j["checkpoint"] = fs::absolute(*checkpoint).string();
  j["patch"] = config::to_json(patch);
  j["model"] = config::to_json(model);
  j["train"] = config::to_json(train);
  j["finetune"] = config::to_json(finetune);
  j["protocol"] = eval::to_string(protocol);
  if (task) j["task"] = config::to_json(*task);
  j["noise_levels"] = noise_levels;
  j["fractions"] = fractions;
  j["ablation"] = ablation;
  j["ha_period"] = ha_period;
  j["max_eval_windows"] = max_eval_windows;
  j["inspect_windows"] = inspect_windows;
  j["seed"] = seed;
  return j;
}

RunConfig preset_config(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == "desk") {
    c.patch = patching::PatchConfig::desk();
    c.model = model::ModelConfig::desk();
    c.train = train::TrainConfig::desk();
    c.finetune = train::TrainConfig::desk_finetune();
  } else if (preset == "full") {
    c.finetune.max_epochs = 20;
  } else {
    fail(ErrorCode::parse_error, "preset must be desk or full, got '" + preset + "'");
  }
  c.noise_levels = {0.0, 0.01, 0.05, 0.10};
  return c;
}

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  config::check_keys(j,
                     {"preset", "datasets", "data_dir", "target", "checkpoint", "patch", "model", "train", "finetune",
                      "protocol", "task", "noise_levels", "fractions", "ablation", "ha_period", "max_eval_windows",
                      "inspect_windows", "seed", "out"},
                     "config");
  std::string preset = "desk";
  if (j.contains("preset")) {
    require(j["preset"].is_string(), ErrorCode::parse_error, "preset must be a string");
    preset = j["preset"].get<std::string>();
  }
  RunConfig c = preset_config(preset);
  if (j.contains("datasets")) {
    require(j["datasets"].is_array(), ErrorCode::parse_error, "datasets must be an array of paths");
    for (const auto& d : j["datasets"]) c.datasets.push_back(resolve(base, d, "datasets[]"));
  }
  if (j.contains("data_dir")) c.data_dir = resolve(base, j["data_dir"], "data_dir");
  if (j.contains("target")) c.target = resolve(base, j["target"], "target");
  if (j.contains("checkpoint")) c.checkpoint = resolve(base, j["checkpoint"], "checkpoint");
  if (j.contains("out")) c.out = resolve(base, j["out"], "out");
  if (j.contains("patch")) c.patch = config::patch_from_json(j["patch"], c.patch);
  if (j.contains("model")) c.model = config::model_from_json(j["model"], c.model);
  if (j.contains("train")) c.train = config::train_from_json(j["train"], c.train);
  if (j.contains("finetune")) c.finetune = config::train_from_json(j["finetune"], c.finetune);
  if (j.contains("protocol")) {
    require(j["protocol"].is_string(), ErrorCode::parse_error, "protocol must be a string");
    c.protocol = eval::parse_protocol(j["protocol"].get<std::string>());
  }
  if (j.contains("task")) c.task = config::task_from_json(j["task"]);
  if (j.contains("noise_levels")) c.noise_levels = doubles(j["noise_levels"], "noise_levels");
  if (j.contains("fractions")) c.fractions = doubles(j["fractions"], "fractions");
  if (j.contains("ablation")) {
    require(j["ablation"].is_string(), ErrorCode::parse_error, "ablation must be a string");
    c.ablation = j["ablation"].get<std::string>();
    require(c.ablation == "banks" || c.ablation == "units", ErrorCode::parse_error,
            "ablation must be banks or units");
  }
  if (j.contains("ha_period")) c.ha_period = unsigned_value(j["ha_period"], "ha_period");
  if (j.contains("max_eval_windows")) c.max_eval_windows = unsigned_value(j["max_eval_windows"], "max_eval_windows");
  if (j.contains("inspect_windows")) c.inspect_windows = unsigned_value(j["inspect_windows"], "inspect_windows");
  if (j.contains("seed")) {
    require(j["seed"].is_number_unsigned(), ErrorCode::parse_error, "seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

}  // namespace uniflow::cli
