#include "uniflow/config.hpp"

#include <algorithm>
#include <cstdint>
#include <type_traits>

#include "uniflow/error.hpp"

namespace uniflow::config {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  require(obj.is_object(), ErrorCode::parse_error, where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    require(known, ErrorCode::parse_error, "unknown key '" + key + "' in " + where);
  }
}

namespace {

template <typename U>
  requires std::is_unsigned_v<U>
void read(const json& j, const char* key, U& out, const std::string& where) {
  if (!j.contains(key)) return;
  // Parsed text yields unsigned storage for positive literals, but values built
  // in code arrive as signed integers.
  const bool ok = j[key].is_number_unsigned() || (j[key].is_number_integer() && j[key].template get<std::int64_t>() >= 0);
  require(ok, ErrorCode::parse_error, where + "." + key + " must be a non-negative integer");
  out = j[key].get<U>();
}

void read(const json& j, const char* key, double& out, const std::string& where) {
  if (!j.contains(key)) return;
  require(j[key].is_number(), ErrorCode::parse_error, where + "." + key + " must be a number");
  out = j[key].get<double>();
}

json banks_to_json(const mra::BankSet& b) {
  json arr = json::array();
  for (std::size_t i = 0; i < mra::kBankCount; ++i)
    if (b.enabled[i]) arr.push_back(mra::to_string(mra::bank_from_index(i)));
  return arr;
}

mra::BankSet banks_from_json(const json& j, const std::string& where) {
  require(j.is_array(), ErrorCode::parse_error, where + " must be an array of bank names");
  mra::BankSet set = mra::BankSet::none();
  for (const auto& item : j) {
    require(item.is_string(), ErrorCode::parse_error, where + " entries must be strings");
    const auto name = item.get<std::string>();
    bool found = false;
    for (std::size_t i = 0; i < mra::kBankCount; ++i)
      if (name == mra::to_string(mra::bank_from_index(i))) {
        set.enabled[i] = true;
        found = true;
      }
    require(found, ErrorCode::parse_error, "unknown memory bank '" + name + "' in " + where);
  }
  return set;
}

}  // namespace

json to_json(const patching::PatchConfig& c) {
  return {{"p_t", c.p_t}, {"p_s", c.p_s}, {"d_model", c.d_model}, {"num_subgraphs", c.num_subgraphs}};
}

json to_json(const model::ModelConfig& c) {
  return {{"enc_layers", c.enc_layers},
          {"dec_layers", c.dec_layers},
          {"d_model", c.d_model},
          {"heads", c.heads},
          {"ff_mult", c.ff_mult},
          {"dropout", c.dropout},
          {"memory_units", c.memory_units},
          {"banks", banks_to_json(c.banks)},
          {"max_temporal_blocks", c.max_temporal_blocks},
          {"max_spatial_units", c.max_spatial_units}};
}

json to_json(const TaskSpec& c) { return {{"history_len", c.history_len}, {"horizon_len", c.horizon_len}}; }

json to_json(const train::TrainConfig& c) {
  json j = {{"max_epochs", c.max_epochs},
            {"lr_initial", c.lr_initial},
            {"lr_late", c.lr_late},
            {"lr_switch_epoch", c.lr_switch_epoch},
            {"early_stop_patience", c.early_stop_patience},
            {"seed", c.seed},
            {"iterations_per_epoch", c.iterations_per_epoch},
            {"val_windows", c.val_windows},
            {"max_train_windows", c.max_train_windows}};
  j["grad_clip"] = c.grad_clip ? json(*c.grad_clip) : json(nullptr);
  return j;
}

json to_json(const synth::SynthConfig& c) {
  return {{"seed", c.seed},
          {"T", c.T},
          {"period_daily", c.period_daily},
          {"period_weekly", c.period_weekly},
          {"amplitude", c.amplitude},
          {"hotspot_count", c.hotspot_count},
          {"hotspot_speed", c.hotspot_speed},
          {"hotspot_strength", c.hotspot_strength},
          {"hotspot_sigma", c.hotspot_sigma},
          {"noise_std", c.noise_std},
          {"weekly_weight", c.weekly_weight},
          {"phase_spread", c.phase_spread},
          {"spatial_variation", c.spatial_variation},
          {"diffusion", c.diffusion},
          {"burn_in", c.burn_in}};
}

patching::PatchConfig patch_from_json(const json& j, patching::PatchConfig c) {
  const std::string w = "patch";
  check_keys(j, {"p_t", "p_s", "d_model", "num_subgraphs"}, w);
  read(j, "p_t", c.p_t, w);
  read(j, "p_s", c.p_s, w);
  read(j, "d_model", c.d_model, w);
  read(j, "num_subgraphs", c.num_subgraphs, w);
  c.validate();
  return c;
}

model::ModelConfig model_from_json(const json& j, model::ModelConfig c) {
  const std::string w = "model";
  check_keys(j,
             {"enc_layers", "dec_layers", "d_model", "heads", "ff_mult", "dropout", "memory_units", "banks",
              "max_temporal_blocks", "max_spatial_units"},
             w);
  read(j, "enc_layers", c.enc_layers, w);
  read(j, "dec_layers", c.dec_layers, w);
  read(j, "d_model", c.d_model, w);
  read(j, "heads", c.heads, w);
  read(j, "ff_mult", c.ff_mult, w);
  read(j, "dropout", c.dropout, w);
  read(j, "memory_units", c.memory_units, w);
  if (j.contains("banks")) c.banks = banks_from_json(j["banks"], w + ".banks");
  read(j, "max_temporal_blocks", c.max_temporal_blocks, w);
  read(j, "max_spatial_units", c.max_spatial_units, w);
  c.validate();
  return c;
}

TaskSpec task_from_json(const json& j, TaskSpec c) {
  const std::string w = "task";
  check_keys(j, {"history_len", "horizon_len"}, w);
  read(j, "history_len", c.history_len, w);
  read(j, "horizon_len", c.horizon_len, w);
  require(c.history_len >= 1, ErrorCode::invalid_argument, "task.history_len must be positive");
  return c;
}

train::TrainConfig train_from_json(const json& j, train::TrainConfig c) {
  const std::string w = "train";
  check_keys(j,
             {"max_epochs", "lr_initial", "lr_late", "lr_switch_epoch", "early_stop_patience", "seed", "grad_clip",
              "iterations_per_epoch", "val_windows", "max_train_windows"},
             w);
  read(j, "max_epochs", c.max_epochs, w);
  read(j, "lr_initial", c.lr_initial, w);
  read(j, "lr_late", c.lr_late, w);
  read(j, "lr_switch_epoch", c.lr_switch_epoch, w);
  read(j, "early_stop_patience", c.early_stop_patience, w);
  read(j, "seed", c.seed, w);
  if (j.contains("grad_clip")) {
    if (j["grad_clip"].is_null()) {
      c.grad_clip.reset();
    } else {
      double g = 0.0;
      read(j, "grad_clip", g, w);
      c.grad_clip = g;
    }
  }
  read(j, "iterations_per_epoch", c.iterations_per_epoch, w);
  read(j, "val_windows", c.val_windows, w);
  read(j, "max_train_windows", c.max_train_windows, w);
  c.validate();
  return c;
}

}  // namespace uniflow::config
