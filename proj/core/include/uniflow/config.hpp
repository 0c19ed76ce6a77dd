#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "uniflow/data.hpp"
#include "uniflow/model.hpp"
#include "uniflow/patching.hpp"
#include "uniflow/synth.hpp"
#include "uniflow/train.hpp"

namespace uniflow::config {

using nlohmann::json;

/// Throws parse_error naming the first key of `obj` outside `allowed`.
void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where);

json to_json(const patching::PatchConfig& c);
json to_json(const model::ModelConfig& c);
json to_json(const TaskSpec& c);
json to_json(const train::TrainConfig& c);
json to_json(const synth::SynthConfig& c);

/// Each reader starts from `base` and overrides the keys present in `j`.
/// Unknown keys and wrongly typed values are errors; the result is validated.
patching::PatchConfig patch_from_json(const json& j, patching::PatchConfig base = {});
model::ModelConfig model_from_json(const json& j, model::ModelConfig base = {});
TaskSpec task_from_json(const json& j, TaskSpec base = {});
train::TrainConfig train_from_json(const json& j, train::TrainConfig base = {});

}  // namespace uniflow::config
