#pragma once

#include <filesystem>

#include "uniflow/model.hpp"

namespace uniflow::checkpoint {

/// File layout: 8-byte magic "UFLOWCK1", u64 little-endian header length,
/// UTF-8 JSON header, then every parameter as little-endian f32 in manifest
/// order. The header holds the patch, model and task configs, the training
/// manifest and a parameter manifest {name, shape, offset} with offsets in
/// floats from the start of the blob.
inline constexpr char kMagic[8] = {'U', 'F', 'L', 'O', 'W', 'C', 'K', '1'};

void save(const model::ModelState& state, const std::filesystem::path& path);
model::ModelState load(const std::filesystem::path& path);

}  // namespace uniflow::checkpoint
