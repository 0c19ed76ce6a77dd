#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uniflow/autograd.hpp"
#include "uniflow/data.hpp"
#include "uniflow/memory.hpp"
#include "uniflow/params.hpp"
#include "uniflow/partition.hpp"
#include "uniflow/patching.hpp"

namespace uniflow::model {

using ad::Matrix;
using patching::PatchConfig;
using patching::PatchLayout;

struct ModelConfig {
  std::size_t enc_layers = 4;
  std::size_t dec_layers = 4;
  std::size_t d_model = 256;
  std::size_t heads = 8;
  std::size_t ff_mult = 4;
  double dropout = 0.1;
  std::size_t memory_units = 512;
  mra::BankSet banks;
  /// Sizes of the learned positional tables.
  std::size_t max_temporal_blocks = 64;
  std::size_t max_spatial_units = 64;

  void validate() const;
  /// D = 32, 4 heads, 2 + 2 layers, 64 memory units, no dropout.
  static ModelConfig desk();
};

/// Indices of one pre-norm transformer block's parameters.
struct BlockParams {
  std::size_t ln1_gain, ln1_bias;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_gain, ln2_bias;
  std::size_t w1, b1, w2, b2;
};

struct ModelParams {
  patching::PatchParams patch;
  std::size_t pos_temporal, pos_spatial, pos_kind;
  std::size_t mask_token;
  std::vector<BlockParams> encoder;
  std::size_t enc_norm_gain, enc_norm_bias;
  std::vector<BlockParams> decoder;
  mra::MraParams mra;
};

/// Everything needed to run or resume the model.
struct ModelState {
  PatchConfig patch;
  ModelConfig config;
  TaskSpec task;
  nn::ParamStore params;
  ModelParams index;
  /// Names of datasets the parameters were fitted on.
  std::vector<std::string> trained_on;

  bool was_trained_on(const std::string& dataset) const;
};

ModelState init_model(const PatchConfig& patch, const ModelConfig& config, const TaskSpec& task,
                      std::uint64_t seed);

/// Re-derives the index table from parameter names (after loading).
ModelParams resolve_params(const nn::ParamStore& params, const ModelConfig& config);

/// Spatial context of one sample.
struct SampleContext {
  DataKind kind = DataKind::grid;
  std::optional<GridSpec> grid;
  const partition::Partition* partition = nullptr;
};

struct ForwardOptions {
  bool training = false;
  /// Dropout source; required when training with dropout > 0.
  Rng* rng = nullptr;
};

/// Intermediate tensors exposed for inspection and tests.
struct ForwardTrace {
  PatchLayout layout;
  ad::Var patches;  // S with positional terms
  ad::Var history;  // S_h
  ad::Var encoded;  // Z_e
  std::optional<mra::QueryBundle> queries;
  std::optional<mra::AdaptiveAdjacency> adjacency;
  std::optional<mra::PromptBundle> prompts;
  ad::Var decoder_input;
  ad::Var decoded;
  std::vector<Matrix> attention;  // every attention matrix, per head
};

/// Positional rows (temporal block + spatial unit + data kind) for a layout.
ad::Var positional_rows(nn::Binder& bind, const ModelState& state, const PatchLayout& layout, DataKind kind);

ad::Var transformer_block(nn::Binder& bind, const BlockParams& p, ad::Var x, int heads, double dropout,
                          Rng* rng, std::vector<Matrix>* attention);

/// Pre-norm encoder over history patches, followed by a final layer norm.
ad::Var encode(nn::Binder& bind, const ModelState& state, ad::Var history, const ForwardOptions& opts = {},
               std::vector<Matrix>* attention = nullptr);

/// History rows carry Z_e; future rows carry the mask token plus their
/// positional terms. Prompts, when given, are added as in mra::augment.
ad::Var assemble_decoder_input(nn::Binder& bind, const ModelState& state, ad::Var encoded,
                               const PatchLayout& layout, DataKind kind, const mra::PromptBundle* prompts);

/// Full (unmasked) self-attention over every position.
ad::Var decode(nn::Binder& bind, const ModelState& state, ad::Var decoder_input, const ForwardOptions& opts = {},
               std::vector<Matrix>* attention = nullptr);

/// patch -> mask -> encode -> query/retrieve/augment -> decode -> unpatch.
/// `window` is T' x N (normalized); the result has the same shape.
ad::Var forward(nn::Binder& bind, const ModelState& state, const Matrix& window, const SampleContext& ctx,
                const ForwardOptions& opts = {}, ForwardTrace* trace = nullptr);

/// Inference-mode forward without gradient recording.
Matrix predict(const ModelState& state, const Matrix& window, const SampleContext& ctx);

/// Concatenated per-bank mean retrieval weights (4 * memory_units).
Eigen::VectorXd retrieval_signature(const ModelState& state, const Matrix& window, const SampleContext& ctx);

}  // namespace uniflow::model
