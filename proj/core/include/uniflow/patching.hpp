#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "uniflow/autograd.hpp"
#include "uniflow/data.hpp"
#include "uniflow/params.hpp"
#include "uniflow/partition.hpp"

namespace uniflow::patching {

using ad::Index;
using ad::Matrix;

struct PatchConfig {
  std::size_t p_t = 4;
  std::size_t p_s = 4;
  std::size_t d_model = 256;
  std::size_t num_subgraphs = 16;

  void validate() const;
  /// Divisibility checks against a task (p_t | H and p_t | P) and, for grids,
  /// the lattice (p_s | height and p_s | width).
  void check_task(const TaskSpec& task) const;
  void check_grid(const GridSpec& grid) const;
  /// p_s = 2 so that every suite grid (8x8, 10x12, 8x10) divides; D = 32.
  static PatchConfig desk();
};

/// Patch index i <-> (temporal block i / units, spatial unit i % units).
/// Temporal blocks are outermost, so history patches form a prefix.
struct PatchLayout {
  std::size_t blocks = 0;
  std::size_t units = 0;
  std::size_t history_blocks = 0;

  std::size_t length() const { return blocks * units; }
  std::size_t history_length() const { return history_blocks * units; }
  std::size_t block_of(std::size_t i) const { return i / units; }
  std::size_t unit_of(std::size_t i) const { return i % units; }
  bool is_history(std::size_t i) const { return block_of(i) < history_blocks; }
  std::size_t index(std::size_t block, std::size_t unit) const { return block * units + unit; }

  static PatchLayout for_grid(const TaskSpec& task, const GridSpec& grid, const PatchConfig& cfg);
  static PatchLayout for_graph(const TaskSpec& task, const PatchConfig& cfg);
};

struct PatchSequence {
  ad::Var embeddings;  // L x D
  PatchLayout layout;
  /// Graph only: per-node temporal features, row b * N + n.
  std::optional<ad::Var> skip_features;
};

/// Indices of the learnable patch encoders and output heads in a ParamStore.
struct PatchParams {
  std::size_t grid_weight, grid_bias;    // (p_t p_s p_s) x D, 1 x D
  std::size_t graph_weight, graph_bias;  // p_t x D, 1 x D
  std::size_t grid_head_weight, grid_head_bias;    // D x (p_t p_s p_s)
  std::size_t graph_head_weight, graph_head_bias;  // D x p_t
  std::size_t corr_w1, corr_b1, corr_w2, corr_b2;  // D x D, D x p_t

  static PatchParams create(nn::ParamStore& store, const PatchConfig& cfg, Rng& rng);
  static PatchParams resolve(const nn::ParamStore& store);
};

/// Rearranges a T' x (H W) window into L x (p_t p_s p_s) patch rows. Row
/// order: temporal block, then block row, then block column (scan-line).
/// Column order inside a patch: (dt, dh, dw).
Matrix grid_patch_rows(const Matrix& window, const GridSpec& grid, const PatchConfig& cfg);

/// Flat index of each entry of grid_patch_rows inside the T' x N window; the
/// inverse of the rearrangement, used to scatter predictions back.
std::vector<Index> grid_scatter_map(std::size_t steps, const GridSpec& grid, const PatchConfig& cfg);

/// Strided 3-D convolution (kernel = stride = (p_t, p_s, p_s)) as a matmul
/// over patch rows.
PatchSequence patch_grid(nn::Binder& bind, const PatchParams& p, const Matrix& window, const GridSpec& grid,
                         const PatchConfig& cfg, const TaskSpec& task);

/// Per-node strided 1-D temporal convolution followed by mean pooling over
/// the members of each subgraph.
PatchSequence patch_graph(nn::Binder& bind, const PatchParams& p, const Matrix& window,
                          const partition::Partition& part, const PatchConfig& cfg, const TaskSpec& task);

/// History rows of S (a prefix) and the indices of the masked future rows.
std::pair<ad::Var, std::vector<std::size_t>> mask_history(const PatchSequence& s);

/// Linear head D -> p_t p_s p_s per patch, scattered back to T' x N.
ad::Var unpatch_grid(nn::Binder& bind, const PatchParams& p, ad::Var decoded, const PatchLayout& layout,
                     const GridSpec& grid, const PatchConfig& cfg);

/// Subgraph head D -> p_t broadcast to member nodes, plus a per-node
/// correction from a two-layer map of (node skip feature + subgraph token).
/// Future blocks read the skip feature of the last history block so that no
/// future input reaches the output.
ad::Var unpatch_graph(nn::Binder& bind, const PatchParams& p, ad::Var decoded, ad::Var skip_features,
                      const partition::Partition& part, const PatchLayout& layout, const PatchConfig& cfg);

}  // namespace uniflow::patching
