#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "uniflow/data.hpp"

namespace uniflow::partition {

/// Balanced k-way node assignment.
struct Partition {
  std::size_t k = 0;
  std::vector<std::size_t> assignment;
  std::size_t cut = 0;
  std::vector<std::size_t> sizes;

  /// Every part non-empty, sizes within [floor(N/k), ceil(N/k)] and cut
  /// consistent with the assignment.
  void validate(const GraphTopology& topology) const;
};

struct PartitionOptions {
  std::uint64_t seed = 0;
  /// Region-growing starts tried at the coarsest level of every bisection.
  std::size_t initial_tries = 4;
};

/// Statistics collected while partitioning; handy for tests and benchmarks.
struct PartitionTrace {
  /// Cut of the bisection before and after every Kernighan-Lin pass at the
  /// finest level, flattened over all bisections: pairs (before, after).
  std::vector<std::pair<std::size_t, std::size_t>> kl_passes;
  std::size_t levels = 0;
};

/// Multilevel recursive bisection: heavy-edge matching coarsening, greedy
/// region growing, FM refinement during uncoarsening and an exact-balance
/// Kernighan-Lin swap phase on the original graph.
Partition partition_kway(const GraphTopology& topology, std::size_t k,
                         const PartitionOptions& options = {}, PartitionTrace* trace = nullptr);

/// Number of edges whose endpoints lie in different parts.
std::size_t edge_cut(const GraphTopology& topology, std::span<const std::size_t> assignment);

/// Exhaustive search over every balanced assignment; only for num_nodes <= 12.
Partition brute_force_partition(const GraphTopology& topology, std::size_t k);

/// Target part sizes: the first N mod k parts get one extra node.
std::vector<std::size_t> balanced_sizes(std::size_t n, std::size_t k);

/// Reads/writes `partition.k<k>.json` (a JSON array of part indices).
std::filesystem::path cache_path(const std::filesystem::path& dataset_dir, std::size_t k);
void save_assignment(const std::filesystem::path& path, std::span<const std::size_t> assignment);
std::vector<std::size_t> load_assignment(const std::filesystem::path& path);

/// Loads the cached partition when present and valid, otherwise computes and
/// caches it.
Partition load_or_partition(const std::filesystem::path& dataset_dir, const GraphTopology& topology,
                            std::size_t k, const PartitionOptions& options = {});

/// Builds a Partition (sizes, cut) from a raw assignment.
Partition from_assignment(const GraphTopology& topology, std::size_t k,
                          std::vector<std::size_t> assignment);

namespace multilevel {

/// Node- and edge-weighted graph used during coarsening.
struct WeightedGraph {
  std::vector<std::size_t> node_weight;
  /// Sorted (neighbour, edge weight) lists.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj;

  static WeightedGraph from_topology(const GraphTopology& topology);
  std::size_t size() const { return node_weight.size(); }
  std::size_t total_weight() const;
};

struct CoarseLevel {
  WeightedGraph graph;
  std::vector<std::size_t> fine_to_coarse;
};

/// One round of heavy-edge matching. Nodes are visited in a seeded order;
/// among unmatched neighbours the heaviest edge wins, ties to the lowest index.
CoarseLevel coarsen_once(const WeightedGraph& g, std::uint64_t seed);

std::size_t weighted_cut(const WeightedGraph& g, std::span<const std::size_t> assignment);

std::vector<std::size_t> project(const CoarseLevel& level, std::span<const std::size_t> coarse);

}  // namespace multilevel

}  // namespace uniflow::partition
