#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "support.hpp"
#include "uniflow/error.hpp"
#include "uniflow/partition.hpp"
#include "uniflow/synth.hpp"

using namespace uniflow;
using namespace uniflow::partition;

namespace {

GraphTopology bridge_of_cliques() {
  GraphTopology g{8, {}};
  for (std::size_t base : {0u, 4u})
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j) g.edges.emplace_back(base + i, base + j);
  g.edges.emplace_back(3, 4);
  return g;
}

GraphTopology path(std::size_t n) {
  GraphTopology g{n, {}};
  for (std::size_t i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
  return g;
}

GraphTopology star(std::size_t n) {
  GraphTopology g{n, {}};
  for (std::size_t i = 1; i < n; ++i) g.edges.emplace_back(0, i);
  return g;
}

GraphTopology cycle(std::size_t n) {
  GraphTopology g = path(n);
  g.edges.emplace_back(0, n - 1);
  return g;
}

std::size_t naive_cut(const GraphTopology& g, const std::vector<std::size_t>& a) {
  std::size_t cut = 0;
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    for (std::size_t j = 0; j < g.num_nodes; ++j) {
      if (i >= j || a[i] == a[j]) continue;
      for (const auto& [u, v] : g.edges)
        if ((u == i && v == j) || (u == j && v == i)) ++cut;
    }
  return cut;
}

void check_balanced(const Partition& p, std::size_t n) {
  const std::size_t lo = n / p.k, hi = (n + p.k - 1) / p.k;
  for (std::size_t s : p.sizes) {
    CHECK(s >= lo);
    CHECK(s <= hi);
    CHECK(s > 0);
  }
}

}  // namespace

TEST_SUITE("partition") {
  TEST_CASE("edge cut") {
    GraphTopology k4{4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
    const std::vector<std::size_t> one{0, 0, 0, 0}, split{0, 0, 1, 1};
    CHECK(edge_cut(k4, one) == 0);
    CHECK(edge_cut(k4, split) == 4);

    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const GraphTopology g = synth::random_geometric_graph(15, 4.0, rng.next_u64());
      std::vector<std::size_t> a(15);
      for (auto& x : a) x = rng.below(3);
      CHECK(edge_cut(g, a) == naive_cut(g, a));
    }
    const std::vector<std::size_t> short_assignment{0, 0};
    CHECK_THROWS_AS(edge_cut(k4, short_assignment), Error);
  }

  TEST_CASE("textbook graphs") {
    const Partition b = partition_kway(bridge_of_cliques(), 2);
    CHECK(b.cut == 1);
    CHECK(b.sizes == std::vector<std::size_t>{4, 4});
    CHECK(partition_kway(path(4), 2).cut == 1);
    CHECK(brute_force_partition(cycle(6), 2).cut == 2);
    CHECK(partition_kway(cycle(6), 2).cut == 2);
    CHECK(brute_force_partition(bridge_of_cliques(), 2).cut == 1);
  }

  TEST_CASE("within 1.5x of the exhaustive optimum on small graphs") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 8;
      const GraphTopology g = synth::random_geometric_graph(n, 3.0, rng.next_u64());
      const Partition best = brute_force_partition(g, 2);
      const Partition p = partition_kway(g, 2, {.seed = static_cast<std::uint64_t>(trial)});
      CHECK_NOTHROW(p.validate(g));
      CHECK(static_cast<double>(p.cut) <= 1.5 * static_cast<double>(best.cut));
    }
    for (std::size_t n = 2; n <= 10; ++n) {
      for (const GraphTopology& g : {path(n), star(n)}) {
        const double best = static_cast<double>(brute_force_partition(g, 2).cut);
        CHECK(static_cast<double>(partition_kway(g, 2).cut) <= 1.5 * best);
      }
    }
  }

  TEST_CASE("balance holds for every k") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 30 + rng.below(120);
      const GraphTopology g = synth::random_geometric_graph(n, 4.0, rng.next_u64());
      for (std::size_t k : {1u, 2u, 3u, 5u, 7u, 8u, 16u}) {
        const Partition p = partition_kway(g, k);
        CHECK_NOTHROW(p.validate(g));
        check_balanced(p, n);
        CHECK(p.cut == edge_cut(g, p.assignment));
      }
    }
    // Disconnected input still comes out balanced.
    GraphTopology islands{9, {{0, 1}, {2, 3}, {4, 5}}};
    check_balanced(partition_kway(islands, 4), 9);
  }

  TEST_CASE("refinement passes never increase the cut") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
      const GraphTopology g = synth::random_geometric_graph(200, 5.0, rng.next_u64());
      PartitionTrace trace;
      partition_kway(g, 8, {}, &trace);
      REQUIRE_FALSE(trace.kl_passes.empty());
      for (const auto& [before, after] : trace.kl_passes) CHECK(after <= before);
    }
  }

  TEST_CASE("deterministic under a fixed seed") {
    const GraphTopology g = synth::random_geometric_graph(120, 4.0, 3);
    const Partition a = partition_kway(g, 16, {.seed = 5}), b = partition_kway(g, 16, {.seed = 5});
    CHECK(a.assignment == b.assignment);
  }

  TEST_CASE("projection preserves the weighted cut") {
    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
      const GraphTopology g = synth::random_geometric_graph(80, 5.0, rng.next_u64());
      multilevel::WeightedGraph wg = multilevel::WeightedGraph::from_topology(g);
      std::vector<multilevel::CoarseLevel> levels;
      for (int l = 0; l < 3; ++l) {
        levels.push_back(multilevel::coarsen_once(levels.empty() ? wg : levels.back().graph, rng.next_u64()));
        CHECK(levels.back().graph.total_weight() == wg.total_weight());
      }
      const auto& coarsest = levels.back().graph;
      std::vector<std::size_t> assignment(coarsest.size());
      for (auto& a : assignment) a = rng.below(3);
      const std::size_t coarse_cut = multilevel::weighted_cut(coarsest, assignment);
      for (auto it = levels.rbegin(); it != levels.rend(); ++it) assignment = multilevel::project(*it, assignment);
      CHECK(assignment.size() == g.num_nodes);
      CHECK(edge_cut(g, assignment) == coarse_cut);
    }
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(partition_kway(path(4), 0), Error);
    CHECK_THROWS_AS(partition_kway(path(4), 5), Error);
    CHECK_THROWS_AS(brute_force_partition(path(13), 2), Error);
  }

  TEST_CASE("cache round trip and recovery") {
    const auto dir = testing::scratch_dir("partition-cache");
    const GraphTopology g = synth::random_geometric_graph(40, 4.0, 1);
    const Partition first = load_or_partition(dir, g, 4);
    CHECK(std::filesystem::exists(cache_path(dir, 4)));
    CHECK(load_assignment(cache_path(dir, 4)) == first.assignment);
    CHECK(load_or_partition(dir, g, 4).assignment == first.assignment);

    // A cache that violates balance is recomputed rather than trusted.
    save_assignment(cache_path(dir, 4), std::vector<std::size_t>(40, 0));
    const Partition again = load_or_partition(dir, g, 4);
    CHECK_NOTHROW(again.validate(g));
    std::ofstream(cache_path(dir, 4)) << "not json";
    CHECK_NOTHROW(load_or_partition(dir, g, 4).validate(g));
  }
}
