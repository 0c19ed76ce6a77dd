#include "uniflow/partition.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "uniflow/error.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::partition {

namespace ml = multilevel;

std::vector<std::size_t> balanced_sizes(std::size_t n, std::size_t k) {
  std::vector<std::size_t> sizes(k, n / k);
  for (std::size_t p = 0; p < n % k; ++p) ++sizes[p];
  return sizes;
}

std::size_t edge_cut(const GraphTopology& topology, std::span<const std::size_t> assignment) {
  require(assignment.size() == topology.num_nodes, ErrorCode::shape_mismatch,
          "assignment covers " + std::to_string(assignment.size()) + " of " +
              std::to_string(topology.num_nodes) + " nodes");
  std::size_t cut = 0;
  for (auto [i, j] : topology.edges) {
    require(i < assignment.size() && j < assignment.size(), ErrorCode::out_of_range,
            "edge endpoint outside assignment");
    cut += assignment[i] != assignment[j];
  }
  return cut;
}

Partition from_assignment(const GraphTopology& topology, std::size_t k,
                          std::vector<std::size_t> assignment) {
  Partition p;
  p.k = k;
  p.sizes.assign(k, 0);
  for (std::size_t a : assignment) {
    require(a < k, ErrorCode::out_of_range, "part index " + std::to_string(a) + " >= k");
    ++p.sizes[a];
  }
  p.cut = edge_cut(topology, assignment);
  p.assignment = std::move(assignment);
  return p;
}

void Partition::validate(const GraphTopology& topology) const {
  require(assignment.size() == topology.num_nodes, ErrorCode::shape_mismatch,
          "partition does not cover the graph");
  require(k >= 1 && sizes.size() == k, ErrorCode::invalid_argument, "bad part count");
  const std::size_t n = topology.num_nodes;
  std::vector<std::size_t> counted(k, 0);
  for (std::size_t a : assignment) {
    require(a < k, ErrorCode::out_of_range, "part index out of range");
    ++counted[a];
  }
  require(counted == sizes, ErrorCode::invalid_argument, "sizes disagree with assignment");
  for (std::size_t s : sizes) {
    require(s >= n / k && s <= (n + k - 1) / k && s > 0, ErrorCode::invalid_argument,
            "unbalanced part of size " + std::to_string(s));
  }
  require(cut == edge_cut(topology, assignment), ErrorCode::invalid_argument,
          "recorded cut disagrees with assignment");
}

// ---------------------------------------------------------------------------
// Multilevel machinery.

namespace multilevel {

WeightedGraph WeightedGraph::from_topology(const GraphTopology& topology) {
  WeightedGraph g;
  g.node_weight.assign(topology.num_nodes, 1);
  g.adj.resize(topology.num_nodes);
  for (auto [i, j] : topology.edges) {
    g.adj[i].emplace_back(j, 1);
    g.adj[j].emplace_back(i, 1);
  }
  for (auto& a : g.adj) std::sort(a.begin(), a.end());
  return g;
}

std::size_t WeightedGraph::total_weight() const {
  return std::accumulate(node_weight.begin(), node_weight.end(), std::size_t{0});
}

CoarseLevel coarsen_once(const WeightedGraph& g, std::uint64_t seed) {
  const std::size_t n = g.size();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<std::size_t> match(n, kNone);
  for (std::size_t v : order) {
    if (match[v] != kNone) continue;
    std::size_t best = kNone, best_w = 0;
    for (auto [u, w] : g.adj[v]) {  // sorted by index, so strict > keeps the lowest
      if (u == v || match[u] != kNone) continue;
      if (best == kNone || w > best_w) {
        best = u;
        best_w = w;
      }
    }
    if (best == kNone) {
      match[v] = v;
    } else {
      match[v] = best;
      match[best] = v;
    }
  }

  CoarseLevel level;
  level.fine_to_coarse.assign(n, kNone);
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (level.fine_to_coarse[i] != kNone) continue;
    level.fine_to_coarse[i] = next;
    level.fine_to_coarse[match[i]] = next;
    ++next;
  }
  WeightedGraph& c = level.graph;
  c.node_weight.assign(next, 0);
  c.adj.resize(next);
  for (std::size_t i = 0; i < n; ++i) c.node_weight[level.fine_to_coarse[i]] += g.node_weight[i];

  std::vector<std::size_t> acc(next, 0);
  std::vector<std::size_t> touched;
  std::vector<std::vector<std::size_t>> members(next);
  for (std::size_t i = 0; i < n; ++i) members[level.fine_to_coarse[i]].push_back(i);
  for (std::size_t cv = 0; cv < next; ++cv) {
    touched.clear();
    for (std::size_t i : members[cv]) {
      for (auto [j, w] : g.adj[i]) {
        const std::size_t cu = level.fine_to_coarse[j];
        if (cu == cv) continue;
        if (acc[cu] == 0) touched.push_back(cu);
        acc[cu] += w;
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::size_t cu : touched) {
      c.adj[cv].emplace_back(cu, acc[cu]);
      acc[cu] = 0;
    }
  }
  return level;
}

std::size_t weighted_cut(const WeightedGraph& g, std::span<const std::size_t> assignment) {
  std::size_t twice = 0;
  for (std::size_t v = 0; v < g.size(); ++v)
    for (auto [u, w] : g.adj[v])
      if (assignment[u] != assignment[v]) twice += w;
  return twice / 2;
}

std::vector<std::size_t> project(const CoarseLevel& level, std::span<const std::size_t> coarse) {
  std::vector<std::size_t> fine(level.fine_to_coarse.size());
  for (std::size_t i = 0; i < fine.size(); ++i) fine[i] = coarse[level.fine_to_coarse[i]];
  return fine;
}

}  // namespace multilevel

namespace {

using ml::WeightedGraph;
using Side = std::vector<std::size_t>;  // 0 or 1 per node

std::size_t absdiff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

/// gain[v] = external - internal edge weight: cut reduction if v switches side.
std::vector<long long> compute_gains(const WeightedGraph& g, const Side& side) {
  std::vector<long long> gain(g.size(), 0);
  for (std::size_t v = 0; v < g.size(); ++v)
    for (auto [u, w] : g.adj[v]) gain[v] += side[u] != side[v] ? static_cast<long long>(w)
                                                                : -static_cast<long long>(w);
  return gain;
}

void apply_move(const WeightedGraph& g, Side& side, std::vector<long long>& gain,
                std::size_t (&weight)[2], std::size_t v) {
  weight[side[v]] -= g.node_weight[v];
  side[v] ^= 1;
  weight[side[v]] += g.node_weight[v];
  gain[v] = -gain[v];
  for (auto [u, w] : g.adj[v]) {
    const long long d = 2 * static_cast<long long>(w);
    gain[u] += side[u] == side[v] ? -d : d;
  }
}

/// One Fiduccia-Mattheyses pass with rollback to the best prefix. A state is
/// better when it is within tolerance of the target (or closer to it), then
/// when its cut is lower.
bool fm_pass(const WeightedGraph& g, Side& side, std::size_t target0, std::size_t tol) {
  const std::size_t n = g.size();
  auto gain = compute_gains(g, side);
  std::size_t weight[2] = {0, 0};
  for (std::size_t v = 0; v < n; ++v) weight[side[v]] += g.node_weight[v];

  auto score = [&](long long cut_delta) {
    const std::size_t imb = absdiff(weight[0], target0);
    return std::make_pair(imb <= tol ? std::size_t{0} : imb, cut_delta);
  };

  std::vector<char> locked(n, 0);
  std::vector<std::size_t> moves;
  long long cut_delta = 0;
  auto best = score(0);
  std::size_t best_len = 0, since_best = 0;

  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t imb_now = absdiff(weight[0], target0);
    std::size_t pick = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (locked[v]) continue;
      std::size_t w0 = weight[0];
      if (side[v] == 0) w0 -= g.node_weight[v];
      else w0 += g.node_weight[v];
      const std::size_t imb = absdiff(w0, target0);
      if (imb > tol && imb >= imb_now) continue;
      bool boundary = false;
      for (auto [u, w] : g.adj[v]) boundary |= side[u] != side[v];
      if (!boundary && imb >= imb_now) continue;
      if (pick == n || gain[v] > gain[pick]) pick = v;
    }
    if (pick == n) break;
    cut_delta -= gain[pick];
    apply_move(g, side, gain, weight, pick);
    locked[pick] = 1;
    moves.push_back(pick);
    const auto s = score(cut_delta);
    if (s < best) {
      best = s;
      best_len = moves.size();
      since_best = 0;
    } else if (++since_best >= 64) {
      break;
    }
  }
  for (std::size_t i = moves.size(); i > best_len; --i) side[moves[i - 1]] ^= 1;
  return best_len > 0;
}

/// Moves best-gain nodes until side 0 weighs exactly target0 (unit weights).
void rebalance_exact(const WeightedGraph& g, Side& side, std::size_t target0) {
  auto gain = compute_gains(g, side);
  std::size_t weight[2] = {0, 0};
  for (std::size_t v = 0; v < g.size(); ++v) weight[side[v]] += g.node_weight[v];
  while (weight[0] != target0) {
    const std::size_t from = weight[0] > target0 ? 0 : 1;
    std::size_t pick = g.size();
    for (std::size_t v = 0; v < g.size(); ++v) {
      if (side[v] != from) continue;
      if (pick == g.size() || gain[v] > gain[pick]) pick = v;
    }
    apply_move(g, side, gain, weight, pick);
  }
}

/// Kernighan-Lin pass of balance-preserving pair swaps. Only the best positive
/// prefix is kept, so the cut never increases.
long long kl_pass(const WeightedGraph& g, Side& side) {
  constexpr std::size_t kCandidates = 12;
  const std::size_t n = g.size();
  auto gain = compute_gains(g, side);
  std::size_t weight[2] = {0, 0};
  for (std::size_t v = 0; v < n; ++v) weight[side[v]] += g.node_weight[v];

  auto edge_weight = [&](std::size_t a, std::size_t b) -> long long {
    const auto& adj = g.adj[a];
    auto it = std::lower_bound(adj.begin(), adj.end(), std::make_pair(b, std::size_t{0}));
    return it != adj.end() && it->first == b ? static_cast<long long>(it->second) : 0;
  };

  std::vector<char> locked(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> swaps;
  long long cum = 0, best = 0;
  std::size_t best_len = 0, since_best = 0;
  std::vector<std::size_t> cand[2];
  while (true) {
    for (auto& c : cand) c.clear();
    for (std::size_t v = 0; v < n; ++v)
      if (!locked[v]) cand[side[v]].push_back(v);
    if (cand[0].empty() || cand[1].empty()) break;
    for (auto& c : cand) {
      const std::size_t m = std::min(kCandidates, c.size());
      std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m), c.end(),
                        [&](std::size_t a, std::size_t b) {
                          return gain[a] != gain[b] ? gain[a] > gain[b] : a < b;
                        });
      c.resize(m);
    }
    long long best_pair = std::numeric_limits<long long>::min();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a : cand[0]) {
      for (std::size_t b : cand[1]) {
        const long long pg = gain[a] + gain[b] - 2 * edge_weight(a, b);
        if (pg > best_pair || (pg == best_pair && std::make_pair(a, b) < std::make_pair(ba, bb))) {
          best_pair = pg;
          ba = a;
          bb = b;
        }
      }
    }
    apply_move(g, side, gain, weight, ba);
    apply_move(g, side, gain, weight, bb);
    locked[ba] = locked[bb] = 1;
    swaps.emplace_back(ba, bb);
    cum += best_pair;
    if (cum > best) {
      best = cum;
      best_len = swaps.size();
      since_best = 0;
    } else if (++since_best >= 32) {
      break;
    }
  }
  for (std::size_t i = swaps.size(); i > best_len; --i) {
    side[swaps[i - 1].first] ^= 1;
    side[swaps[i - 1].second] ^= 1;
  }
  return best;
}

/// Greedy graph growing: repeatedly absorb the frontier node that adds the
/// least cut until side 0 reaches the target weight.
Side grow_region(const WeightedGraph& g, std::size_t seed_node, std::size_t target0) {
  const std::size_t n = g.size();
  Side side(n, 1);
  std::vector<long long> conn(n, 0), degree(n, 0);
  for (std::size_t v = 0; v < n; ++v)
    for (auto [u, w] : g.adj[v]) degree[v] += static_cast<long long>(w);
  std::size_t weight0 = 0;
  std::size_t next = seed_node;
  while (weight0 < target0) {
    side[next] = 0;
    weight0 += g.node_weight[next];
    for (auto [u, w] : g.adj[next]) conn[u] += static_cast<long long>(w);
    if (weight0 >= target0) break;
    std::size_t pick = n;
    long long pick_score = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (side[v] == 0 || conn[v] == 0) continue;
      const long long s = 2 * conn[v] - degree[v];
      if (pick == n || s > pick_score) {
        pick = v;
        pick_score = s;
      }
    }
    if (pick == n) {  // disconnected remainder
      for (std::size_t v = 0; v < n && pick == n; ++v)
        if (side[v] == 1) pick = v;
    }
    next = pick;
  }
  return side;
}

std::size_t max_node_weight(const WeightedGraph& g) {
  return *std::max_element(g.node_weight.begin(), g.node_weight.end());
}

Side bisect(const WeightedGraph& fine, std::size_t target0, std::size_t coarsen_limit,
            const PartitionOptions& options, Rng& rng, PartitionTrace* trace) {
  std::vector<ml::CoarseLevel> levels;
  const WeightedGraph* cur = &fine;
  while (cur->size() > coarsen_limit) {
    ml::CoarseLevel lvl = ml::coarsen_once(*cur, rng.next_u64());
    if (lvl.graph.size() * 20 > cur->size() * 19) break;  // < 5% shrink: stalled
    levels.push_back(std::move(lvl));
    cur = &levels.back().graph;
  }
  if (trace) trace->levels = std::max(trace->levels, levels.size() + 1);
  const WeightedGraph& coarsest = *cur;

  Side best_side;
  std::size_t best_cut = std::numeric_limits<std::size_t>::max();
  std::vector<std::pair<std::size_t, std::size_t>> best_trace;
  const std::size_t tries = std::max<std::size_t>(1, std::min(options.initial_tries, coarsest.size()));
  std::vector<std::size_t> starts(coarsest.size());
  std::iota(starts.begin(), starts.end(), 0);
  rng.shuffle(starts);

  for (std::size_t t = 0; t < tries; ++t) {
    Side side = grow_region(coarsest, starts[t], target0);
    for (int pass = 0; pass < 8 && fm_pass(coarsest, side, target0, max_node_weight(coarsest)); ++pass) {
    }
    for (std::size_t li = levels.size(); li-- > 0;) {
      side = ml::project(levels[li], side);
      const WeightedGraph& g = li == 0 ? fine : levels[li - 1].graph;
      for (int pass = 0; pass < 8 && fm_pass(g, side, target0, max_node_weight(g)); ++pass) {
      }
    }
    rebalance_exact(fine, side, target0);
    std::vector<std::pair<std::size_t, std::size_t>> passes;
    for (int pass = 0; pass < 16; ++pass) {
      const std::size_t before = ml::weighted_cut(fine, side);
      const long long improved = kl_pass(fine, side);
      const std::size_t after = ml::weighted_cut(fine, side);
      passes.emplace_back(before, after);
      if (improved <= 0) break;
    }
    const std::size_t cut = ml::weighted_cut(fine, side);
    if (cut < best_cut) {
      best_cut = cut;
      best_side = std::move(side);
      best_trace = std::move(passes);
    }
  }
  if (trace) trace->kl_passes.insert(trace->kl_passes.end(), best_trace.begin(), best_trace.end());
  return best_side;
}

void recurse(const std::vector<std::vector<std::size_t>>& adjacency, const std::vector<std::size_t>& nodes,
             std::size_t part_begin, std::size_t parts, const std::vector<std::size_t>& sizes,
             std::size_t coarsen_limit, const PartitionOptions& options, Rng& rng,
             std::vector<std::size_t>& assignment, PartitionTrace* trace) {
  if (parts == 1) {
    for (std::size_t v : nodes) assignment[v] = part_begin;
    return;
  }
  const std::size_t left_parts = parts / 2;
  const std::size_t target0 = std::accumulate(sizes.begin() + static_cast<std::ptrdiff_t>(part_begin),
                                              sizes.begin() + static_cast<std::ptrdiff_t>(part_begin + left_parts),
                                              std::size_t{0});

  // Induced subgraph with local indices.
  std::vector<std::size_t> local(assignment.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < nodes.size(); ++i) local[nodes[i]] = i;
  WeightedGraph sub;
  sub.node_weight.assign(nodes.size(), 1);
  sub.adj.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t u : adjacency[nodes[i]]) {
      if (local[u] != std::numeric_limits<std::size_t>::max()) sub.adj[i].emplace_back(local[u], 1);
    }
    std::sort(sub.adj[i].begin(), sub.adj[i].end());
  }

  const Side side = bisect(sub, target0, coarsen_limit, options, rng, trace);
  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < nodes.size(); ++i) (side[i] == 0 ? left : right).push_back(nodes[i]);
  recurse(adjacency, left, part_begin, left_parts, sizes, coarsen_limit, options, rng, assignment, trace);
  recurse(adjacency, right, part_begin + left_parts, parts - left_parts, sizes, coarsen_limit, options,
          rng, assignment, trace);
}

}  // namespace

Partition partition_kway(const GraphTopology& topology, std::size_t k, const PartitionOptions& options,
                         PartitionTrace* trace) {
  topology.validate();
  const std::size_t n = topology.num_nodes;
  require(k >= 1 && k <= n, ErrorCode::out_of_range,
          "k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  const auto sizes = balanced_sizes(n, k);
  std::vector<std::size_t> assignment(n, 0);
  std::vector<std::size_t> nodes(n);
  std::iota(nodes.begin(), nodes.end(), 0);
  Rng rng(options.seed);
  const std::size_t limit = std::max<std::size_t>(4 * k, 64);
  recurse(topology.adjacency(), nodes, 0, k, sizes, limit, options, rng, assignment, trace);
  return from_assignment(topology, k, std::move(assignment));
}

Partition brute_force_partition(const GraphTopology& topology, std::size_t k) {
  topology.validate();
  const std::size_t n = topology.num_nodes;
  require(n <= 12, ErrorCode::invalid_argument, "brute force is limited to 12 nodes");
  require(k >= 1 && k <= n, ErrorCode::out_of_range, "k out of range");
  const std::size_t lo = n / k, hi = (n + k - 1) / k;

  std::vector<std::size_t> a(n, 0), count(k, 0), best;
  std::size_t best_cut = std::numeric_limits<std::size_t>::max();
  // Restricted growth strings enumerate each unordered partition once.
  auto rec = [&](auto&& self, std::size_t i, std::size_t used) -> void {
    if (i == n) {
      if (used != k) return;
      for (std::size_t c : count)
        if (c < lo || c > hi) return;
      const std::size_t cut = edge_cut(topology, a);
      if (cut < best_cut) {
        best_cut = cut;
        best = a;
      }
      return;
    }
    if (k - used > n - i) return;
    const std::size_t limit = std::min(used + 1, k);
    for (std::size_t p = 0; p < limit; ++p) {
      if (count[p] == hi) continue;
      a[i] = p;
      ++count[p];
      self(self, i + 1, std::max(used, p + 1));
      --count[p];
    }
  };
  rec(rec, 0, 0);
  return from_assignment(topology, k, best);
}

std::filesystem::path cache_path(const std::filesystem::path& dataset_dir, std::size_t k) {
  return dataset_dir / ("partition.k" + std::to_string(k) + ".json");
}

void save_assignment(const std::filesystem::path& path, std::span<const std::size_t> assignment) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot write " + path.string());
  out << nlohmann::json(std::vector<std::size_t>(assignment.begin(), assignment.end())).dump() << '\n';
}

std::vector<std::size_t> load_assignment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
}

Partition load_or_partition(const std::filesystem::path& dataset_dir, const GraphTopology& topology,
                            std::size_t k, const PartitionOptions& options) {
  const auto path = cache_path(dataset_dir, k);
  if (std::filesystem::exists(path)) {
    try {
      Partition p = from_assignment(topology, k, load_assignment(path));
      p.validate(topology);
      return p;
    } catch (const Error&) {
      // Stale or foreign cache: recompute below.
    }
  }
  Partition p = partition_kway(topology, k, options);
  save_assignment(path, p.assignment);
  return p;
}

}  // namespace uniflow::partition
