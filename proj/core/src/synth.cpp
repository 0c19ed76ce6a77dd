#include "uniflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "uniflow/error.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Profile {
  double level;
  double phase;
};

double base_value(const SynthConfig& cfg, const Profile& p, double t) {
  const double daily = std::sin(kTwoPi * t / static_cast<double>(cfg.period_daily) + p.phase);
  return cfg.amplitude * p.level * (1.0 + 0.6 * daily);
}

/// Applies the weekly swing scaling, adds noise and clamps at zero. `ds`
/// holds the noise-free daily-periodic series on entry.
void finish_values(FlowDataset& ds, const SynthConfig& cfg, const std::vector<Profile>& profiles, Rng& noise) {
  std::vector<double> mean(ds.N, 0.0);
  for (std::size_t t = 0; t < ds.T; ++t)
    for (std::size_t n = 0; n < ds.N; ++n) mean[n] += ds.values[t * ds.N + n];
  for (double& m : mean) m /= static_cast<double>(ds.T);
  for (std::size_t t = 0; t < ds.T; ++t) {
    const double td = static_cast<double>(t);
    for (std::size_t n = 0; n < ds.N; ++n) {
      double& v = ds.values[t * ds.N + n];
      if (cfg.weekly_weight != 0.0) {
        const double weekly =
            std::sin(kTwoPi * td / static_cast<double>(cfg.period_weekly) + 0.5 * profiles[n].phase);
        v = mean[n] + (v - mean[n]) * (1.0 + cfg.weekly_weight * weekly);
      }
      if (cfg.noise_std > 0.0) v += noise.normal(0.0, cfg.noise_std);
      v = std::max(0.0, v);
    }
  }
}

void finalize(FlowDataset& ds) {
  for (double& v : ds.values) v = static_cast<double>(static_cast<float>(v));
  ds.refresh_stats();
  ds.meta.normalizer = fit_train_normalizer(ds);
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

void SynthConfig::validate() const {
  require(period_daily >= 2, ErrorCode::invalid_argument, "period_daily must be >= 2");
  require(period_weekly >= 1, ErrorCode::invalid_argument, "period_weekly must be >= 1");
  require(T >= period_daily, ErrorCode::invalid_argument, "T must be >= period_daily");
  require(amplitude > 0.0, ErrorCode::invalid_argument, "amplitude must be positive");
  require(noise_std >= 0.0, ErrorCode::invalid_argument, "noise_std must be >= 0");
  require(hotspot_speed >= 0.0, ErrorCode::invalid_argument, "hotspot_speed must be >= 0");
  require(hotspot_sigma > 0.0, ErrorCode::invalid_argument, "hotspot_sigma must be positive");
  require(diffusion >= 0.0 && diffusion <= 1.0, ErrorCode::invalid_argument,
          "diffusion must lie in [0, 1]");
}

FlowDataset gen_grid(const SynthConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  require(height >= 1 && width >= 1, ErrorCode::invalid_argument, "grid must be non-empty");
  Rng rng(cfg.seed);

  // Smooth spatial fields from a couple of random low-frequency waves.
  const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5);
  const double ox = rng.uniform(0.0, kTwoPi), oy = rng.uniform(0.0, kTwoPi);
  const double lx = rng.uniform(0.0, kTwoPi), ly = rng.uniform(0.0, kTwoPi);
  std::vector<Profile> profiles(height * width);
  for (std::size_t h = 0; h < height; ++h) {
    for (std::size_t w = 0; w < width; ++w) {
      const double u = static_cast<double>(h) / static_cast<double>(height);
      const double v = static_cast<double>(w) / static_cast<double>(width);
      const double phase_field = 0.5 * std::sin(kTwoPi * fx * u + ox) + 0.5 * std::cos(kTwoPi * fy * v + oy);
      const double level_field = 0.5 * std::sin(kTwoPi * u + lx) * std::cos(kTwoPi * v + ly);
      profiles[h * width + w] = {1.0 + cfg.spatial_variation * level_field,
                                 cfg.phase_spread * phase_field};
    }
  }

  struct Hotspot {
    double cx, cy, radius, angle0, direction;
  };
  std::vector<Hotspot> hotspots;
  const double radius = cfg.hotspot_speed * static_cast<double>(cfg.period_daily) / kTwoPi;
  for (std::size_t k = 0; k < cfg.hotspot_count; ++k) {
    hotspots.push_back({rng.uniform(0.0, static_cast<double>(height - 1)),
                        rng.uniform(0.0, static_cast<double>(width - 1)), radius,
                        rng.uniform(0.0, kTwoPi), rng.uniform() < 0.5 ? -1.0 : 1.0});
  }

  FlowDataset ds;
  ds.name = "grid_" + std::to_string(height) + "x" + std::to_string(width);
  ds.kind = DataKind::grid;
  ds.T = cfg.T;
  ds.N = height * width;
  ds.C = 1;
  ds.grid = GridSpec{height, width};
  ds.values.resize(ds.T * ds.N);

  Rng noise = rng.fork(1);
  const double inv2s2 = 1.0 / (2.0 * cfg.hotspot_sigma * cfg.hotspot_sigma);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    const double td = static_cast<double>(t);
    for (std::size_t h = 0; h < height; ++h) {
      for (std::size_t w = 0; w < width; ++w) {
        double v = base_value(cfg, profiles[h * width + w], td);
        for (const auto& hs : hotspots) {
          const double a = hs.angle0 + hs.direction * kTwoPi * td / static_cast<double>(cfg.period_daily);
          const double dy = static_cast<double>(h) - (hs.cx + hs.radius * std::cos(a));
          const double dx = static_cast<double>(w) - (hs.cy + hs.radius * std::sin(a));
          v += cfg.amplitude * cfg.hotspot_strength * std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
        ds.values[t * ds.N + h * width + w] = v;
      }
    }
  }
  finish_values(ds, cfg, profiles, noise);
  finalize(ds);
  return ds;
}

GraphTopology random_geometric_graph(std::size_t num_nodes, double avg_degree, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs(num_nodes), ys(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    xs[i] = rng.uniform();
    ys[i] = rng.uniform();
  }
  auto dist2 = [&](std::size_t a, std::size_t b) {
    const double dx = xs[a] - xs[b], dy = ys[a] - ys[b];
    return dx * dx + dy * dy;
  };
  const double r2 = avg_degree / (std::numbers::pi * static_cast<double>(num_nodes - 1));

  GraphTopology topo{num_nodes, {}};
  UnionFind uf(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t j = i + 1; j < num_nodes; ++j) {
      if (dist2(i, j) <= r2) {
        topo.edges.emplace_back(i, j);
        uf.unite(i, j);
      }
    }
  }
  // Spanning-tree patch-up.
  for (;;) {
    std::size_t outside = 0;
    for (std::size_t i = 0; i < num_nodes; ++i) outside += uf.find(i) != 0;
    if (outside == 0) break;
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < num_nodes; ++i) {
      if (uf.find(i) != 0) continue;
      for (std::size_t j = 0; j < num_nodes; ++j) {
        if (uf.find(j) == 0) continue;
        const double d = dist2(i, j);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    topo.edges.emplace_back(std::min(bi, bj), std::max(bi, bj));
    uf.unite(bi, bj);
  }
  return topo;
}

std::vector<double> diffuse_step(const std::vector<std::vector<std::size_t>>& adjacency,
                                 double lambda, std::span<const double> x) {
  const std::size_t n = adjacency.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = adjacency[i].empty() ? x[i] : (1.0 - lambda) * x[i];
  for (std::size_t j = 0; j < n; ++j) {
    if (adjacency[j].empty()) continue;
    const double share = lambda * x[j] / static_cast<double>(adjacency[j].size());
    for (std::size_t i : adjacency[j]) out[i] += share;
  }
  return out;
}

FlowDataset gen_graph(const SynthConfig& cfg, std::size_t num_nodes, double avg_degree) {
  cfg.validate();
  require(num_nodes >= 4, ErrorCode::invalid_argument, "graph needs at least 4 nodes");
  require(avg_degree >= 2.0 && avg_degree < static_cast<double>(num_nodes),
          ErrorCode::invalid_argument, "avg_degree must lie in [2, num_nodes)");
  Rng rng(cfg.seed);
  GraphTopology topo = random_geometric_graph(num_nodes, avg_degree, rng.next_u64());
  const auto adj = topo.adjacency();

  // Smooth fields keyed by the spectral-free proxy of node index order.
  std::vector<Profile> profiles(num_nodes);
  const double off = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const double u = rng.uniform();
    profiles[i] = {1.0 + cfg.spatial_variation * (u - 0.5),
                   cfg.phase_spread * std::sin(off + kTwoPi * static_cast<double>(i) /
                                                         static_cast<double>(num_nodes))};
  }
  // Neighbouring nodes share part of their phase so the spatial field is smooth.
  if (cfg.phase_spread > 0.0) {
    std::vector<double> smoothed(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) {
      double s = profiles[i].phase;
      for (std::size_t j : adj[i]) s += profiles[j].phase;
      smoothed[i] = s / static_cast<double>(adj[i].size() + 1);
    }
    for (std::size_t i = 0; i < num_nodes; ++i) profiles[i].phase = smoothed[i];
  }

  // Hotspots walk a fixed route during the first half of every day.
  std::vector<std::vector<std::size_t>> routes;
  const std::size_t route_len = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround(cfg.hotspot_speed * cfg.period_daily / 2.0)));
  for (std::size_t k = 0; k < cfg.hotspot_count; ++k) {
    std::vector<std::size_t> route{static_cast<std::size_t>(rng.below(num_nodes))};
    while (route.size() < route_len) {
      const auto& nb = adj[route.back()];
      if (nb.empty()) break;
      route.push_back(nb[rng.below(nb.size())]);
    }
    routes.push_back(std::move(route));
  }

  auto sources = [&](long long t, std::vector<double>& s) {
    const double td = static_cast<double>(t);
    for (std::size_t i = 0; i < num_nodes; ++i) s[i] = base_value(cfg, profiles[i], td);
    const long long pd = static_cast<long long>(cfg.period_daily);
    const long long tau = ((t % pd) + pd) % pd;
    if (2 * tau < pd) {
      for (const auto& route : routes) {
        const auto pos = std::min<std::size_t>(
            route.size() - 1, static_cast<std::size_t>(static_cast<double>(tau) * cfg.hotspot_speed));
        s[route[pos]] += cfg.amplitude * cfg.hotspot_strength;
      }
    }
  };

  FlowDataset ds;
  ds.name = "graph_" + std::to_string(num_nodes);
  ds.kind = DataKind::graph;
  ds.T = cfg.T;
  ds.N = num_nodes;
  ds.C = 1;
  ds.values.resize(ds.T * ds.N);

  Rng noise = rng.fork(1);
  std::vector<double> s_prev(num_nodes), s_next(num_nodes);
  const long long t0 = -static_cast<long long>(cfg.burn_in);
  sources(t0, s_prev);
  std::vector<double> x = s_prev;
  for (long long t = t0; t < static_cast<long long>(cfg.T); ++t) {
    if (t >= 0) std::copy(x.begin(), x.end(), ds.values.begin() + t * static_cast<long long>(num_nodes));
    sources(t + 1, s_next);
    if (cfg.diffusion == 0.0) {
      x = s_next;
    } else {
      // Source increments are injected and then spread one hop per step.
      x = diffuse_step(adj, cfg.diffusion, x);
      for (std::size_t i = 0; i < num_nodes; ++i) x[i] += s_next[i] - s_prev[i];
    }
    std::swap(s_prev, s_next);
  }
  ds.topology = std::move(topo);
  finish_values(ds, cfg, profiles, noise);
  finalize(ds);
  return ds;
}

std::vector<FlowDataset> gen_suite(std::uint64_t seed) {
  Rng rng(seed);
  auto base = [&](double amplitude, std::size_t hotspots, double noise) {
    SynthConfig c;
    c.seed = rng.next_u64();
    c.T = 2000;
    c.period_daily = 24;
    c.period_weekly = 168;
    c.amplitude = amplitude;
    c.hotspot_count = hotspots;
    c.hotspot_speed = 0.25;
    c.noise_std = noise;
    c.weekly_weight = kSuiteWeeklyWeight;
    c.phase_spread = 1.2;
    c.spatial_variation = 0.6;
    return c;
  };

  std::vector<FlowDataset> suite;
  suite.push_back(gen_grid(base(100.0, 2, 4.0), 8, 8));
  suite.push_back(gen_grid(base(60.0, 3, 2.5), 10, 12));
  {
    SynthConfig c = base(40.0, 2, 1.5);
    c.diffusion = 0.3;
    suite.push_back(gen_graph(c, 60, 4.0));
  }
  {
    SynthConfig c = base(50.0, 3, 2.0);
    c.diffusion = 0.3;
    suite.push_back(gen_graph(c, 120, 4.0));
  }
  {
    FlowDataset target = gen_grid(base(80.0, 2, 3.0), 8, 10);
    target.name = std::string(kTargetMarker) + "_" + target.name;
    suite.push_back(std::move(target));
  }
  return suite;
}

bool is_target(const FlowDataset& ds) { return ds.name.find(kTargetMarker) != std::string::npos; }

}  // namespace uniflow::synth
