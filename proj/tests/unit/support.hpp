#pragma once

#include <complex>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "uniflow/model.hpp"
#include "uniflow/rng.hpp"
#include "uniflow/synth.hpp"
#include "uniflow/train.hpp"

namespace uniflow::testing {

/// O(n^2) reference transform, X_k = sum_t x_t exp(-2 pi i k t / n).
inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k * t mod n first so the angle stays small and exact.
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("UNIFLOW_TEST_TMP");
  std::filesystem::path dir =
      (root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "uniflow-tests") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ad::Matrix random_matrix(ad::Index rows, ad::Index cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// H = 8, P = 4: three temporal blocks of p_t = 4, two of them history.
inline TaskSpec tiny_task() { return {8, 4}; }

inline patching::PatchConfig tiny_patch() {
  patching::PatchConfig p;
  p.p_t = 4;
  p.p_s = 2;
  p.d_model = 8;
  p.num_subgraphs = 2;
  return p;
}

/// D = 8, 2 heads, 1 + 1 layers, 8 memory units, no dropout.
inline model::ModelConfig tiny_model() {
  model::ModelConfig m;
  m.enc_layers = 1;
  m.dec_layers = 1;
  m.d_model = 8;
  m.heads = 2;
  m.ff_mult = 2;
  m.dropout = 0.0;
  m.memory_units = 8;
  return m;
}

inline synth::SynthConfig small_synth(std::uint64_t seed, std::size_t T = 240) {
  synth::SynthConfig c;
  c.seed = seed;
  c.T = T;
  c.amplitude = 10.0;
  c.hotspot_count = 1;
  c.noise_std = 0.5;
  c.weekly_weight = 0.2;
  c.phase_spread = 1.0;
  c.spatial_variation = 0.5;
  c.diffusion = 0.2;
  c.burn_in = 24;
  return c;
}

/// 4 x 4 grid, T = 240.
inline FlowDataset tiny_grid(std::uint64_t seed) { return synth::gen_grid(small_synth(seed), 4, 4); }

/// 8-node graph, T = 240.
inline FlowDataset tiny_graph(std::uint64_t seed) { return synth::gen_graph(small_synth(seed), 8, 3.0); }

}  // namespace uniflow::testing
