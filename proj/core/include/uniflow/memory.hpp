#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "uniflow/autograd.hpp"
#include "uniflow/params.hpp"
#include "uniflow/patching.hpp"

namespace uniflow::mra {

using ad::Matrix;

enum class BankKind : std::size_t { time = 0, freq = 1, time_spatial = 2, freq_spatial = 3 };
inline constexpr std::size_t kBankCount = 4;
const char* to_string(BankKind kind) noexcept;
BankKind bank_from_index(std::size_t i);

/// Which memory banks contribute prompts. All disabled is the "w/o MRA"
/// variant, in which query formulation is skipped altogether.
struct BankSet {
  std::array<bool, kBankCount> enabled{true, true, true, true};

  bool operator[](BankKind k) const { return enabled[static_cast<std::size_t>(k)]; }
  bool any() const { return enabled[0] || enabled[1] || enabled[2] || enabled[3]; }
  static BankSet all() { return {}; }
  static BankSet none() { return BankSet{{false, false, false, false}}; }
  static BankSet without(BankKind k) {
    BankSet s;
    s.enabled[static_cast<std::size_t>(k)] = false;
    return s;
  }
  friend bool operator==(const BankSet&, const BankSet&) = default;
};

/// Indices of the query-formulation weights and the four key/value banks.
struct MraParams {
  // Multi-head self-attention producing time-domain patterns.
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  // Re-projection of the magnitude spectrum.
  std::size_t freq_w, freq_b;
  // One graph-convolution weight per view.
  std::size_t gcn_time, gcn_freq;
  std::array<std::size_t, kBankCount> keys, values;

  /// Keys and values ~ N(0, 1/sqrt(D)).
  static MraParams create(nn::ParamStore& store, std::size_t d_model, std::size_t memory_units, Rng& rng);
  static MraParams resolve(const nn::ParamStore& store);
};

struct QueryBundle {
  ad::Var time, freq, time_spatial, freq_spatial;

  ad::Var operator[](BankKind k) const;
};

/// Row-stochastic patch-to-patch similarity graphs.
struct AdaptiveAdjacency {
  ad::Var time, freq;
};

struct Retrieval {
  ad::Var prompt;   // L_h x D
  ad::Var weights;  // L_h x N_mem (alpha)
};

struct PromptBundle {
  std::array<Retrieval, kBankCount> banks;
  BankSet enabled;

  /// Sum of the enabled prompts (L_h x D); invalid Var when none is enabled.
  ad::Var summed() const;
};

/// Time-domain queries by self-attention over S_h, frequency-domain queries
/// from the magnitude spectrum along temporal blocks, and the two spatial
/// views by one graph convolution over the adaptive adjacency
///   A = softmax(ReLU(E E^T)),  E_s = ReLU(A E W).
std::pair<QueryBundle, AdaptiveAdjacency> formulate_queries(nn::Binder& bind, const MraParams& p, ad::Var s_h,
                                                            const patching::PatchLayout& layout, int heads);

/// alpha = softmax(Q K^T) row-wise, prompt = alpha V.
Retrieval retrieve(ad::Var query, ad::Var keys, ad::Var values);

PromptBundle retrieve_all(nn::Binder& bind, const MraParams& p, const QueryBundle& q, const BankSet& enabled);

/// Adds the summed prompt to every history row of z_d. A future row of
/// spatial unit s receives the mean summed prompt over the history rows of
/// unit s. Identity when no bank is enabled.
ad::Var augment(ad::Var z_d, const PromptBundle& prompts, const patching::PatchLayout& layout);

/// Per-bank alpha averaged over history rows, concatenated in bank order.
Eigen::VectorXd signature(const PromptBundle& prompts);

}  // namespace uniflow::mra
