#include "uniflow/memory.hpp"

#include <cmath>

#include "uniflow/error.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::mra {

using ad::Index;

const char* to_string(BankKind kind) noexcept {
  switch (kind) {
    case BankKind::time: return "time";
    case BankKind::freq: return "freq";
    case BankKind::time_spatial: return "time_spatial";
    case BankKind::freq_spatial: return "freq_spatial";
  }
  return "unknown";
}

BankKind bank_from_index(std::size_t i) {
  require(i < kBankCount, ErrorCode::out_of_range, "bank index out of range");
  return static_cast<BankKind>(i);
}

MraParams MraParams::create(nn::ParamStore& store, std::size_t d_model, std::size_t memory_units, Rng& rng) {
  require(memory_units >= 1, ErrorCode::invalid_argument, "memory needs at least one unit");
  const auto d = static_cast<Index>(d_model);
  const auto n = static_cast<Index>(memory_units);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  MraParams p{};
  p.wq = store.add("mra.query_attn.wq", nn::normal_matrix(d, d, sd, rng));
  p.bq = store.add("mra.query_attn.bq", Matrix::Zero(1, d));
  p.wk = store.add("mra.query_attn.wk", nn::normal_matrix(d, d, sd, rng));
  p.bk = store.add("mra.query_attn.bk", Matrix::Zero(1, d));
  p.wv = store.add("mra.query_attn.wv", nn::normal_matrix(d, d, sd, rng));
  p.bv = store.add("mra.query_attn.bv", Matrix::Zero(1, d));
  p.wo = store.add("mra.query_attn.wo", nn::normal_matrix(d, d, sd, rng));
  p.bo = store.add("mra.query_attn.bo", Matrix::Zero(1, d));
  p.freq_w = store.add("mra.freq_proj.weight", nn::normal_matrix(d, d, sd, rng));
  p.freq_b = store.add("mra.freq_proj.bias", Matrix::Zero(1, d));
  p.gcn_time = store.add("mra.gcn_time.weight", nn::normal_matrix(d, d, sd, rng));
  p.gcn_freq = store.add("mra.gcn_freq.weight", nn::normal_matrix(d, d, sd, rng));
  for (std::size_t b = 0; b < kBankCount; ++b) {
    const std::string base = std::string("mra.") + to_string(bank_from_index(b));
    p.keys[b] = store.add(base + ".keys", nn::normal_matrix(n, d, sd, rng));
    p.values[b] = store.add(base + ".values", nn::normal_matrix(n, d, sd, rng));
  }
  return p;
}

MraParams MraParams::resolve(const nn::ParamStore& s) {
  MraParams p{};
  p.wq = s.index("mra.query_attn.wq");
  p.bq = s.index("mra.query_attn.bq");
  p.wk = s.index("mra.query_attn.wk");
  p.bk = s.index("mra.query_attn.bk");
  p.wv = s.index("mra.query_attn.wv");
  p.bv = s.index("mra.query_attn.bv");
  p.wo = s.index("mra.query_attn.wo");
  p.bo = s.index("mra.query_attn.bo");
  p.freq_w = s.index("mra.freq_proj.weight");
  p.freq_b = s.index("mra.freq_proj.bias");
  p.gcn_time = s.index("mra.gcn_time.weight");
  p.gcn_freq = s.index("mra.gcn_freq.weight");
  for (std::size_t b = 0; b < kBankCount; ++b) {
    const std::string base = std::string("mra.") + to_string(bank_from_index(b));
    p.keys[b] = s.index(base + ".keys");
    p.values[b] = s.index(base + ".values");
  }
  return p;
}

ad::Var QueryBundle::operator[](BankKind k) const {
  switch (k) {
    case BankKind::time: return time;
    case BankKind::freq: return freq;
    case BankKind::time_spatial: return time_spatial;
    case BankKind::freq_spatial: return freq_spatial;
  }
  return {};
}

ad::Var PromptBundle::summed() const {
  ad::Var total;
  for (std::size_t b = 0; b < kBankCount; ++b) {
    if (!enabled.enabled[b]) continue;
    total = total.valid() ? ad::add(total, banks[b].prompt) : banks[b].prompt;
  }
  return total;
}

namespace {
ad::Var linear(nn::Binder& bind, ad::Var x, std::size_t w, std::size_t b) {
  return ad::add_row(ad::matmul(x, bind(w)), bind(b));
}
}  // namespace

std::pair<QueryBundle, AdaptiveAdjacency> formulate_queries(nn::Binder& bind, const MraParams& p, ad::Var s_h,
                                                            const patching::PatchLayout& layout, int heads) {
  require(s_h.rows() >= 1, ErrorCode::invalid_argument, "query formulation needs at least one history patch");
  require(s_h.rows() == static_cast<Index>(layout.history_length()), ErrorCode::shape_mismatch,
          "history rows disagree with layout");
  QueryBundle q;
  AdaptiveAdjacency adj;

  ad::Var attn = ad::multihead_attention(linear(bind, s_h, p.wq, p.bq), linear(bind, s_h, p.wk, p.bk),
                                         linear(bind, s_h, p.wv, p.bv), heads);
  q.time = linear(bind, attn, p.wo, p.bo);

  ad::Var spectrum = ad::fft_magnitude(s_h, static_cast<Index>(layout.history_blocks),
                                       static_cast<Index>(layout.units));
  q.freq = linear(bind, spectrum, p.freq_w, p.freq_b);

  adj.time = ad::softmax_rows(ad::relu(ad::matmul_nt(q.time, q.time)));
  adj.freq = ad::softmax_rows(ad::relu(ad::matmul_nt(q.freq, q.freq)));
  q.time_spatial = ad::relu(ad::matmul(ad::matmul(adj.time, q.time), bind(p.gcn_time)));
  q.freq_spatial = ad::relu(ad::matmul(ad::matmul(adj.freq, q.freq), bind(p.gcn_freq)));
  return {q, adj};
}

Retrieval retrieve(ad::Var query, ad::Var keys, ad::Var values) {
  require(query.cols() == keys.cols() && keys.rows() == values.rows() && keys.cols() == values.cols(),
          ErrorCode::shape_mismatch, "query/memory dimensions disagree");
  ad::Var alpha = ad::softmax_rows(ad::matmul_nt(query, keys));
  return Retrieval{ad::matmul(alpha, values), alpha};
}

PromptBundle retrieve_all(nn::Binder& bind, const MraParams& p, const QueryBundle& q, const BankSet& enabled) {
  PromptBundle out;
  out.enabled = enabled;
  for (std::size_t b = 0; b < kBankCount; ++b)
    out.banks[b] = retrieve(q[bank_from_index(b)], bind(p.keys[b]), bind(p.values[b]));
  return out;
}

ad::Var augment(ad::Var z_d, const PromptBundle& prompts, const patching::PatchLayout& layout) {
  require(z_d.rows() == static_cast<Index>(layout.length()), ErrorCode::shape_mismatch,
          "decoder input rows differ from layout length");
  ad::Var sum = prompts.summed();
  if (!sum.valid()) return z_d;
  require(sum.rows() == static_cast<Index>(layout.history_length()), ErrorCode::shape_mismatch,
          "prompts are not aligned with history positions");
  const auto future = static_cast<Index>(layout.length() - layout.history_length());
  if (future == 0) return ad::add(z_d, sum);
  std::vector<std::vector<Index>> by_unit(layout.units);
  for (std::size_t i = 0; i < layout.history_length(); ++i) by_unit[layout.unit_of(i)].push_back(static_cast<Index>(i));
  std::vector<Index> future_units;
  for (std::size_t i = layout.history_length(); i < layout.length(); ++i)
    future_units.push_back(static_cast<Index>(layout.unit_of(i)));
  const ad::Var parts[] = {sum, ad::gather_rows(ad::pool_rows(sum, by_unit), future_units)};
  return ad::add(z_d, ad::concat_rows(parts));
}

Eigen::VectorXd signature(const PromptBundle& prompts) {
  const Index units = prompts.banks[0].weights.cols();
  Eigen::VectorXd sig(units * static_cast<Index>(kBankCount));
  for (std::size_t b = 0; b < kBankCount; ++b) {
    const Matrix& alpha = prompts.banks[b].weights.value();
    sig.segment(static_cast<Index>(b) * units, units) = alpha.colwise().mean().transpose();
  }
  return sig;
}

}  // namespace uniflow::mra
