#include "uniflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uniflow/error.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::model {

using ad::Index;

void ModelConfig::validate() const {
  require(d_model >= 8, ErrorCode::invalid_argument, "d_model must be at least 8");
  require(heads >= 1 && d_model % heads == 0, ErrorCode::invalid_argument,
          "heads=" + std::to_string(heads) + " must divide d_model=" + std::to_string(d_model));
  require(enc_layers >= 1, ErrorCode::invalid_argument, "need at least one encoder layer");
  require(ff_mult >= 1, ErrorCode::invalid_argument, "ff_mult must be positive");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::invalid_argument, "dropout must lie in [0, 1)");
  require(memory_units >= 1, ErrorCode::invalid_argument, "memory_units must be positive");
  require(max_temporal_blocks >= 1 && max_spatial_units >= 1, ErrorCode::invalid_argument,
          "positional tables must be non-empty");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.d_model = 32;
  c.heads = 4;
  c.dropout = 0.0;
  c.memory_units = 64;
  return c;
}

bool ModelState::was_trained_on(const std::string& dataset) const {
  return std::find(trained_on.begin(), trained_on.end(), dataset) != trained_on.end();
}

namespace {

BlockParams create_block(nn::ParamStore& s, const std::string& prefix, std::size_t d_model, std::size_t ff_mult,
                         Rng& rng) {
  const auto d = static_cast<Index>(d_model);
  const auto f = static_cast<Index>(d_model * ff_mult);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  BlockParams b{};
  b.ln1_gain = s.add(prefix + ".ln1.gain", Matrix::Ones(1, d));
  b.ln1_bias = s.add(prefix + ".ln1.bias", Matrix::Zero(1, d));
  b.wq = s.add(prefix + ".attn.wq", nn::normal_matrix(d, d, sd, rng));
  b.bq = s.add(prefix + ".attn.bq", Matrix::Zero(1, d));
  b.wk = s.add(prefix + ".attn.wk", nn::normal_matrix(d, d, sd, rng));
  b.bk = s.add(prefix + ".attn.bk", Matrix::Zero(1, d));
  b.wv = s.add(prefix + ".attn.wv", nn::normal_matrix(d, d, sd, rng));
  b.bv = s.add(prefix + ".attn.bv", Matrix::Zero(1, d));
  b.wo = s.add(prefix + ".attn.wo", nn::normal_matrix(d, d, sd, rng));
  b.bo = s.add(prefix + ".attn.bo", Matrix::Zero(1, d));
  b.ln2_gain = s.add(prefix + ".ln2.gain", Matrix::Ones(1, d));
  b.ln2_bias = s.add(prefix + ".ln2.bias", Matrix::Zero(1, d));
  b.w1 = s.add(prefix + ".ff.w1", nn::normal_matrix(d, f, sd, rng));
  b.b1 = s.add(prefix + ".ff.b1", Matrix::Zero(1, f));
  b.w2 = s.add(prefix + ".ff.w2", nn::normal_matrix(f, d, sf, rng));
  b.b2 = s.add(prefix + ".ff.b2", Matrix::Zero(1, d));
  return b;
}

BlockParams resolve_block(const nn::ParamStore& s, const std::string& prefix) {
  BlockParams b{};
  b.ln1_gain = s.index(prefix + ".ln1.gain");
  b.ln1_bias = s.index(prefix + ".ln1.bias");
  b.wq = s.index(prefix + ".attn.wq");
  b.bq = s.index(prefix + ".attn.bq");
  b.wk = s.index(prefix + ".attn.wk");
  b.bk = s.index(prefix + ".attn.bk");
  b.wv = s.index(prefix + ".attn.wv");
  b.bv = s.index(prefix + ".attn.bv");
  b.wo = s.index(prefix + ".attn.wo");
  b.bo = s.index(prefix + ".attn.bo");
  b.ln2_gain = s.index(prefix + ".ln2.gain");
  b.ln2_bias = s.index(prefix + ".ln2.bias");
  b.w1 = s.index(prefix + ".ff.w1");
  b.b1 = s.index(prefix + ".ff.b1");
  b.w2 = s.index(prefix + ".ff.w2");
  b.b2 = s.index(prefix + ".ff.b2");
  return b;
}

ad::Var linear(nn::Binder& bind, ad::Var x, std::size_t w, std::size_t b) {
  return ad::add_row(ad::matmul(x, bind(w)), bind(b));
}

}  // namespace

ModelState init_model(const PatchConfig& patch, const ModelConfig& config, const TaskSpec& task,
                      std::uint64_t seed) {
  patch.validate();
  config.validate();
  patch.check_task(task);
  require(patch.d_model == config.d_model, ErrorCode::invalid_argument,
          "patch d_model and model d_model differ");
  require(task.window_len() / patch.p_t <= config.max_temporal_blocks, ErrorCode::invalid_argument,
          "task needs more temporal blocks than the positional table holds");

  ModelState st;
  st.patch = patch;
  st.config = config;
  st.task = task;
  Rng rng(seed);
  nn::ParamStore& s = st.params;
  const auto d = static_cast<Index>(config.d_model);

  patching::PatchParams::create(s, patch, rng);
  s.add("pos.temporal", nn::normal_matrix(static_cast<Index>(config.max_temporal_blocks), d, 0.1, rng));
  s.add("pos.spatial", nn::normal_matrix(static_cast<Index>(config.max_spatial_units), d, 0.1, rng));
  s.add("pos.kind", nn::normal_matrix(2, d, 0.1, rng));
  s.add("mask_token", nn::normal_matrix(1, d, 0.1, rng));
  for (std::size_t l = 0; l < config.enc_layers; ++l)
    create_block(s, "encoder." + std::to_string(l), config.d_model, config.ff_mult, rng);
  s.add("encoder.norm.gain", Matrix::Ones(1, d));
  s.add("encoder.norm.bias", Matrix::Zero(1, d));
  for (std::size_t l = 0; l < config.dec_layers; ++l)
    create_block(s, "decoder." + std::to_string(l), config.d_model, config.ff_mult, rng);
  mra::MraParams::create(s, config.d_model, config.memory_units, rng);

  s.round_to_f32();
  st.index = resolve_params(s, config);
  return st;
}

ModelParams resolve_params(const nn::ParamStore& s, const ModelConfig& config) {
  ModelParams p;
  p.patch = patching::PatchParams::resolve(s);
  p.pos_temporal = s.index("pos.temporal");
  p.pos_spatial = s.index("pos.spatial");
  p.pos_kind = s.index("pos.kind");
  p.mask_token = s.index("mask_token");
  for (std::size_t l = 0; l < config.enc_layers; ++l) p.encoder.push_back(resolve_block(s, "encoder." + std::to_string(l)));
  p.enc_norm_gain = s.index("encoder.norm.gain");
  p.enc_norm_bias = s.index("encoder.norm.bias");
  for (std::size_t l = 0; l < config.dec_layers; ++l) p.decoder.push_back(resolve_block(s, "decoder." + std::to_string(l)));
  p.mra = mra::MraParams::resolve(s);
  return p;
}

ad::Var positional_rows(nn::Binder& bind, const ModelState& state, const PatchLayout& layout, DataKind kind) {
  require(layout.blocks <= state.config.max_temporal_blocks, ErrorCode::out_of_range,
          std::to_string(layout.blocks) + " temporal blocks exceed the positional table (" +
              std::to_string(state.config.max_temporal_blocks) + ")");
  require(layout.units <= state.config.max_spatial_units, ErrorCode::out_of_range,
          std::to_string(layout.units) + " spatial units exceed the positional table (" +
              std::to_string(state.config.max_spatial_units) + ")");
  std::vector<Index> blocks(layout.length()), units(layout.length());
  for (std::size_t i = 0; i < layout.length(); ++i) {
    blocks[i] = static_cast<Index>(layout.block_of(i));
    units[i] = static_cast<Index>(layout.unit_of(i));
  }
  const Index kind_row = kind == DataKind::grid ? 0 : 1;
  const ModelParams& ix = state.index;
  ad::Var pos = ad::add(ad::gather_rows(bind(ix.pos_temporal), blocks), ad::gather_rows(bind(ix.pos_spatial), units));
  const Index one[] = {kind_row};
  return ad::add_row(pos, ad::gather_rows(bind(ix.pos_kind), one));
}

ad::Var transformer_block(nn::Binder& bind, const BlockParams& p, ad::Var x, int heads, double dropout, Rng* rng,
                          std::vector<Matrix>* attention) {
  ad::Var h = ad::layer_norm(x, bind(p.ln1_gain), bind(p.ln1_bias));
  ad::Var a = ad::multihead_attention(linear(bind, h, p.wq, p.bq), linear(bind, h, p.wk, p.bk),
                                      linear(bind, h, p.wv, p.bv), heads, attention);
  a = linear(bind, a, p.wo, p.bo);
  if (rng && dropout > 0.0) a = ad::dropout(a, dropout, *rng);
  x = ad::add(x, a);
  h = ad::layer_norm(x, bind(p.ln2_gain), bind(p.ln2_bias));
  ad::Var f = linear(bind, ad::gelu(linear(bind, h, p.w1, p.b1)), p.w2, p.b2);
  if (rng && dropout > 0.0) f = ad::dropout(f, dropout, *rng);
  return ad::add(x, f);
}

namespace {
Rng* dropout_rng(const ForwardOptions& opts, double p) {
  if (!opts.training || p <= 0.0) return nullptr;
  require(opts.rng != nullptr, ErrorCode::invalid_argument, "training with dropout needs an RNG");
  return opts.rng;
}
}  // namespace

ad::Var encode(nn::Binder& bind, const ModelState& state, ad::Var history, const ForwardOptions& opts,
               std::vector<Matrix>* attention) {
  require(history.rows() >= 1, ErrorCode::invalid_argument, "encoder input is empty");
  const int heads = static_cast<int>(state.config.heads);
  Rng* rng = dropout_rng(opts, state.config.dropout);
  ad::Var x = history;
  for (const auto& blk : state.index.encoder)
    x = transformer_block(bind, blk, x, heads, state.config.dropout, rng, attention);
  return ad::layer_norm(x, bind(state.index.enc_norm_gain), bind(state.index.enc_norm_bias));
}

ad::Var assemble_decoder_input(nn::Binder& bind, const ModelState& state, ad::Var encoded,
                               const PatchLayout& layout, DataKind kind, const mra::PromptBundle* prompts) {
  require(encoded.rows() == static_cast<Index>(layout.history_length()), ErrorCode::shape_mismatch,
          "encoder output is not aligned with history positions");
  const auto future = static_cast<Index>(layout.length() - layout.history_length());
  ad::Var z = encoded;
  if (future > 0) {
    ad::Var pos = positional_rows(bind, state, layout, kind);
    ad::Var masked = ad::add(ad::broadcast_rows(bind(state.index.mask_token), future),
                             ad::slice_rows(pos, static_cast<Index>(layout.history_length()), future));
    if (layout.history_length() == 0) {
      z = masked;
    } else {
      const ad::Var parts[] = {encoded, masked};
      z = ad::concat_rows(parts);
    }
  }
  if (prompts) z = mra::augment(z, *prompts, layout);
  return z;
}

ad::Var decode(nn::Binder& bind, const ModelState& state, ad::Var decoder_input, const ForwardOptions& opts,
               std::vector<Matrix>* attention) {
  const int heads = static_cast<int>(state.config.heads);
  Rng* rng = dropout_rng(opts, state.config.dropout);
  ad::Var x = decoder_input;
  for (const auto& blk : state.index.decoder)
    x = transformer_block(bind, blk, x, heads, state.config.dropout, rng, attention);
  return x;
}

ad::Var forward(nn::Binder& bind, const ModelState& state, const Matrix& window, const SampleContext& ctx,
                const ForwardOptions& opts, ForwardTrace* trace) {
  const ModelParams& ix = state.index;
  patching::PatchSequence seq;
  if (ctx.kind == DataKind::grid) {
    require(ctx.grid.has_value(), ErrorCode::invalid_argument, "grid sample without grid spec");
    seq = patching::patch_grid(bind, ix.patch, window, *ctx.grid, state.patch, state.task);
  } else {
    require(ctx.partition != nullptr, ErrorCode::invalid_argument, "graph sample without partition");
    seq = patching::patch_graph(bind, ix.patch, window, *ctx.partition, state.patch, state.task);
  }
  seq.embeddings = ad::add(seq.embeddings, positional_rows(bind, state, seq.layout, ctx.kind));
  auto [history, future_positions] = patching::mask_history(seq);

  std::vector<Matrix>* attn = trace ? &trace->attention : nullptr;
  ad::Var encoded = encode(bind, state, history, opts, attn);

  std::optional<mra::PromptBundle> prompts;
  if (state.config.banks.any()) {
    auto [queries, adjacency] =
        mra::formulate_queries(bind, ix.mra, history, seq.layout, static_cast<int>(state.config.heads));
    prompts = mra::retrieve_all(bind, ix.mra, queries, state.config.banks);
    if (trace) {
      trace->queries = queries;
      trace->adjacency = adjacency;
    }
  }
  ad::Var z_d = assemble_decoder_input(bind, state, encoded, seq.layout, ctx.kind, prompts ? &*prompts : nullptr);
  ad::Var y = decode(bind, state, z_d, opts, attn);

  ad::Var out = ctx.kind == DataKind::grid
                    ? patching::unpatch_grid(bind, ix.patch, y, seq.layout, *ctx.grid, state.patch)
                    : patching::unpatch_graph(bind, ix.patch, y, *seq.skip_features, *ctx.partition, seq.layout,
                                              state.patch);
  if (trace) {
    trace->layout = seq.layout;
    trace->patches = seq.embeddings;
    trace->history = history;
    trace->encoded = encoded;
    trace->prompts = prompts;
    trace->decoder_input = z_d;
    trace->decoded = y;
  }
  return out;
}

Matrix predict(const ModelState& state, const Matrix& window, const SampleContext& ctx) {
  ad::Tape tape(false);
  nn::Binder bind(tape, state.params);
  return forward(bind, state, window, ctx).value();
}

Eigen::VectorXd retrieval_signature(const ModelState& state, const Matrix& window, const SampleContext& ctx) {
  ad::Tape tape(false);
  nn::Binder bind(tape, state.params);
  ModelState probe_view = state;  // banks may be disabled for augmentation; signatures read all of them
  probe_view.config.banks = mra::BankSet::all();
  ForwardTrace trace;
  forward(bind, probe_view, window, ctx, {}, &trace);
  return mra::signature(*trace.prompts);
}

}  // namespace uniflow::model
