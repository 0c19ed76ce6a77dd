#include "uniflow/patching.hpp"

#include <cmath>
#include <string>

#include "uniflow/error.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::patching {

PatchConfig PatchConfig::desk() {
  PatchConfig c;
  c.p_s = 2;
  c.d_model = 32;
  return c;
}

void PatchConfig::validate() const {
  require(p_t >= 1, ErrorCode::invalid_argument, "p_t must be positive");
  require(p_s >= 1, ErrorCode::invalid_argument, "p_s must be positive");
  require(num_subgraphs >= 1, ErrorCode::invalid_argument, "num_subgraphs must be positive");
  require(d_model >= 8, ErrorCode::invalid_argument, "d_model must be at least 8");
}

void PatchConfig::check_task(const TaskSpec& task) const {
  require(task.history_len % p_t == 0 && task.horizon_len % p_t == 0, ErrorCode::invalid_argument,
          "p_t=" + std::to_string(p_t) + " must divide both H=" + std::to_string(task.history_len) +
              " and P=" + std::to_string(task.horizon_len));
}

void PatchConfig::check_grid(const GridSpec& grid) const {
  require(grid.height % p_s == 0 && grid.width % p_s == 0, ErrorCode::invalid_argument,
          "p_s=" + std::to_string(p_s) + " must divide the grid " + std::to_string(grid.height) + "x" +
              std::to_string(grid.width));
}

PatchLayout PatchLayout::for_grid(const TaskSpec& task, const GridSpec& grid, const PatchConfig& cfg) {
  cfg.check_task(task);
  cfg.check_grid(grid);
  return PatchLayout{task.window_len() / cfg.p_t, (grid.height / cfg.p_s) * (grid.width / cfg.p_s),
                     task.history_len / cfg.p_t};
}

PatchLayout PatchLayout::for_graph(const TaskSpec& task, const PatchConfig& cfg) {
  cfg.check_task(task);
  return PatchLayout{task.window_len() / cfg.p_t, cfg.num_subgraphs, task.history_len / cfg.p_t};
}

PatchParams PatchParams::create(nn::ParamStore& store, const PatchConfig& cfg, Rng& rng) {
  const auto d = static_cast<Index>(cfg.d_model);
  const auto pt = static_cast<Index>(cfg.p_t);
  const auto grid_in = static_cast<Index>(cfg.p_t * cfg.p_s * cfg.p_s);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  auto fan = [](Index n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  PatchParams p{};
  p.grid_weight = store.add("patch.grid.weight", nn::normal_matrix(grid_in, d, fan(grid_in), rng));
  p.grid_bias = store.add("patch.grid.bias", Matrix::Zero(1, d));
  p.graph_weight = store.add("patch.graph.weight", nn::normal_matrix(pt, d, fan(pt), rng));
  p.graph_bias = store.add("patch.graph.bias", Matrix::Zero(1, d));
  p.grid_head_weight = store.add("head.grid.weight", nn::normal_matrix(d, grid_in, sd, rng));
  p.grid_head_bias = store.add("head.grid.bias", Matrix::Zero(1, grid_in));
  p.graph_head_weight = store.add("head.graph.weight", nn::normal_matrix(d, pt, sd, rng));
  p.graph_head_bias = store.add("head.graph.bias", Matrix::Zero(1, pt));
  p.corr_w1 = store.add("head.graph.corr.w1", nn::normal_matrix(d, d, sd, rng));
  p.corr_b1 = store.add("head.graph.corr.b1", Matrix::Zero(1, d));
  p.corr_w2 = store.add("head.graph.corr.w2", nn::normal_matrix(d, pt, 0.1 * sd, rng));
  p.corr_b2 = store.add("head.graph.corr.b2", Matrix::Zero(1, pt));
  return p;
}

PatchParams PatchParams::resolve(const nn::ParamStore& s) {
  return PatchParams{s.index("patch.grid.weight"),        s.index("patch.grid.bias"),
                     s.index("patch.graph.weight"),       s.index("patch.graph.bias"),
                     s.index("head.grid.weight"),         s.index("head.grid.bias"),
                     s.index("head.graph.weight"),        s.index("head.graph.bias"),
                     s.index("head.graph.corr.w1"),       s.index("head.graph.corr.b1"),
                     s.index("head.graph.corr.w2"),       s.index("head.graph.corr.b2")};
}

namespace {

template <typename Fn>
void for_each_grid_entry(std::size_t steps, const GridSpec& grid, const PatchConfig& cfg, Fn&& fn) {
  const std::size_t ps = cfg.p_s, pt = cfg.p_t;
  const std::size_t bh = grid.height / ps, bw = grid.width / ps;
  const std::size_t blocks = steps / pt;
  const std::size_t k = pt * ps * ps;
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < bh; ++i)
      for (std::size_t j = 0; j < bw; ++j) {
        const std::size_t row = (b * bh + i) * bw + j;
        for (std::size_t dt = 0; dt < pt; ++dt)
          for (std::size_t dh = 0; dh < ps; ++dh)
            for (std::size_t dw = 0; dw < ps; ++dw) {
              const std::size_t col = (dt * ps + dh) * ps + dw;
              const std::size_t t = b * pt + dt;
              const std::size_t n = (i * ps + dh) * grid.width + j * ps + dw;
              fn(row * k + col, t * grid.height * grid.width + n);
            }
      }
}

ad::Var linear(nn::Binder& bind, ad::Var x, std::size_t w, std::size_t b) {
  return ad::add_row(ad::matmul(x, bind(w)), bind(b));
}

}  // namespace

Matrix grid_patch_rows(const Matrix& window, const GridSpec& grid, const PatchConfig& cfg) {
  require(window.cols() == static_cast<Index>(grid.height * grid.width), ErrorCode::shape_mismatch,
          "window width does not match the grid");
  require(window.rows() % static_cast<Index>(cfg.p_t) == 0, ErrorCode::invalid_argument,
          "window length not divisible by p_t");
  cfg.check_grid(grid);
  const auto steps = static_cast<std::size_t>(window.rows());
  const std::size_t k = cfg.p_t * cfg.p_s * cfg.p_s;
  const std::size_t rows = steps * grid.height * grid.width / k;
  Matrix out(static_cast<Index>(rows), static_cast<Index>(k));
  const double* src = window.data();
  double* dst = out.data();
  for_each_grid_entry(steps, grid, cfg, [&](std::size_t patch_flat, std::size_t window_flat) {
    dst[patch_flat] = src[window_flat];
  });
  return out;
}

std::vector<Index> grid_scatter_map(std::size_t steps, const GridSpec& grid, const PatchConfig& cfg) {
  std::vector<Index> map(steps * grid.height * grid.width);
  for_each_grid_entry(steps, grid, cfg, [&](std::size_t patch_flat, std::size_t window_flat) {
    map[patch_flat] = static_cast<Index>(window_flat);
  });
  return map;
}

PatchSequence patch_grid(nn::Binder& bind, const PatchParams& p, const Matrix& window, const GridSpec& grid,
                         const PatchConfig& cfg, const TaskSpec& task) {
  require(window.rows() == static_cast<Index>(task.window_len()), ErrorCode::shape_mismatch,
          "window length differs from H+P");
  PatchLayout layout = PatchLayout::for_grid(task, grid, cfg);
  ad::Var rows = bind.tape().constant(grid_patch_rows(window, grid, cfg));
  return PatchSequence{linear(bind, rows, p.grid_weight, p.grid_bias), layout, std::nullopt};
}

PatchSequence patch_graph(nn::Binder& bind, const PatchParams& p, const Matrix& window,
                          const partition::Partition& part, const PatchConfig& cfg, const TaskSpec& task) {
  require(window.rows() == static_cast<Index>(task.window_len()), ErrorCode::shape_mismatch,
          "window length differs from H+P");
  require(part.k == cfg.num_subgraphs, ErrorCode::invalid_argument,
          "partition has " + std::to_string(part.k) + " parts, config expects " +
              std::to_string(cfg.num_subgraphs));
  require(part.assignment.size() == static_cast<std::size_t>(window.cols()), ErrorCode::shape_mismatch,
          "partition does not match the number of nodes");
  PatchLayout layout = PatchLayout::for_graph(task, cfg);
  const auto n = static_cast<std::size_t>(window.cols());
  const std::size_t pt = cfg.p_t;

  Matrix node_blocks(static_cast<Index>(layout.blocks * n), static_cast<Index>(pt));
  for (std::size_t b = 0; b < layout.blocks; ++b)
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t dt = 0; dt < pt; ++dt)
        node_blocks(static_cast<Index>(b * n + v), static_cast<Index>(dt)) =
            window(static_cast<Index>(b * pt + dt), static_cast<Index>(v));
  ad::Var features = linear(bind, bind.tape().constant(std::move(node_blocks)), p.graph_weight, p.graph_bias);

  std::vector<std::vector<Index>> groups(layout.length());
  for (std::size_t b = 0; b < layout.blocks; ++b)
    for (std::size_t v = 0; v < n; ++v)
      groups[layout.index(b, part.assignment[v])].push_back(static_cast<Index>(b * n + v));
  return PatchSequence{ad::pool_rows(features, groups), layout, features};
}

std::pair<ad::Var, std::vector<std::size_t>> mask_history(const PatchSequence& s) {
  std::vector<std::size_t> future;
  for (std::size_t i = s.layout.history_length(); i < s.layout.length(); ++i) future.push_back(i);
  ad::Var history = s.layout.history_length() == s.layout.length()
                        ? s.embeddings
                        : ad::slice_rows(s.embeddings, 0, static_cast<Index>(s.layout.history_length()));
  return {history, std::move(future)};
}

ad::Var unpatch_grid(nn::Binder& bind, const PatchParams& p, ad::Var decoded, const PatchLayout& layout,
                     const GridSpec& grid, const PatchConfig& cfg) {
  require(decoded.rows() == static_cast<Index>(layout.length()), ErrorCode::shape_mismatch,
          "decoder output rows differ from layout length");
  const std::size_t steps = layout.blocks * cfg.p_t;
  ad::Var patches = linear(bind, decoded, p.grid_head_weight, p.grid_head_bias);
  const auto map = grid_scatter_map(steps, grid, cfg);
  return ad::scatter_flat(patches, map, static_cast<Index>(steps), static_cast<Index>(grid.height * grid.width));
}

ad::Var unpatch_graph(nn::Binder& bind, const PatchParams& p, ad::Var decoded, ad::Var skip_features,
                      const partition::Partition& part, const PatchLayout& layout, const PatchConfig& cfg) {
  require(decoded.rows() == static_cast<Index>(layout.length()), ErrorCode::shape_mismatch,
          "decoder output rows differ from layout length");
  const std::size_t n = part.assignment.size();
  require(skip_features.rows() == static_cast<Index>(layout.blocks * n), ErrorCode::shape_mismatch,
          "skip features do not match blocks x nodes");
  const std::size_t last_history = layout.history_blocks == 0 ? 0 : layout.history_blocks - 1;

  std::vector<Index> token_rows(layout.blocks * n), skip_rows(layout.blocks * n);
  for (std::size_t b = 0; b < layout.blocks; ++b) {
    const std::size_t src_block = std::min(b, last_history);
    for (std::size_t v = 0; v < n; ++v) {
      token_rows[b * n + v] = static_cast<Index>(layout.index(b, part.assignment[v]));
      skip_rows[b * n + v] = static_cast<Index>(src_block * n + v);
    }
  }
  ad::Var subgraph_pred = linear(bind, decoded, p.graph_head_weight, p.graph_head_bias);  // L x p_t
  ad::Var base = ad::gather_rows(subgraph_pred, token_rows);
  ad::Var corr_in = ad::add(ad::gather_rows(skip_features, skip_rows), ad::gather_rows(decoded, token_rows));
  ad::Var corr = linear(bind, ad::gelu(linear(bind, corr_in, p.corr_w1, p.corr_b1)), p.corr_w2, p.corr_b2);
  ad::Var node_out = ad::add(base, corr);  // (blocks * n) x p_t, row b * n + v

  const std::size_t pt = cfg.p_t;
  std::vector<Index> map(layout.blocks * n * pt);
  for (std::size_t b = 0; b < layout.blocks; ++b)
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t dt = 0; dt < pt; ++dt)
        map[(b * n + v) * pt + dt] = static_cast<Index>((b * pt + dt) * n + v);
  return ad::scatter_flat(node_out, map, static_cast<Index>(layout.blocks * pt), static_cast<Index>(n));
}

}  // namespace uniflow::patching
