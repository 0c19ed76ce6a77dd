#include "uniflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uniflow/error.hpp"
#include "uniflow/parallel.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::train {

using ad::Index;

void TrainConfig::validate() const {
  require(lr_initial > lr_late && lr_late > 0.0, ErrorCode::invalid_argument,
          "learning rates must satisfy lr_initial > lr_late > 0");
  require(iterations_per_epoch >= 1, ErrorCode::invalid_argument, "iterations_per_epoch must be positive");
  require(!grad_clip || *grad_clip > 0.0, ErrorCode::invalid_argument, "grad_clip must be positive");
  require(val_windows >= 1, ErrorCode::invalid_argument, "val_windows must be positive");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.max_epochs = 3;
  c.lr_initial = 2e-3;
  c.lr_late = 5e-4;
  c.lr_switch_epoch = 2;
  c.iterations_per_epoch = 1200;
  c.val_windows = 48;
  return c;
}

TrainConfig TrainConfig::desk_finetune() {
  TrainConfig c = desk();
  c.lr_initial = 1e-3;
  c.lr_late = 2.5e-4;
  c.iterations_per_epoch = 600;
  return c;
}

model::SampleContext PreparedDataset::context() const {
  model::SampleContext ctx;
  ctx.kind = data.kind;
  ctx.grid = data.grid;
  ctx.partition = partition ? &*partition : nullptr;
  return ctx;
}

Matrix PreparedDataset::window(std::size_t start, std::size_t channel, const TaskSpec& task) const {
  const std::size_t rows = task.window_len();
  require(start + rows <= data.T, ErrorCode::out_of_range, "window runs past the end of " + data.name);
  require(channel < data.C, ErrorCode::out_of_range, "channel out of range");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(data.N));
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t n = 0; n < data.N; ++n) m(static_cast<Index>(t), static_cast<Index>(n)) = data.at(start + t, n, channel);
  return m;
}

PreparedDataset prepare(const FlowDataset& raw, const patching::PatchConfig& patch, const TaskSpec& task,
                        const std::optional<std::filesystem::path>& cache_dir) {
  raw.validate();
  PreparedDataset p;
  p.splits = split_622(raw.T);
  p.norm = fit_train_normalizer(raw);
  p.data = normalize(raw, p.norm);
  p.data.meta.normalizer = p.norm;
  p.train_starts = window_starts(p.splits.train, task);
  p.val_starts = window_starts(p.splits.val, task);
  p.test_starts = window_starts(p.splits.test, task);
  if (raw.kind == DataKind::graph) {
    require(raw.topology.has_value(), ErrorCode::invalid_argument, raw.name + " has no topology");
    require(patch.num_subgraphs <= raw.N, ErrorCode::invalid_argument,
            raw.name + ": more subgraphs than nodes");
    p.partition = cache_dir ? partition::load_or_partition(*cache_dir, *raw.topology, patch.num_subgraphs)
                            : partition::partition_kway(*raw.topology, patch.num_subgraphs);
  } else {
    require(raw.grid.has_value(), ErrorCode::invalid_argument, raw.name + " has no grid spec");
    patch.check_grid(*raw.grid);
  }
  return p;
}

double horizon_mse(const Matrix& pred, const Matrix& target, const TaskSpec& task) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorCode::shape_mismatch,
          "prediction and target shapes differ");
  require(pred.rows() == static_cast<Index>(task.window_len()), ErrorCode::shape_mismatch,
          "window length disagrees with the task");
  require(task.horizon_len > 0 && pred.cols() > 0, ErrorCode::invalid_argument, "empty horizon");
  const auto h = static_cast<Index>(task.history_len);
  const auto p = static_cast<Index>(task.horizon_len);
  return (pred.middleRows(h, p) - target.middleRows(h, p)).squaredNorm() / static_cast<double>(p * pred.cols());
}

BatchPlan make_batch_plan(std::span<const std::size_t> window_counts, std::size_t iterations) {
  require(!window_counts.empty(), ErrorCode::invalid_argument, "batch plan needs at least one dataset");
  require(iterations >= 1, ErrorCode::invalid_argument, "iterations per epoch must be positive");
  BatchPlan plan;
  plan.iterations = iterations;
  for (std::size_t n : window_counts) {
    const auto b = static_cast<std::size_t>(std::llround(static_cast<double>(n) / static_cast<double>(iterations)));
    plan.batch_sizes.push_back(std::max<std::size_t>(1, b));
  }
  return plan;
}

namespace {

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0x9e3779b97f4a7c15ULL * (b + 1));
  return splitmix64(s);
}

/// Denormalized squared-error sum over the horizon of one window.
double horizon_sq_error(const Matrix& pred, const Matrix& truth, const TaskSpec& task, double scale) {
  const auto h = static_cast<Index>(task.history_len);
  const auto p = static_cast<Index>(task.horizon_len);
  return (pred.middleRows(h, p) - truth.middleRows(h, p)).squaredNorm() * scale * scale;
}

std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (n == 0) return idx;
  const std::size_t m = std::min(n, cap);
  for (std::size_t i = 0; i < m; ++i) idx.push_back(m == 1 ? 0 : i * (n - 1) / (m - 1));
  return idx;
}

}  // namespace

double validation_rmse(const model::ModelState& state, std::span<const PreparedDataset> datasets,
                       std::size_t max_windows) {
  require(!datasets.empty(), ErrorCode::invalid_argument, "validation needs at least one dataset");
  double total = 0.0;
  for (const auto& ds : datasets) {
    const auto picks = evenly_spaced(ds.val_starts.size(), max_windows);
    require(!picks.empty(), ErrorCode::out_of_range, ds.name() + " has no validation windows");
    const std::size_t n = picks.size() * ds.data.C;
    std::vector<double> sq(n);
    const auto ctx = ds.context();
    parallel_for(n, [&](std::size_t i) {
      const Matrix w = ds.window(ds.val_starts[picks[i / ds.data.C]], i % ds.data.C, state.task);
      sq[i] = horizon_sq_error(model::predict(state, w, ctx), w, state.task, ds.norm.scale());
    });
    double s = 0.0;
    for (double v : sq) s += v;
    total += std::sqrt(s / static_cast<double>(n * state.task.horizon_len * ds.data.N));
  }
  return total / static_cast<double>(datasets.size());
}

double batch_gradient(const model::ModelState& state, std::span<const Sample> batch, nn::Gradients& grads,
                      bool training, std::uint64_t dropout_seed) {
  require(!batch.empty(), ErrorCode::invalid_argument, "empty batch");
  const TaskSpec& task = state.task;
  const auto h = static_cast<Index>(task.history_len);
  const auto t = static_cast<Index>(task.window_len());

  grads = nn::Gradients(state.params.size());
  const std::size_t chunk = std::max<std::size_t>(1, worker_count());
  std::vector<nn::Gradients> local(std::min(chunk, batch.size()));
  std::vector<double> losses(batch.size());

  for (std::size_t base = 0; base < batch.size(); base += chunk) {
    const std::size_t count = std::min(chunk, batch.size() - base);
    parallel_for(count, [&](std::size_t j) {
      const Sample& s = batch[base + j];
      const Matrix w = s.dataset->window(s.start, s.channel, task);
      ad::Tape tape(true);
      local[j] = nn::Gradients(state.params.size());
      nn::Binder bind(tape, state.params, &local[j]);
      Rng rng(derive_seed(dropout_seed, base + j));
      model::ForwardOptions opts{training, &rng};
      ad::Var pred = model::forward(bind, state, w, s.dataset->context(), opts);
      ad::Var loss = ad::rows_mse(pred, w, h, t);
      losses[base + j] = loss.value()(0, 0);
      tape.backward(loss);
    });
    for (std::size_t j = 0; j < count; ++j) grads.add(local[j]);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grads.scale(inv);
  double mean = 0.0;
  for (double l : losses) mean += l;
  return mean * inv;
}

TrainResult train(model::ModelState& state, std::span<const PreparedDataset> datasets, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  require(!datasets.empty(), ErrorCode::invalid_argument, "training needs at least one dataset");
  TrainResult result;
  if (cfg.max_epochs == 0) return result;

  std::vector<std::size_t> counts;
  std::vector<std::vector<Sample>> pools(datasets.size());
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto& ds = datasets[d];
    require(ds.train_windows() > 0, ErrorCode::out_of_range, ds.name() + " has no training windows");
    const std::size_t cap = cfg.max_train_windows == 0 ? ds.train_starts.size() : cfg.max_train_windows;
    for (std::size_t i : evenly_spaced(ds.train_starts.size(), cap))
      for (std::size_t c = 0; c < ds.data.C; ++c) pools[d].push_back({&ds, ds.train_starts[i], c});
    counts.push_back(pools[d].size());
  }
  const BatchPlan plan = make_batch_plan(counts, cfg.iterations_per_epoch);

  Rng rng(cfg.seed);
  Rng pick_rng = rng.fork(1);
  std::vector<Rng> shuffle_rngs;
  std::vector<std::size_t> cursors(datasets.size(), 0);
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    shuffle_rngs.push_back(rng.fork(100 + d));
    shuffle_rngs[d].shuffle(pools[d]);
  }

  nn::Adam adam(state.params);
  nn::ParamStore best = state.params;
  result.best_val_rmse = validation_rmse(state, datasets, cfg.val_windows);
  std::size_t since_best = 0;
  std::size_t step = 0;
  const std::size_t steps_per_epoch = plan.iterations * datasets.size();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = epoch <= cfg.lr_switch_epoch ? cfg.lr_initial : cfg.lr_late;
    double loss_sum = 0.0;
    // Every dataset appears exactly K times per epoch, in shuffled order, so
    // each step still draws its dataset uniformly at random.
    std::vector<std::size_t> schedule;
    for (std::size_t d = 0; d < datasets.size(); ++d) schedule.insert(schedule.end(), plan.iterations, d);
    pick_rng.shuffle(schedule);
    for (std::size_t it = 0; it < steps_per_epoch; ++it, ++step) {
      const std::size_t d = schedule[it];
      std::vector<Sample> batch;
      for (std::size_t b = 0; b < plan.batch_sizes[d]; ++b) {
        if (cursors[d] == pools[d].size()) {
          shuffle_rngs[d].shuffle(pools[d]);
          cursors[d] = 0;
        }
        batch.push_back(pools[d][cursors[d]++]);
      }
      nn::Gradients grads;
      const double loss = batch_gradient(state, batch, grads, true, derive_seed(cfg.seed, step));
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (epoch " << epoch << ", dataset " << datasets[d].name()
            << ", lr " << lr << ")";
        fail(ErrorCode::diverged, msg.str());
      }
      if (cfg.grad_clip) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > *cfg.grad_clip) grads.scale(*cfg.grad_clip / norm);
      }
      adam.step(state.params, grads, lr);
      result.steps.push_back({step, datasets[d].name(), loss});
      loss_sum += loss;
    }

    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(steps_per_epoch),
                    validation_rmse(state, datasets, cfg.val_windows)};
    result.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec, state);
    if (rec.val_rmse < result.best_val_rmse) {
      result.best_val_rmse = rec.val_rmse;
      result.best_epoch = epoch;
      best = state.params;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
  }
  state.params = std::move(best);
  for (const auto& ds : datasets)
    if (!state.was_trained_on(ds.name())) state.trained_on.push_back(ds.name());
  return result;
}

std::size_t fewshot_windows(std::size_t n, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::invalid_argument,
          "few-shot fraction must lie in (0, 1]");
  // The epsilon keeps 0.05 * 400 at 20 despite 0.05 not being exact.
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return n == 0 ? 0 : std::max<std::size_t>(1, keep);
}

TrainResult finetune_fewshot(model::ModelState& state, const PreparedDataset& target, double fraction,
                             const TrainConfig& cfg) {
  PreparedDataset subset = target;
  subset.train_starts.resize(fewshot_windows(target.train_starts.size(), fraction));
  const PreparedDataset one[] = {std::move(subset)};
  return train(state, one, cfg);
}

}  // namespace uniflow::train
