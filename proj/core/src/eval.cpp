#include "uniflow/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uniflow/error.hpp"
#include "uniflow/parallel.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::eval {

using ad::Index;

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), ErrorCode::shape_mismatch, "prediction and truth sizes differ");
  require(!pred.empty(), ErrorCode::invalid_argument, "metric over an empty set");
}

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0xd1b54a32d192ed03ULL * (b + 1));
  return splitmix64(s);
}

std::vector<std::size_t> test_picks(const train::PreparedDataset& ds, std::size_t max_windows) {
  const std::size_t n = ds.test_starts.size();
  require(n > 0, ErrorCode::out_of_range, ds.name() + ": test split too short for the task");
  std::vector<std::size_t> idx;
  const std::size_t m = max_windows == 0 ? n : std::min(n, max_windows);
  for (std::size_t i = 0; i < m; ++i) idx.push_back(m == 1 ? 0 : i * (n - 1) / (m - 1));
  return idx;
}

/// Evaluates `predict_fn(window, sample index)` over the test samples.
template <typename Fn>
EvalReport run_test(const train::PreparedDataset& ds, const TaskSpec& task, std::size_t max_windows, Fn&& predict_fn) {
  const auto picks = test_picks(ds, max_windows);
  const std::size_t n = picks.size() * ds.data.C;
  std::vector<ErrorAccumulator> acc(n);
  parallel_for(n, [&](std::size_t i) {
    const Matrix w = ds.window(ds.test_starts[picks[i / ds.data.C]], i % ds.data.C, task);
    acc[i].add_horizon(predict_fn(w, i), w, task, ds.norm);
  });
  ErrorAccumulator total;
  for (const auto& a : acc) total.merge(a);
  EvalReport r;
  r.dataset = ds.name();
  r.rmse = total.rmse();
  r.mae = total.mae();
  r.horizon = task.horizon_len;
  r.windows = n;
  return r;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

void ErrorAccumulator::add_horizon(const Matrix& pred, const Matrix& truth, const TaskSpec& task,
                                   const Normalizer& norm) {
  require(pred.rows() == truth.rows() && pred.cols() == truth.cols(), ErrorCode::shape_mismatch,
          "prediction and truth shapes differ");
  require(pred.rows() == static_cast<Index>(task.window_len()), ErrorCode::shape_mismatch,
          "window length disagrees with the task");
  for (auto t = static_cast<Index>(task.history_len); t < pred.rows(); ++t)
    for (Index n = 0; n < pred.cols(); ++n) {
      const double e = norm.denormalize(pred(t, n)) - norm.denormalize(truth(t, n));
      sum_sq += e * e;
      sum_abs += std::abs(e);
      ++count;
    }
}

void ErrorAccumulator::merge(const ErrorAccumulator& o) {
  sum_sq += o.sum_sq;
  sum_abs += o.sum_abs;
  count += o.count;
}

double ErrorAccumulator::rmse() const {
  require(count > 0, ErrorCode::invalid_argument, "metric over an empty set");
  return std::sqrt(sum_sq / static_cast<double>(count));
}

double ErrorAccumulator::mae() const {
  require(count > 0, ErrorCode::invalid_argument, "metric over an empty set");
  return sum_abs / static_cast<double>(count);
}

const char* to_string(Protocol p) noexcept { return p == Protocol::short_term ? "short" : "long"; }

Protocol parse_protocol(const std::string& s) {
  if (s == "short") return Protocol::short_term;
  if (s == "long") return Protocol::long_term;
  fail(ErrorCode::parse_error, "protocol must be short or long, got '" + s + "'");
}

TaskSpec task_for(Protocol p) { return p == Protocol::short_term ? TaskSpec{12, 12} : TaskSpec{64, 64}; }

Matrix baseline_history_average(const Matrix& history, const TaskSpec& task, std::size_t period) {
  require(task.history_len > 0 && history.rows() >= static_cast<Index>(task.history_len), ErrorCode::invalid_argument,
          "history average needs a non-empty history");
  require(period >= 1, ErrorCode::invalid_argument, "period must be positive");
  const auto h = static_cast<Index>(task.history_len);
  const Eigen::RowVectorXd plain = history.topRows(h).colwise().mean();
  Matrix out(static_cast<Index>(task.horizon_len), history.cols());
  for (Index p = 0; p < out.rows(); ++p) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(history.cols());
    int hits = 0;
    for (Index t = 0; t < h; ++t)
      if (static_cast<std::size_t>(h + p - t) % period == 0) {
        sum += history.row(t);
        ++hits;
      }
    out.row(p) = hits > 0 ? Eigen::RowVectorXd(sum / hits) : plain;
  }
  return out;
}

EvalReport evaluate(const model::ModelState& state, const train::PreparedDataset& ds, const EvalOptions& opts) {
  require(opts.noise_level >= 0.0 && std::isfinite(opts.noise_level), ErrorCode::invalid_argument,
          "noise level must be finite and non-negative");
  const TaskSpec& task = state.task;
  // Noise is drawn in flow units and added in normalized space.
  const double sigma = noise_std(opts.noise_level, ds.data.meta.mean) / ds.norm.scale();
  const auto ctx = ds.context();
  EvalReport r = run_test(ds, task, opts.max_windows, [&](const Matrix& w, std::size_t i) {
    if (sigma == 0.0) return model::predict(state, w, ctx);
    Matrix noisy = w;
    Rng rng(derive_seed(opts.seed, i));
    for (std::size_t t = 0; t < task.history_len; ++t)
      for (Index n = 0; n < noisy.cols(); ++n) noisy(static_cast<Index>(t), n) += rng.normal(0.0, sigma);
    return model::predict(state, noisy, ctx);
  });
  r.protocol = opts.protocol;
  r.seed = opts.seed;
  return r;
}

EvalReport protocol_predict(const model::ModelState& state, const train::PreparedDataset& ds, Protocol protocol,
                            std::uint64_t seed) {
  const TaskSpec want = task_for(protocol);
  require(state.task.history_len == want.history_len && state.task.horizon_len == want.horizon_len,
          ErrorCode::invalid_argument,
          std::string("model was built for a different task than the ") + to_string(protocol) + " protocol");
  EvalOptions opts;
  opts.seed = seed;
  opts.protocol = to_string(protocol);
  return evaluate(state, ds, opts);
}

EvalReport history_average_report(const train::PreparedDataset& ds, const TaskSpec& task, std::size_t period,
                                  std::size_t max_windows) {
  EvalReport r = run_test(ds, task, max_windows, [&](const Matrix& w, std::size_t) {
    Matrix pred = w;
    pred.bottomRows(static_cast<Index>(task.horizon_len)) = baseline_history_average(w, task, period);
    return pred;
  });
  r.protocol = "history_average";
  return r;
}

EvalReport zeros_report(const train::PreparedDataset& ds, const TaskSpec& task, std::size_t max_windows) {
  const double zero = ds.norm.normalize(0.0);
  EvalReport r = run_test(ds, task, max_windows, [&](const Matrix& w, std::size_t) {
    return Matrix(Matrix::Constant(w.rows(), w.cols(), zero));
  });
  r.protocol = "zeros";
  return r;
}

double noise_std(double level, double dataset_mean) { return level * dataset_mean; }

EvalReport noise_eval(const model::ModelState& state, const train::PreparedDataset& ds, double level,
                      std::uint64_t seed) {
  require(level >= 0.0 && level <= 1.0, ErrorCode::invalid_argument, "noise level must lie in [0, 1]");
  EvalOptions opts;
  opts.noise_level = level;
  opts.seed = seed;
  std::ostringstream label;
  label << "noise@" << level;
  opts.protocol = label.str();
  return evaluate(state, ds, opts);
}

std::vector<AblationVariant> unit_variants(const model::ModelConfig& base) {
  std::vector<AblationVariant> out;
  for (std::size_t units : kUnitSweep) {
    model::ModelConfig c = base;
    c.memory_units = units;
    out.push_back({"units=" + std::to_string(units), c});
  }
  return out;
}

std::vector<AblationVariant> bank_variants(const model::ModelConfig& base) {
  std::vector<AblationVariant> out;
  model::ModelConfig full = base;
  full.banks = mra::BankSet::all();
  out.push_back({"full", full});
  for (std::size_t b = 0; b < mra::kBankCount; ++b) {
    model::ModelConfig c = base;
    c.banks = mra::BankSet::without(mra::bank_from_index(b));
    out.push_back({std::string("w/o ") + mra::to_string(mra::bank_from_index(b)), c});
  }
  model::ModelConfig none = base;
  none.banks = mra::BankSet::none();
  out.push_back({"w/o MRA", none});
  return out;
}

std::vector<EvalReport> ablate(const Recipe& recipe, std::span<const AblationVariant> variants,
                               std::span<const train::PreparedDataset> corpus) {
  std::vector<EvalReport> out;
  for (const auto& v : variants) {
    model::ModelState st = model::init_model(recipe.patch, v.model, recipe.task, recipe.seed);
    train::TrainConfig tc = recipe.train;
    tc.seed = recipe.seed;
    train::train(st, corpus, tc);
    double sum = 0.0;
    for (const auto& ds : corpus) {
      EvalOptions opts;
      opts.seed = recipe.seed;
      opts.protocol = v.label;
      out.push_back(evaluate(st, ds, opts));
      sum += out.back().rmse;
    }
    EvalReport mean;
    mean.dataset = "mean";
    mean.protocol = v.label;
    mean.rmse = sum / static_cast<double>(corpus.size());
    double mae_sum = 0.0;
    for (std::size_t i = out.size() - corpus.size(); i < out.size(); ++i) mae_sum += out[i].mae;
    mean.mae = mae_sum / static_cast<double>(corpus.size());
    mean.horizon = recipe.task.horizon_len;
    mean.seed = recipe.seed;
    out.push_back(mean);
  }
  return out;
}

std::vector<EvalReport> zero_few_shot(const model::ModelState& state, const train::PreparedDataset& target,
                                      const train::TrainConfig& finetune, std::span<const double> fractions) {
  require(!state.was_trained_on(target.name()), ErrorCode::provenance,
          "target dataset " + target.name() + " appears in the training manifest");
  std::vector<EvalReport> out;
  EvalOptions opts;
  opts.seed = finetune.seed;
  opts.protocol = "zero-shot";
  out.push_back(evaluate(state, target, opts));
  for (double f : fractions) {
    model::ModelState tuned = state;
    train::finetune_fewshot(tuned, target, f, finetune);
    std::ostringstream label;
    label << "few-shot@" << f;
    opts.protocol = label.str();
    out.push_back(evaluate(tuned, target, opts));
  }
  return out;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require(a.size() == b.size(), ErrorCode::shape_mismatch, "signature lengths differ");
  const double na = a.norm(), nb = b.norm();
  require(na > 0.0 && nb > 0.0, ErrorCode::invalid_argument, "zero-norm signature");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double case_study(const model::ModelState& state, const Matrix& window_a, const Matrix& window_b,
                  const model::SampleContext& ctx) {
  return cosine_similarity(model::retrieval_signature(state, window_a, ctx),
                           model::retrieval_signature(state, window_b, ctx));
}

namespace {
std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}
}  // namespace

void write_reports_csv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot write " + path.string());
  out << "dataset,protocol,rmse,mae,horizon,windows,seed\n";
  for (const auto& r : reports)
    out << r.dataset << ',' << r.protocol << ',' << fmt(r.rmse) << ',' << fmt(r.mae) << ',' << r.horizon << ','
        << r.windows << ',' << r.seed << '\n';
}

void write_reports_json(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports)
    arr.push_back({{"dataset", r.dataset},
                   {"protocol", r.protocol},
                   {"rmse", r.rmse},
                   {"mae", r.mae},
                   {"horizon", r.horizon},
                   {"windows", r.windows},
                   {"seed", r.seed}});
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot write " + path.string());
  out << arr.dump(2) << '\n';
}

}  // namespace uniflow::eval
