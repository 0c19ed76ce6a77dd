// uniflow: generate the synthetic suite, train, evaluate, ablate, run
// few/zero-shot protocols and dump memory retrieval signatures.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "uniflow/checkpoint.hpp"
#include "uniflow/config.hpp"
#include "uniflow/error.hpp"
#include "uniflow/eval.hpp"
#include "uniflow/synth.hpp"
#include "uniflow/train.hpp"

namespace {

using namespace uniflow;
using cli::RunConfig;
using nlohmann::json;
namespace fs = std::filesystem;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> protocol;
  std::optional<double> noise;
  std::optional<double> fraction;
  std::optional<std::string> checkpoint;
};

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config ? cli::load_run_config(*f.config) : cli::preset_config("desk");
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = fs::path(*f.out);
  if (f.protocol) c.protocol = eval::parse_protocol(*f.protocol);
  if (f.noise) c.noise_levels = {*f.noise};
  if (f.fraction) c.fractions = {*f.fraction};
  if (f.checkpoint) c.checkpoint = fs::path(*f.checkpoint);
  c.train.seed = c.seed;
  c.finetune.seed = c.seed;
  return c;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<train::PreparedDataset> prepare_all(const std::vector<fs::path>& dirs, const RunConfig& c) {
  std::vector<train::PreparedDataset> out;
  for (const auto& d : dirs) out.push_back(train::prepare(load_dataset(d), c.patch, c.resolved_task(), d));
  return out;
}

model::ModelState load_model(const RunConfig& c) {
  require(c.checkpoint.has_value(), ErrorCode::invalid_argument, "config has no checkpoint");
  return checkpoint::load(*c.checkpoint);
}

void emit_reports(const std::vector<eval::EvalReport>& reports, const fs::path& dir) {
  fs::create_directories(dir);
  eval::write_reports_csv(reports, dir / "reports.csv");
  eval::write_reports_json(reports, dir / "reports.json");
  for (const auto& r : reports)
    std::cout << std::left << std::setw(22) << r.dataset << std::setw(18) << r.protocol << " rmse " << std::setw(12)
              << r.rmse << " mae " << r.mae << '\n';
}

void cmd_gen(const Flags& f) {
  const RunConfig c = resolve(f);
  const fs::path dir = c.out_dir();
  fs::create_directories(dir);
  json manifest = {{"seed", c.seed}, {"datasets", json::array()}};
  for (const auto& ds : synth::gen_suite(c.seed)) {
    save_dataset(ds, dir / ds.name);
    manifest["datasets"].push_back(
        {{"name", ds.name}, {"kind", to_string(ds.kind)}, {"path", ds.name}, {"target", synth::is_target(ds)}});
    std::cout << ds.name << " T=" << ds.T << " N=" << ds.N << '\n';
  }
  write_json(manifest, dir / "manifest.json");
}

void cmd_train(const Flags& f) {
  const RunConfig c = resolve(f);
  const fs::path dir = c.out_dir();
  fs::create_directories(dir / "checkpoints");
  write_json(c.to_json(), dir / "config.json");

  const auto data = prepare_all(c.dataset_dirs(), c);
  model::ModelState st = model::init_model(c.patch, c.model, c.resolved_task(), c.seed);
  train::TrainHooks hooks;
  hooks.on_epoch = [&](const train::EpochRecord& r, const model::ModelState& s) {
    std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.train_loss << " val_rmse " << r.val_rmse
              << std::endl;
    checkpoint::save(s, dir / "checkpoints" / ("epoch-" + std::to_string(r.epoch) + ".ckpt"));
  };
  const auto result = train::train(st, data, c.train, hooks);
  checkpoint::save(st, dir / "model.ckpt");

  std::ofstream loss(dir / "loss.csv");
  loss << "step,dataset,loss\n" << std::setprecision(17);
  for (const auto& s : result.steps) loss << s.step << ',' << s.dataset << ',' << s.loss << '\n';
  std::ofstream epochs(dir / "epochs.csv");
  epochs << "epoch,lr,train_loss,val_rmse\n" << std::setprecision(17);
  for (const auto& e : result.epochs) epochs << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_rmse << '\n';
  std::cout << "best epoch " << result.best_epoch << " val_rmse " << result.best_val_rmse << '\n';
}

void cmd_eval(const Flags& f) {
  const RunConfig c = resolve(f);
  const model::ModelState st = load_model(c);
  RunConfig data_cfg = c;
  data_cfg.patch = st.patch;
  data_cfg.task = st.task;
  const auto data = prepare_all(c.dataset_dirs(), data_cfg);
  std::vector<eval::EvalReport> reports;
  for (const auto& ds : data) {
    if (f.noise) {
      reports.push_back(eval::noise_eval(st, ds, *f.noise, c.seed));
    } else {
      reports.push_back(eval::protocol_predict(st, ds, c.protocol, c.seed));
    }
  }
  for (const auto& ds : data) reports.push_back(eval::history_average_report(ds, st.task, c.ha_period));
  emit_reports(reports, c.out_dir());
}

void cmd_ablate(const Flags& f) {
  const RunConfig c = resolve(f);
  const auto data = prepare_all(c.dataset_dirs(), c);
  eval::Recipe recipe{c.patch, c.model, c.resolved_task(), c.train, c.seed};
  const auto variants = c.ablation == "units" ? eval::unit_variants(c.model) : eval::bank_variants(c.model);
  fs::create_directories(c.out_dir());
  write_json(c.to_json(), c.out_dir() / "config.json");
  emit_reports(eval::ablate(recipe, variants, data), c.out_dir());
}

void cmd_shot(const Flags& f) {
  const RunConfig c = resolve(f);
  const model::ModelState st = load_model(c);
  RunConfig data_cfg = c;
  data_cfg.patch = st.patch;
  data_cfg.task = st.task;
  const auto target = prepare_all({c.target_dir()}, data_cfg);
  emit_reports(eval::zero_few_shot(st, target.front(), c.finetune, c.fractions), c.out_dir());
}

void cmd_inspect_memory(const Flags& f) {
  const RunConfig c = resolve(f);
  const model::ModelState st = load_model(c);
  RunConfig data_cfg = c;
  data_cfg.patch = st.patch;
  data_cfg.task = st.task;
  const auto data = prepare_all(c.dataset_dirs(), data_cfg);
  const fs::path dir = c.out_dir();
  fs::create_directories(dir);

  struct Entry {
    std::string dataset;
    std::size_t start;
    Eigen::VectorXd sig;
  };
  std::vector<Entry> entries;
  for (const auto& ds : data) {
    const std::size_t n = ds.test_starts.size();
    const std::size_t m = std::min(n, c.inspect_windows);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t start = ds.test_starts[m == 1 ? 0 : i * (n - 1) / (m - 1)];
      entries.push_back({ds.name(), start, model::retrieval_signature(st, ds.window(start, 0, st.task), ds.context())});
    }
  }
  std::ofstream sig(dir / "signatures.csv");
  sig << "dataset,start";
  for (std::size_t b = 0; b < mra::kBankCount; ++b)
    for (std::size_t u = 0; u < st.config.memory_units; ++u) sig << ',' << mra::to_string(mra::bank_from_index(b)) << u;
  sig << '\n' << std::setprecision(10);
  for (const auto& e : entries) {
    sig << e.dataset << ',' << e.start;
    for (Eigen::Index i = 0; i < e.sig.size(); ++i) sig << ',' << e.sig[i];
    sig << '\n';
  }
  std::ofstream cos(dir / "cosines.csv");
  cos << "dataset_a,start_a,dataset_b,start_b,cosine\n" << std::setprecision(10);
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (std::size_t j = i + 1; j < entries.size(); ++j)
      cos << entries[i].dataset << ',' << entries[i].start << ',' << entries[j].dataset << ',' << entries[j].start << ','
          << eval::cosine_similarity(entries[i].sig, entries[j].sig) << '\n';
  std::cout << entries.size() << " signatures written to " << dir.string() << '\n';
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal flow prediction toolkit"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--seed", flags.seed, "Seed for generation, initialization and sampling");
    sub->add_option("--out", flags.out, "Output directory");
  };
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", flags.checkpoint, "Model checkpoint (overrides the config)");
  };
  auto* gen = app.add_subcommand("gen", "Write the synthetic dataset suite");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "Jointly train one model on the configured datasets");
  add_common(tr);
  tr->add_option("--protocol", flags.protocol, "short (12->12) or long (64->64)")->check(CLI::IsMember({"short", "long"}));
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test splits");
  add_common(ev);
  add_checkpoint(ev);
  ev->add_option("--protocol", flags.protocol, "short (12->12) or long (64->64)")->check(CLI::IsMember({"short", "long"}));
  ev->add_option("--noise", flags.noise, "Gaussian noise std as a fraction of the dataset mean")
      ->check(CLI::Range(0.0, 1.0));
  auto* ab = app.add_subcommand("ablate", "Train and evaluate memory ablation variants");
  add_common(ab);
  ab->add_option("--protocol", flags.protocol, "short (12->12) or long (64->64)")->check(CLI::IsMember({"short", "long"}));
  auto* shot = app.add_subcommand("shot", "Zero-shot and few-shot evaluation on the held-out dataset");
  add_common(shot);
  add_checkpoint(shot);
  shot->add_option("--fraction", flags.fraction, "Few-shot fraction of the target's training windows")
      ->check(CLI::Range(0.0, 1.0));
  auto* insp = app.add_subcommand("inspect-memory", "Dump retrieval signatures and their pairwise cosines");
  add_common(insp);
  add_checkpoint(insp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) cmd_gen(flags);
    if (tr->parsed()) cmd_train(flags);
    if (ev->parsed()) cmd_eval(flags);
    if (ab->parsed()) cmd_ablate(flags);
    if (shot->parsed()) cmd_shot(flags);
    if (insp->parsed()) cmd_inspect_memory(flags);
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
