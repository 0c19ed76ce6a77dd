#include "uniflow/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uniflow/error.hpp"

namespace uniflow {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "values.f32 is little-endian; big-endian hosts need byte swapping");

const char* to_string(DataKind kind) noexcept {
  return kind == DataKind::grid ? "grid" : "graph";
}

DataKind parse_data_kind(const std::string& s) {
  if (s == "grid") return DataKind::grid;
  if (s == "graph") return DataKind::graph;
  fail(ErrorCode::parse_error, "unknown data kind '" + s + "'");
}

void GraphTopology::validate() const {
  require(num_nodes >= 1, ErrorCode::invalid_argument, "graph has no nodes");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto [i, j] : edges) {
    require(i < num_nodes && j < num_nodes, ErrorCode::out_of_range,
            "edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
    require(i != j, ErrorCode::invalid_argument, "self-loop at node " + std::to_string(i));
    auto key = std::minmax(i, j);
    require(seen.insert(key).second, ErrorCode::invalid_argument,
            "duplicate edge (" + std::to_string(i) + ", " + std::to_string(j) + ")");
  }
}

std::vector<std::vector<std::size_t>> GraphTopology::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(num_nodes);
  for (auto [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

Normalizer Normalizer::fit(std::span<const double> values) {
  require(!values.empty(), ErrorCode::invalid_argument, "cannot fit a normalizer on no values");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  require(std::isfinite(*lo) && std::isfinite(*hi), ErrorCode::non_finite,
          "non-finite value while fitting normalizer");
  require(*hi > *lo, ErrorCode::degenerate_range,
          "constant data: max equals min (" + std::to_string(*lo) + ")");
  return Normalizer{*lo, *hi};
}

void FlowDataset::validate() const {
  require(T >= 1 && N >= 1 && C >= 1, ErrorCode::invalid_argument,
          "dataset '" + name + "' has an empty dimension");
  require(values.size() == T * N * C, ErrorCode::shape_mismatch,
          "dataset '" + name + "': " + std::to_string(values.size()) + " values for shape " +
              std::to_string(T) + "x" + std::to_string(N) + "x" + std::to_string(C));
  for (double v : values) {
    require(std::isfinite(v), ErrorCode::non_finite, "dataset '" + name + "' has non-finite values");
  }
  if (kind == DataKind::grid) {
    require(grid.has_value(), ErrorCode::invalid_argument, "grid dataset without grid spec");
    require(grid->height >= 1 && grid->width >= 1, ErrorCode::invalid_argument,
            "grid spec must be positive");
    require(grid->height * grid->width == N, ErrorCode::shape_mismatch,
            "grid " + std::to_string(grid->height) + "x" + std::to_string(grid->width) +
                " does not match N=" + std::to_string(N));
  } else {
    require(topology.has_value(), ErrorCode::invalid_argument, "graph dataset without topology");
    require(topology->num_nodes == N, ErrorCode::shape_mismatch,
            "topology has " + std::to_string(topology->num_nodes) + " nodes but N=" +
                std::to_string(N));
    topology->validate();
  }
}

std::vector<double> FlowDataset::channel_values(std::size_t c, TimeRange range) const {
  std::vector<double> out;
  out.reserve(range.size() * N);
  for (std::size_t t = range.begin; t < range.end; ++t)
    for (std::size_t n = 0; n < N; ++n) out.push_back(at(t, n, c));
  return out;
}

void FlowDataset::refresh_stats() {
  if (values.empty()) return;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  meta.mean = mean;
  meta.std = std::sqrt(ss / static_cast<double>(values.size()));
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  meta.min = *lo;
  meta.max = *hi;
}

namespace {

json meta_to_json(const FlowDataset& ds) {
  json j;
  j["name"] = ds.name;
  j["kind"] = to_string(ds.kind);
  j["T"] = ds.T;
  j["N"] = ds.N;
  j["C"] = ds.C;
  if (ds.grid) j["grid"] = {{"height", ds.grid->height}, {"width", ds.grid->width}};
  if (ds.topology) j["num_nodes"] = ds.topology->num_nodes;
  j["interval"] = ds.meta.interval;
  j["mean"] = ds.meta.mean;
  j["std"] = ds.meta.std;
  j["min"] = ds.meta.min;
  j["max"] = ds.meta.max;
  if (ds.meta.normalizer)
    j["normalizer"] = {{"lo", ds.meta.normalizer->lo}, {"hi", ds.meta.normalizer->hi}};
  return j;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

FlowDataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  const fs::path values_path = dir / "values.f32";
  require(fs::exists(meta_path), ErrorCode::io_error, "missing " + meta_path.string());
  require(fs::exists(values_path), ErrorCode::io_error, "missing " + values_path.string());

  FlowDataset ds;
  try {
    const json j = json::parse(read_text(meta_path));
    ds.name = j.at("name").get<std::string>();
    ds.kind = parse_data_kind(j.at("kind").get<std::string>());
    ds.T = j.at("T").get<std::size_t>();
    ds.N = j.at("N").get<std::size_t>();
    ds.C = j.value("C", std::size_t{1});
    ds.meta.interval = j.value("interval", std::string("1 step"));
    ds.meta.mean = j.value("mean", 0.0);
    ds.meta.std = j.value("std", 0.0);
    ds.meta.min = j.value("min", 0.0);
    ds.meta.max = j.value("max", 0.0);
    if (j.contains("normalizer")) {
      ds.meta.normalizer =
          Normalizer{j["normalizer"].at("lo").get<double>(), j["normalizer"].at("hi").get<double>()};
    }
    if (ds.kind == DataKind::grid) {
      require(j.contains("grid"), ErrorCode::parse_error, "grid meta without 'grid'");
      ds.grid = GridSpec{j["grid"].at("height").get<std::size_t>(),
                         j["grid"].at("width").get<std::size_t>()};
    } else {
      ds.topology = GraphTopology{j.value("num_nodes", ds.N), {}};
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse_error, meta_path.string() + ": " + e.what());
  }

  const std::string blob = read_text(values_path);
  require(blob.size() % sizeof(float) == 0, ErrorCode::shape_mismatch,
          "values.f32 length is not a multiple of 4");
  const std::size_t count = blob.size() / sizeof(float);
  require(count == ds.T * ds.N * ds.C, ErrorCode::shape_mismatch,
          "values.f32 holds " + std::to_string(count) + " floats, meta expects " +
              std::to_string(ds.T * ds.N * ds.C));
  ds.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, blob.data() + i * sizeof(float), sizeof(float));
    ds.values[i] = static_cast<double>(f);
  }

  if (ds.kind == DataKind::graph) {
    const fs::path edges_path = dir / "edges.jsonl";
    require(fs::exists(edges_path), ErrorCode::io_error, "missing " + edges_path.string());
    std::ifstream in(edges_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const json e = json::parse(line);
        ds.topology->edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
      } catch (const json::exception& e) {
        fail(ErrorCode::parse_error,
             edges_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  ds.validate();
  return ds;
}

void save_dataset(const FlowDataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io_error, "cannot write " + (dir / "meta.json").string());
    out << meta_to_json(ds).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "values.f32", std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io_error, "cannot write values.f32");
    std::vector<float> buf(ds.values.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(ds.values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (ds.topology) {
    std::ofstream out(dir / "edges.jsonl", std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io_error, "cannot write edges.jsonl");
    for (auto [i, j] : ds.topology->edges) out << '[' << i << ',' << j << "]\n";
  }
}

std::pair<FlowDataset, Normalizer> normalize(const FlowDataset& ds) {
  Normalizer norm = Normalizer::fit(ds.values);
  return {normalize(ds, norm), norm};
}

FlowDataset normalize(const FlowDataset& ds, const Normalizer& norm) {
  require(norm.hi > norm.lo, ErrorCode::degenerate_range, "normalizer with hi <= lo");
  FlowDataset out = ds;
  for (double& v : out.values) v = norm.normalize(v);
  return out;
}

FlowDataset denormalize(const FlowDataset& ds, const Normalizer& norm) {
  FlowDataset out = ds;
  for (double& v : out.values) v = norm.denormalize(v);
  return out;
}

Normalizer fit_train_normalizer(const FlowDataset& ds) {
  const Splits s = split_622(ds);
  const auto first = ds.values.begin() + static_cast<std::ptrdiff_t>(s.train.begin * ds.N * ds.C);
  const auto last = ds.values.begin() + static_cast<std::ptrdiff_t>(s.train.end * ds.N * ds.C);
  return Normalizer::fit(std::span<const double>(&*first, static_cast<std::size_t>(last - first)));
}

Splits split_622(std::size_t T) {
  const std::size_t n_train = T * 6 / 10;
  const std::size_t n_val = T * 2 / 10;
  require(T >= 5 && n_train > 0 && n_val > 0 && T - n_train - n_val > 0,
          ErrorCode::invalid_argument,
          "T=" + std::to_string(T) + " is too short for a 6:2:2 split");
  return Splits{{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, T}};
}

std::size_t window_count(std::size_t range_len, const TaskSpec& task) {
  require(task.history_len >= 1 && task.horizon_len >= 1, ErrorCode::invalid_argument,
          "history and horizon must be positive");
  require(range_len >= task.window_len(), ErrorCode::invalid_argument,
          "range of length " + std::to_string(range_len) + " is shorter than H+P=" +
              std::to_string(task.window_len()));
  return range_len - task.window_len() + 1;
}

std::vector<std::size_t> window_starts(TimeRange range, const TaskSpec& task) {
  const std::size_t n = window_count(range.size(), task);
  std::vector<std::size_t> starts(n);
  for (std::size_t i = 0; i < n; ++i) starts[i] = range.begin + i;
  return starts;
}

Window extract_window(const FlowDataset& ds, std::size_t start, std::size_t channel,
                      const TaskSpec& task) {
  require(start + task.window_len() <= ds.T, ErrorCode::out_of_range, "window exceeds dataset");
  require(channel < ds.C, ErrorCode::out_of_range, "channel out of range");
  Window w{start, channel, task.window_len(), ds.N, {}};
  w.values.resize(w.rows * w.cols);
  for (std::size_t t = 0; t < w.rows; ++t)
    for (std::size_t n = 0; n < ds.N; ++n) w.values[t * w.cols + n] = ds.at(start + t, n, channel);
  return w;
}

std::vector<Window> window_samples(const FlowDataset& ds, const TaskSpec& task, TimeRange range) {
  require(range.end <= ds.T && range.begin <= range.end, ErrorCode::out_of_range,
          "range outside dataset");
  std::vector<Window> out;
  for (std::size_t s : window_starts(range, task))
    for (std::size_t c = 0; c < ds.C; ++c) out.push_back(extract_window(ds, s, c, task));
  return out;
}

}  // namespace uniflow
