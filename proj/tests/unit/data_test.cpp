#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "uniflow/data.hpp"
#include "uniflow/error.hpp"

using namespace uniflow;
namespace fs = std::filesystem;

namespace {

void write_raw(const fs::path& dir, const nlohmann::json& meta, const std::vector<float>& values) {
  fs::create_directories(dir);
  std::ofstream(dir / "meta.json") << meta.dump();
  std::ofstream blob(dir / "values.f32", std::ios::binary);
  blob.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("load reads a 4x2x1 blob verbatim") {
    const fs::path dir = testing::scratch_dir("data-load");
    const std::vector<float> v{0.5f, 1.25f, -3.0f, 4.0f, 1e-3f, 7.0f, 8.5f, 9.0f};
    write_raw(dir, {{"name", "tiny"}, {"kind", "graph"}, {"T", 4}, {"N", 2}, {"C", 1}}, v);
    std::ofstream(dir / "edges.jsonl") << "[0, 1]\n";
    const FlowDataset ds = load_dataset(dir);
    CHECK(ds.T == 4);
    CHECK(ds.N == 2);
    CHECK(ds.C == 1);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(ds.values[i] == static_cast<double>(v[i]));
  }

  TEST_CASE("grid meta must agree with N") {
    const fs::path ok = testing::scratch_dir("data-grid-ok");
    write_raw(ok, {{"name", "g"}, {"kind", "grid"}, {"T", 1}, {"N", 1024}, {"grid", {{"height", 32}, {"width", 32}}}},
              std::vector<float>(1024, 1.0f));
    CHECK(load_dataset(ok).N == 1024);

    const fs::path bad = testing::scratch_dir("data-grid-bad");
    write_raw(bad, {{"name", "g"}, {"kind", "grid"}, {"T", 1}, {"N", 1000}, {"grid", {{"height", 32}, {"width", 32}}}},
              std::vector<float>(1000, 1.0f));
    CHECK_THROWS_AS(load_dataset(bad), Error);
  }

  TEST_CASE("load rejects blob length mismatch, missing files and non-finite values") {
    const fs::path dir = testing::scratch_dir("data-mismatch");
    write_raw(dir, {{"name", "x"}, {"kind", "grid"}, {"T", 2}, {"N", 1}, {"grid", {{"height", 1}, {"width", 1}}}},
              {1.0f, 2.0f, 3.0f});
    CHECK(code_of([&] { load_dataset(dir); }) == ErrorCode::shape_mismatch);
    CHECK(code_of([&] { load_dataset(testing::scratch_dir("data-empty")); }) == ErrorCode::io_error);

    const fs::path nan_dir = testing::scratch_dir("data-nan");
    write_raw(nan_dir, {{"name", "x"}, {"kind", "grid"}, {"T", 2}, {"N", 1}, {"grid", {{"height", 1}, {"width", 1}}}},
              {1.0f, std::nanf("")});
    CHECK(code_of([&] { load_dataset(nan_dir); }) == ErrorCode::non_finite);
  }

  TEST_CASE("save then load is bit-identical for values and edges") {
    const FlowDataset g = testing::tiny_graph(3);
    const fs::path dir = testing::scratch_dir("data-roundtrip");
    save_dataset(g, dir);
    const FlowDataset back = load_dataset(dir);
    REQUIRE(back.values.size() == g.values.size());
    // Generated values are f32-representable, so the f32 blob is lossless.
    CHECK(std::memcmp(back.values.data(), g.values.data(), g.values.size() * sizeof(double)) == 0);
    CHECK(back.topology->edges == g.topology->edges);
    CHECK(back.name == g.name);
  }

  TEST_CASE("topology validation") {
    CHECK_THROWS_AS((GraphTopology{3, {{0, 3}}}.validate()), Error);
    CHECK_THROWS_AS((GraphTopology{3, {{1, 1}}}.validate()), Error);
    CHECK_THROWS_AS((GraphTopology{3, {{0, 1}, {1, 0}}}.validate()), Error);
    CHECK_NOTHROW((GraphTopology{3, {{0, 1}, {1, 2}}}.validate()));
  }

  TEST_CASE("normalize maps onto [0, 1] and round-trips") {
    FlowDataset ds;
    ds.name = "n";
    ds.kind = DataKind::grid;
    ds.T = 3;
    ds.N = 1;
    ds.grid = GridSpec{1, 1};
    ds.values = {0.0, 5.0, 10.0};
    auto [norm_ds, norm] = normalize(ds);
    CHECK(norm.lo == 0.0);
    CHECK(norm.hi == 10.0);
    CHECK(norm_ds.values == std::vector<double>{0.0, 0.5, 1.0});

    ds.T = 2;
    ds.values = {-2.0, 2.0};
    CHECK(normalize(ds).first.values == std::vector<double>{0.0, 1.0});

    Rng rng(11);
    ds.T = 100;
    ds.values.resize(100);
    for (double& v : ds.values) v = rng.uniform(-50.0, 300.0);
    auto [n2, nm] = normalize(ds);
    const FlowDataset back = denormalize(n2, nm);
    for (std::size_t i = 0; i < 100; ++i) {
      CHECK(n2.values[i] >= 0.0);
      CHECK(n2.values[i] <= 1.0);
      CHECK(std::abs(back.values[i] - ds.values[i]) <= 1e-6 * std::abs(ds.values[i]) + 1e-12);
    }

    ds.values.assign(100, 4.0);
    CHECK(code_of([&] { normalize(ds); }) == ErrorCode::degenerate_range);
  }

  TEST_CASE("train-split normalizer ignores val and test") {
    FlowDataset ds;
    ds.name = "n";
    ds.kind = DataKind::grid;
    ds.T = 10;
    ds.N = 1;
    ds.grid = GridSpec{1, 1};
    ds.values = {1, 2, 3, 4, 5, 6, 100, 100, -100, -100};
    const Normalizer n = fit_train_normalizer(ds);
    CHECK(n.lo == 1.0);
    CHECK(n.hi == 6.0);
  }

  TEST_CASE("6:2:2 split") {
    const Splits s = split_622(100);
    CHECK(s.train == TimeRange{0, 60});
    CHECK(s.val == TimeRange{60, 80});
    CHECK(s.test == TimeRange{80, 100});
    const Splits t = split_622(10);
    CHECK(t.train == TimeRange{0, 6});
    CHECK(t.val == TimeRange{6, 8});
    CHECK(t.test == TimeRange{8, 10});
    CHECK_THROWS_AS(split_622(4), Error);

    for (std::size_t T = 5; T < 400; ++T) {
      Splits r;
      try {
        r = split_622(T);
      } catch (const Error&) {
        continue;
      }
      CHECK(r.train.begin == 0);
      CHECK(r.train.end == r.val.begin);
      CHECK(r.val.end == r.test.begin);
      CHECK(r.test.end == T);
      CHECK(r.train.size() == T * 6 / 10);
      CHECK(r.val.size() == T * 2 / 10);
    }
  }

  TEST_CASE("window counts") {
    const TaskSpec task{12, 12};
    CHECK(window_count(24, task) == 1);
    CHECK(window_count(25, task) == 2);
    CHECK_THROWS_AS(window_count(23, task), Error);

    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
      const TaskSpec t{1 + rng.below(10), 1 + rng.below(10)};
      const std::size_t len = t.window_len() + rng.below(30);
      const std::size_t begin = rng.below(50);
      const auto starts = window_starts({begin, begin + len}, t);
      CHECK(starts.size() == len - t.window_len() + 1);
      // Windows never cross the range end.
      CHECK(starts.back() + t.window_len() == begin + len);
    }
  }

  TEST_CASE("window samples fold channels and stay inside the range") {
    FlowDataset ds;
    ds.name = "c";
    ds.kind = DataKind::grid;
    ds.T = 30;
    ds.N = 2;
    ds.C = 2;
    ds.grid = GridSpec{1, 2};
    ds.values.resize(ds.T * ds.N * ds.C);
    for (std::size_t i = 0; i < ds.values.size(); ++i) ds.values[i] = static_cast<double>(i);
    const TaskSpec task{3, 2};
    const auto w = window_samples(ds, task, {10, 20});
    CHECK(w.size() == 2 * (10 - 5 + 1));
    for (const auto& s : w) {
      CHECK(s.start >= 10);
      CHECK(s.start + s.rows <= 20);
      for (std::size_t t = 0; t < s.rows; ++t)
        for (std::size_t n = 0; n < s.cols; ++n) CHECK(s.at(t, n) == ds.at(s.start + t, n, s.channel));
    }
  }
}
