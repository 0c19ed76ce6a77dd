#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "support.hpp"
#include "uniflow/checkpoint.hpp"
#include "uniflow/error.hpp"

using namespace uniflow;
using ad::Matrix;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-exact and predicts identically") {
    const auto dir = testing::scratch_dir("checkpoint-roundtrip");
    model::ModelConfig cfg = testing::tiny_model();
    cfg.banks = mra::BankSet::without(mra::BankKind::time_spatial);
    model::ModelState st = model::init_model(testing::tiny_patch(), cfg, testing::tiny_task(), 3);
    st.trained_on = {"grid_a", "graph_b"};
    checkpoint::save(st, dir / "m.ckpt");
    const model::ModelState back = checkpoint::load(dir / "m.ckpt");

    CHECK(back.trained_on == st.trained_on);
    CHECK(back.config.banks == cfg.banks);
    CHECK(back.config.memory_units == cfg.memory_units);
    CHECK(back.patch.p_t == st.patch.p_t);
    CHECK(back.task.horizon_len == st.task.horizon_len);
    REQUIRE(back.params.size() == st.params.size());
    for (std::size_t i = 0; i < st.params.size(); ++i) {
      CHECK(back.params[i].name == st.params[i].name);
      REQUIRE(back.params[i].value.rows() == st.params[i].value.rows());
      REQUIRE(back.params[i].value.cols() == st.params[i].value.cols());
      CHECK(std::memcmp(back.params[i].value.data(), st.params[i].value.data(),
                        sizeof(double) * static_cast<std::size_t>(st.params[i].value.size())) == 0);
    }

    Rng rng(4);
    const Matrix w = testing::random_matrix(12, 16, rng);
    const model::SampleContext ctx{DataKind::grid, GridSpec{4, 4}, nullptr};
    CHECK(model::predict(back, w, ctx) == model::predict(st, w, ctx));

    // Saving the reloaded state reproduces the file byte for byte.
    checkpoint::save(back, dir / "again.ckpt");
    CHECK(read_bytes(dir / "m.ckpt") == read_bytes(dir / "again.ckpt"));
  }

  TEST_CASE("corrupt files are rejected") {
    const auto dir = testing::scratch_dir("checkpoint-corrupt");
    const model::ModelState st = model::init_model(testing::tiny_patch(), testing::tiny_model(), testing::tiny_task(), 1);
    checkpoint::save(st, dir / "m.ckpt");
    const std::string good = read_bytes(dir / "m.ckpt");

    auto code_of = [&](const std::string& bytes) {
      write_bytes(dir / "bad.ckpt", bytes);
      try {
        checkpoint::load(dir / "bad.ckpt");
      } catch (const Error& e) {
        return e.code();
      }
      FAIL("corrupt checkpoint loaded");
      return ErrorCode::invalid_argument;
    };

    std::string magic = good;
    magic[0] = 'X';
    CHECK(code_of(magic) == ErrorCode::parse_error);
    CHECK(code_of(good.substr(0, 12)) == ErrorCode::parse_error);
    CHECK(code_of(good.substr(0, good.size() - 4)) == ErrorCode::parse_error);
    std::string header = good;
    header[16] = '#';  // first byte of the JSON header
    CHECK(code_of(header) == ErrorCode::parse_error);
    CHECK_THROWS_AS(checkpoint::load(dir / "absent.ckpt"), Error);
  }
}
