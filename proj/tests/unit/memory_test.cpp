#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "uniflow/error.hpp"
#include "uniflow/eval.hpp"
#include "uniflow/memory.hpp"
#include "uniflow/model.hpp"
#include "uniflow/train.hpp"

using namespace uniflow;
using namespace uniflow::mra;
using ad::Matrix;

namespace {

model::ModelState tiny_state(std::uint64_t seed = 1) {
  return model::init_model(testing::tiny_patch(), testing::tiny_model(), testing::tiny_task(), seed);
}

model::SampleContext grid_ctx() { return {DataKind::grid, GridSpec{4, 4}, nullptr}; }

/// Runs query formulation and retrieval on random history rows.
struct Probe {
  ad::Tape tape{false};
  nn::Binder bind;
  patching::PatchLayout layout{3, 4, 2};
  QueryBundle q;
  AdaptiveAdjacency adj;
  PromptBundle prompts;

  Probe(const model::ModelState& st, const Matrix& s_h, BankSet banks = BankSet::all()) : bind(tape, st.params) {
    auto [qq, aa] = formulate_queries(bind, st.index.mra, tape.constant(s_h), layout, 2);
    q = qq;
    adj = aa;
    prompts = retrieve_all(bind, st.index.mra, q, banks);
  }
};

void check_simplex(const Matrix& m) {
  for (ad::Index r = 0; r < m.rows(); ++r) {
    CHECK(std::abs(m.row(r).sum() - 1.0) <= 1e-6);
    CHECK(m.row(r).minCoeff() >= 0.0);
  }
}

}  // namespace

TEST_SUITE("memory") {
  TEST_CASE("queries and adjacency shapes and simplex rows") {
    const model::ModelState st = tiny_state();
    Rng rng(1);
    Probe p(st, testing::random_matrix(8, 8, rng, -1.0, 1.0));
    for (auto k : {BankKind::time, BankKind::freq, BankKind::time_spatial, BankKind::freq_spatial}) {
      CHECK(p.q[k].rows() == 8);
      CHECK(p.q[k].cols() == 8);
      CHECK(p.q[k].value().allFinite());
    }
    check_simplex(p.adj.time.value());
    check_simplex(p.adj.freq.value());
    for (const auto& b : p.prompts.banks) {
      CHECK(b.weights.rows() == 8);
      CHECK(b.weights.cols() == 8);
      check_simplex(b.weights.value());
    }
    ad::Tape tape(false);
    nn::Binder bind(tape, st.params);
    CHECK_THROWS_AS(formulate_queries(bind, st.index.mra, tape.constant(Matrix(0, 8)), {1, 0, 0}, 2), Error);
  }

  TEST_CASE("identical history rows give a uniform time adjacency") {
    const model::ModelState st = tiny_state(2);
    Rng rng(2);
    const Matrix row = testing::random_matrix(1, 8, rng, -1.0, 1.0);
    Probe p(st, row.replicate(8, 1));
    const Matrix& a = p.adj.time.value();
    for (ad::Index i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
  }

  TEST_CASE("constant-in-time history has a DC-only spectrum") {
    Rng rng(3);
    const Matrix unit_rows = testing::random_matrix(4, 8, rng, -1.0, 1.0);
    ad::Tape tape(false);
    const Matrix spectrum = ad::fft_magnitude(tape.constant(unit_rows.replicate(6, 1)), 6, 4).value();
    for (ad::Index r = 0; r < 4; ++r)
      for (ad::Index c = 0; c < 8; ++c) CHECK(spectrum(r, c) == doctest::Approx(6.0 * std::abs(unit_rows(r, c))));
    CHECK(spectrum.bottomRows(20).cwiseAbs().maxCoeff() <= 1e-6);
  }

  TEST_CASE("retrieval weights and prompts") {
    Rng rng(4);
    ad::Tape tape(false);
    const Matrix q = testing::random_matrix(5, 8, rng, -1.0, 1.0);
    const Matrix values = testing::random_matrix(6, 8, rng, -1.0, 1.0);

    const Matrix same_keys = testing::random_matrix(1, 8, rng).replicate(6, 1);
    Retrieval r = retrieve(tape.constant(q), tape.constant(same_keys), tape.constant(values));
    for (ad::Index i = 0; i < r.weights.value().size(); ++i)
      CHECK(r.weights.value().data()[i] == doctest::Approx(1.0 / 6.0));
    for (ad::Index i = 0; i < 5; ++i) CHECK((r.prompt.value().row(i) - values.colwise().mean()).norm() <= 1e-12);

    // Key 2 scores 20 above every other key for query row 0.
    Matrix keys = Matrix::Zero(6, 8);
    Matrix q1 = Matrix::Zero(1, 8);
    q1(0, 0) = 1.0;
    keys(2, 0) = 20.0;
    r = retrieve(tape.constant(q1), tape.constant(keys), tape.constant(values));
    CHECK(r.weights.value()(0, 2) > 0.999);

    r = retrieve(tape.constant(q), tape.constant(testing::random_matrix(6, 8, rng, -3.0, 3.0)), tape.constant(values));
    check_simplex(r.weights.value());
    CHECK((r.prompt.value() - r.weights.value() * values).norm() <= 1e-12);
    CHECK_THROWS_AS(retrieve(tape.constant(q), tape.constant(Matrix::Zero(6, 4)), tape.constant(values)), Error);
  }

  TEST_CASE("augmentation") {
    model::ModelState st = tiny_state(5);
    Rng rng(5);
    const Matrix s_h = testing::random_matrix(8, 8, rng, -1.0, 1.0);
    const Matrix z = testing::random_matrix(12, 8, rng, -1.0, 1.0);

    SUBCASE("zero-valued memories are the identity") {
      for (auto v : st.index.mra.values) st.params[v].value.setZero();
      Probe p(st, s_h);
      CHECK(augment(p.tape.constant(z), p.prompts, p.layout).value() == z);
    }

    SUBCASE("no enabled bank is the identity") {
      Probe p(st, s_h, BankSet::none());
      CHECK(augment(p.tape.constant(z), p.prompts, p.layout).value() == z);
    }

    SUBCASE("row displacement is bounded by the value-row norms") {
      Probe p(st, s_h);
      double bound = 0.0;
      for (auto v : st.index.mra.values) bound += st.params[v].value.rowwise().norm().maxCoeff();
      const Matrix out = augment(p.tape.constant(z), p.prompts, p.layout).value();
      for (ad::Index r = 0; r < 12; ++r) CHECK((out.row(r) - z.row(r)).norm() <= bound + 1e-12);
    }

    SUBCASE("dropping a bank removes exactly its prompt") {
      Probe full(st, s_h);
      const Matrix with = augment(full.tape.constant(z), full.prompts, full.layout).value();
      for (std::size_t b = 0; b < kBankCount; ++b) {
        Probe less(st, s_h, BankSet::without(bank_from_index(b)));
        const Matrix without = augment(less.tape.constant(z), less.prompts, less.layout).value();
        const Matrix& prompt = full.prompts.banks[b].prompt.value();
        const Matrix diff = with - without;
        CHECK((diff.topRows(8) - prompt).cwiseAbs().maxCoeff() <= 1e-6);
        // Future rows of unit s carry the mean prompt of unit s's history rows.
        for (std::size_t i = 8; i < 12; ++i) {
          const std::size_t unit = full.layout.unit_of(i);
          const Matrix expected = 0.5 * (prompt.row(static_cast<ad::Index>(unit)) +
                                         prompt.row(static_cast<ad::Index>(4 + unit)));
          CHECK((diff.row(static_cast<ad::Index>(i)) - expected).cwiseAbs().maxCoeff() <= 1e-6);
        }
      }
    }
  }

  TEST_CASE("prompts depend on history only") {
    const model::ModelState st = tiny_state(6);
    Rng rng(6);
    const Matrix w = testing::random_matrix(12, 16, rng);
    Matrix wp = w;
    wp.bottomRows(4) = testing::random_matrix(4, 16, rng, 5.0, 9.0);
    auto prompts_of = [&](const Matrix& window) {
      ad::Tape tape(false);
      nn::Binder bind(tape, st.params);
      model::ForwardTrace trace;
      model::forward(bind, st, window, grid_ctx(), {}, &trace);
      std::vector<Matrix> out;
      for (const auto& b : trace.prompts->banks) {
        out.push_back(b.prompt.value());
        out.push_back(b.weights.value());
      }
      return out;
    };
    CHECK(prompts_of(w) == prompts_of(wp));
  }

  TEST_CASE("without memory, query formulation is skipped") {
    model::ModelConfig c = testing::tiny_model();
    c.banks = BankSet::none();
    const model::ModelState st = model::init_model(testing::tiny_patch(), c, testing::tiny_task(), 7);
    Rng rng(7);
    ad::Tape tape(false);
    nn::Binder bind(tape, st.params);
    model::ForwardTrace trace;
    model::forward(bind, st, testing::random_matrix(12, 16, rng), grid_ctx(), {}, &trace);
    CHECK_FALSE(trace.queries.has_value());
    CHECK_FALSE(trace.prompts.has_value());
  }

  TEST_CASE("gradients reach every enabled bank") {
    const FlowDataset raw = testing::tiny_grid(8);
    const auto ds = train::prepare(raw, testing::tiny_patch(), testing::tiny_task());
    for (const BankSet banks : {BankSet::all(), BankSet::without(BankKind::freq)}) {
      model::ModelConfig c = testing::tiny_model();
      c.banks = banks;
      const model::ModelState st = model::init_model(testing::tiny_patch(), c, testing::tiny_task(), 8);
      const train::Sample batch[] = {{&ds, ds.train_starts[0], 0}, {&ds, ds.train_starts[7], 0}};
      nn::Gradients g;
      train::batch_gradient(st, batch, g, true, 1);
      for (std::size_t b = 0; b < kBankCount; ++b) {
        const bool on = banks.enabled[b];
        CHECK((g.norm(st.index.mra.keys[b]) > 0.0) == on);
        CHECK((g.norm(st.index.mra.values[b]) > 0.0) == on);
      }
    }
  }

  TEST_CASE("retrieval signatures") {
    const model::ModelState st = tiny_state(9);
    Rng rng(9);
    const Matrix w = testing::random_matrix(12, 16, rng);
    const Eigen::VectorXd sig = model::retrieval_signature(st, w, grid_ctx());
    CHECK(sig.size() == 4 * 8);
    for (std::size_t b = 0; b < kBankCount; ++b)
      CHECK(sig.segment(static_cast<ad::Index>(b) * 8, 8).sum() == doctest::Approx(1.0));
    CHECK(eval::cosine_similarity(sig, sig) == doctest::Approx(1.0));
    CHECK(eval::cosine_similarity(sig, -sig) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(eval::cosine_similarity(sig, Eigen::VectorXd::Zero(sig.size())), Error);

    // Signatures are read from every bank even when augmentation is ablated.
    model::ModelState ablated = st;
    ablated.config.banks = BankSet::none();
    CHECK(model::retrieval_signature(ablated, w, grid_ctx()) == sig);
  }

  TEST_CASE("default signature length is four banks of 512 units") {
    patching::PatchConfig p;
    const model::ModelState st = model::init_model(p, model::ModelConfig{}, {12, 12}, 0);
    Rng rng(10);
    const auto sig = model::retrieval_signature(st, testing::random_matrix(24, 16, rng), grid_ctx());
    CHECK(sig.size() == 2048);
  }

  TEST_CASE("shared periodic patterns retrieve alike") {
    // Two phase-shifted copies of one daily pattern versus the pattern and
    // white noise, averaged over seeds.
    double shifted = 0.0, noise = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const model::ModelState st = tiny_state(100 + seed);
      Rng rng(seed);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      auto pattern = [&](double shift) {
        Matrix m(12, 16);
        for (ad::Index t = 0; t < 12; ++t)
          for (ad::Index n = 0; n < 16; ++n)
            m(t, n) = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 6.0 + phase + shift +
                                           0.2 * static_cast<double>(n));
        return m;
      };
      const Matrix a = pattern(0.0), b = pattern(0.3);
      const Matrix n = testing::random_matrix(12, 16, rng);
      shifted += eval::case_study(st, a, b, grid_ctx());
      noise += eval::case_study(st, a, n, grid_ctx());
    }
    CHECK(shifted > noise);
  }
}
