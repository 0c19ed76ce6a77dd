#include <doctest.h>

#include <cmath>
#include <functional>

#include "support.hpp"
#include "uniflow/autograd.hpp"
#include "uniflow/params.hpp"

using namespace uniflow;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

using Fn = std::function<Var(Tape&, std::vector<Var>&)>;

/// Contracts the op output with a fixed random weight so every output entry
/// carries a distinct upstream gradient.
double run(const Fn& fn, const std::vector<Matrix>& inputs, std::vector<Matrix>* grads) {
  Tape tape(grads != nullptr);
  std::vector<Var> leaves;
  if (grads) grads->assign(inputs.size(), Matrix());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (grads) (*grads)[i] = Matrix::Zero(inputs[i].rows(), inputs[i].cols());
    leaves.push_back(tape.leaf(inputs[i], grads ? &(*grads)[i] : nullptr));
  }
  Var out = fn(tape, leaves);
  Rng rng(99);
  const Matrix w = testing::random_matrix(out.rows(), out.cols(), rng, -1.0, 1.0);
  Var loss = ad::sum_all(ad::mul(out, tape.constant(w)));
  if (grads) tape.backward(loss);
  return loss.value()(0, 0);
}

void gradcheck(const Fn& fn, std::vector<Matrix> inputs, double tol = 1e-6) {
  std::vector<Matrix> analytic;
  run(fn, inputs, &analytic);
  const double h = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (ad::Index e = 0; e < inputs[i].size(); ++e) {
      const double saved = inputs[i].data()[e];
      inputs[i].data()[e] = saved + h;
      const double up = run(fn, inputs, nullptr);
      inputs[i].data()[e] = saved - h;
      const double down = run(fn, inputs, nullptr);
      inputs[i].data()[e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].data()[e];
      INFO("input " << i << " entry " << e);
      CHECK(std::abs(a - numeric) <= tol * std::max(1.0, std::abs(numeric)));
    }
  }
}

Matrix rnd(ad::Index r, ad::Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return testing::random_matrix(r, c, rng, lo, hi);
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("elementwise and linear ops") {
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }, {rnd(3, 4, 1), rnd(4, 5, 2)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::matmul_nt(v[0], v[1]); }, {rnd(3, 4, 3), rnd(5, 4, 4)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::add(v[0], v[1]); }, {rnd(2, 3, 5), rnd(2, 3, 6)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::sub(v[0], v[1]); }, {rnd(2, 3, 7), rnd(2, 3, 8)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::mul(v[0], v[1]); }, {rnd(2, 3, 9), rnd(2, 3, 10)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::scale(v[0], -2.5); }, {rnd(2, 3, 11)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::add_row(v[0], v[1]); }, {rnd(4, 3, 12), rnd(1, 3, 13)});
    // Entries kept away from the kink at zero.
    Matrix r = rnd(3, 4, 14, 0.1, 1.0);
    r(0, 0) = -0.5;
    r(1, 2) = -0.2;
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::relu(v[0]); }, {r});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::gelu(v[0]); }, {rnd(3, 4, 15, -3.0, 3.0)});
  }

  TEST_CASE("normalizing ops") {
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::softmax_rows(v[0]); }, {rnd(3, 5, 16, -3.0, 3.0)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::layer_norm(v[0], v[1], v[2]); },
              {rnd(4, 6, 17, -2.0, 2.0), rnd(1, 6, 18), rnd(1, 6, 19)}, 1e-5);
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::rows_mse(v[0], rnd(5, 3, 21), 2, 5); }, {rnd(5, 3, 20)});
  }

  TEST_CASE("reductions and row plumbing") {
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::sum_all(v[0]); }, {rnd(2, 3, 22)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::mean_all(v[0]); }, {rnd(2, 3, 23)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::slice_rows(v[0], 1, 2); }, {rnd(4, 3, 24)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::concat_rows(v); }, {rnd(2, 3, 25), rnd(1, 3, 26)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::mean_rows(v[0]); }, {rnd(4, 3, 27)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::broadcast_rows(v[0], 4); }, {rnd(1, 3, 28)});
    gradcheck(
        [](Tape&, std::vector<Var>& v) {
          const std::vector<ad::Index> rows{2, 0, 2, 1};
          return ad::gather_rows(v[0], rows);
        },
        {rnd(3, 2, 29)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::pool_rows(v[0], {{0, 1}, {2}, {1, 2, 3}}); },
              {rnd(4, 2, 30)});
    gradcheck(
        [](Tape&, std::vector<Var>& v) {
          const std::vector<ad::Index> map{5, 0, 3, 1};
          return ad::scatter_flat(v[0], map, 2, 3);
        },
        {rnd(2, 2, 31)});
  }

  TEST_CASE("spectral magnitude and attention") {
    // Positive inputs keep every magnitude away from zero.
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::fft_magnitude(v[0], 5, 2); }, {rnd(10, 3, 32, 0.2, 1.0)});
    gradcheck([](Tape&, std::vector<Var>& v) { return ad::multihead_attention(v[0], v[1], v[2], 2); },
              {rnd(3, 4, 33), rnd(5, 4, 34), rnd(5, 4, 35)});
  }

  TEST_CASE("fft magnitude layout") {
    // Row b * units + s holds block b of unit s.
    Tape tape(false);
    Matrix a(6, 1);
    a << 1, 10, 2, 20, 3, 30;  // blocks = 3, units = 2
    const Matrix m = ad::fft_magnitude(tape.constant(a), 3, 2).value();
    CHECK(m(0, 0) == doctest::Approx(6.0));
    CHECK(m(1, 0) == doctest::Approx(60.0));
    CHECK(m(2, 0) == doctest::Approx(std::sqrt(3.0)));
    CHECK(m(3, 0) == doctest::Approx(10.0 * std::sqrt(3.0)));
    CHECK(m(4, 0) == 0.0);
    CHECK(m(5, 0) == 0.0);
  }

  TEST_CASE("dropout is identity at p = 0 and unbiased otherwise") {
    Tape tape(false);
    Rng rng(1);
    const Matrix x = Matrix::Constant(100, 100, 2.0);
    CHECK(ad::dropout(tape.constant(x), 0.0, rng).value() == x);
    const Matrix y = ad::dropout(tape.constant(x), 0.25, rng).value();
    CHECK(y.mean() == doctest::Approx(2.0).epsilon(0.02));
    for (ad::Index i = 0; i < y.size(); ++i) CHECK((y.data()[i] == 0.0 || std::abs(y.data()[i] - 2.0 / 0.75) < 1e-12));
  }

  TEST_CASE("inference tapes record no gradients") {
    Tape tape(false);
    Matrix sink = Matrix::Zero(2, 2);
    Var x = tape.leaf(rnd(2, 2, 40), &sink);
    CHECK_FALSE(tape.needs_grad(x.id()));
  }

  TEST_CASE("adam with zero learning rate is a no-op") {
    nn::ParamStore store;
    Rng rng(2);
    store.add("w", nn::normal_matrix(3, 3, 1.0, rng));
    store.round_to_f32();
    const Matrix before = store[0].value;
    nn::Adam adam(store);
    nn::Gradients g(1);
    g.grads[0] = rnd(3, 3, 41);
    adam.step(store, g, 0.0);
    CHECK(store[0].value == before);
    adam.step(store, g, 1e-2);
    CHECK(store[0].value != before);
    for (ad::Index i = 0; i < 9; ++i)
      CHECK(static_cast<double>(static_cast<float>(store[0].value.data()[i])) == store[0].value.data()[i]);
  }
}
