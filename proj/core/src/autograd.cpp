#include "uniflow/autograd.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "uniflow/error.hpp"
#include "uniflow/fft.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Matrix value, Matrix* grad_sink) {
  if (!requires_grad_ || grad_sink == nullptr) return constant(std::move(value));
  Node n{std::move(value), {}, {}, true};
  n.backward = [grad_sink](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (grad_sink->size() == 0) {
      *grad_sink = g;
    } else {
      *grad_sink += g;
    }
  };
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (requires_grad_) {
    for (const Var& v : inputs) needs |= nodes_[static_cast<std::size_t>(v.id())].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(Var root) {
  require(root.tape() == this, ErrorCode::invalid_argument, "root belongs to another tape");
  require(root.rows() == 1 && root.cols() == 1, ErrorCode::shape_mismatch, "backward needs a scalar root");
  if (!needs_grad(root.id())) return;
  nodes_[static_cast<std::size_t>(root.id())].grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::shape_mismatch,
          std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), ErrorCode::shape_mismatch, "matmul inner dimension mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.cols() == b.cols(), ErrorCode::shape_mismatch, "matmul_nt inner dimension mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value().transpose();
  return t.push(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.needs_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  return t.push(a.value() + b.value(), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  return t.push(a.value() - b.value(), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value() * s, {a}, [ia = a.id(), s](Tape& t, int self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::shape_mismatch, "add_row shape mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {a, row}, [ia = a.id(), ir = row.id()](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  return t.push(a.value().cwiseMax(0.0), {a}, [ia = a.id()](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, t.grad(self).cwiseProduct((x.array() > 0.0).cast<double>().matrix()));
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
  return t.push(std::move(out), {a}, [ia = a.id()](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix d = x.unaryExpr([](double v) {
      const double u = kGeluC * (v + kGeluA * v * v * v);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    });
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const double m = a.row(r).maxCoeff();
    out.row(r) = (a.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

namespace {
// dS = P o (dP - rowsum(dP o P))
Matrix softmax_backward(const Matrix& p, const Matrix& g) {
  Eigen::VectorXd dot = g.cwiseProduct(p).rowwise().sum();
  return p.cwiseProduct(g - dot.replicate(1, g.cols()));
}
}  // namespace

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  Matrix out = softmax_rows(a.value());
  return t.push(std::move(out), {a}, [ia = a.id()](Tape& t, int self) {
    t.accumulate(ia, softmax_backward(t.value(self), t.grad(self)));
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
          ErrorCode::shape_mismatch, "layer_norm parameter shape mismatch");
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  const Index n = xv.cols();
  Eigen::VectorXd mean = xv.rowwise().mean();
  Matrix xc = xv - mean.replicate(1, n);
  Eigen::VectorXd inv_std = ((xc.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt();
  Matrix xhat = xc.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return t.push(std::move(out), {x, gain, bias},
                [ix = x.id(), ig = gain.id(), ib = bias.id(), xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                  if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
                  if (t.needs_grad(ix)) {
                    const double n = static_cast<double>(g.cols());
                    Matrix gh = g.array().rowwise() * t.value(ig).row(0).array();
                    Eigen::VectorXd s1 = gh.rowwise().sum();
                    Eigen::VectorXd s2 = gh.cwiseProduct(xhat).rowwise().sum();
                    Matrix dx = (n * gh.array() - s1.replicate(1, g.cols()).array() -
                                 xhat.array().colwise() * s2.array());
                    dx.array().colwise() *= inv_std.array() / n;
                    t.accumulate(ix, dx);
                  }
                });
}

Var sum_all(Var a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {a}, [ia = a.id()](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

Var slice_rows(Var a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), ErrorCode::out_of_range, "slice_rows out of range");
  Tape& t = *a.tape();
  Matrix out = a.value().middleRows(begin, count);
  return t.push(std::move(out), {a}, [ia = a.id(), begin, count](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    d.middleRows(begin, count) = t.grad(self);
    t.accumulate(ia, d);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::invalid_argument, "concat_rows of nothing");
  Tape& t = *parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, ErrorCode::shape_mismatch, "concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), r);
    r += p.rows();
  }
  return t.push(std::move(out), parts, [spans = std::move(spans)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (auto [id, start] : spans) {
      if (t.needs_grad(id)) t.accumulate(id, g.middleRows(start, t.value(id).rows()));
    }
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().colwise().mean();
  return t.push(std::move(out), {a}, [ia = a.id()](Tape& t, int self) {
    const Index m = t.value(ia).rows();
    t.accumulate(ia, (t.grad(self) / static_cast<double>(m)).replicate(m, 1));
  });
}

Var broadcast_rows(Var row, Index m) {
  require(row.rows() == 1, ErrorCode::shape_mismatch, "broadcast_rows needs a single row");
  Tape& t = *row.tape();
  Matrix out = row.value().replicate(m, 1);
  return t.push(std::move(out), {row}, [ir = row.id()](Tape& t, int self) {
    t.accumulate(ir, t.grad(self).colwise().sum());
  });
}

Var gather_rows(Var table, std::span<const Index> rows) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  Matrix out(static_cast<Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < tv.rows(), ErrorCode::out_of_range, "gather_rows index out of range");
    out.row(static_cast<Index>(i)) = tv.row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return t.push(std::move(out), {table}, [it = table.id(), idx = std::move(idx)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& tv = t.value(it);
    Matrix d = Matrix::Zero(tv.rows(), tv.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(it, d);
  });
}

Var pool_rows(Var a, const std::vector<std::vector<Index>>& groups) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  Matrix out = Matrix::Zero(static_cast<Index>(groups.size()), av.cols());
  for (std::size_t r = 0; r < groups.size(); ++r) {
    require(!groups[r].empty(), ErrorCode::invalid_argument, "pool_rows with an empty group");
    for (Index i : groups[r]) out.row(static_cast<Index>(r)) += av.row(i);
    out.row(static_cast<Index>(r)) /= static_cast<double>(groups[r].size());
  }
  return t.push(std::move(out), {a}, [ia = a.id(), groups](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(ia);
    Matrix d = Matrix::Zero(av.rows(), av.cols());
    for (std::size_t r = 0; r < groups.size(); ++r) {
      const double w = 1.0 / static_cast<double>(groups[r].size());
      for (Index i : groups[r]) d.row(i) += w * g.row(static_cast<Index>(r));
    }
    t.accumulate(ia, d);
  });
}

Var scatter_flat(Var a, std::span<const Index> map, Index out_rows, Index out_cols) {
  const Matrix& av = a.value();
  require(static_cast<Index>(map.size()) == av.size(), ErrorCode::shape_mismatch, "scatter_flat map size mismatch");
  Tape& t = *a.tape();
  Matrix out = Matrix::Zero(out_rows, out_cols);
  const double* src = av.data();
  double* dst = out.data();
  for (std::size_t i = 0; i < map.size(); ++i) {
    require(map[i] >= 0 && map[i] < out.size(), ErrorCode::out_of_range, "scatter_flat index out of range");
    dst[map[i]] = src[i];
  }
  std::vector<Index> m(map.begin(), map.end());
  return t.push(std::move(out), {a}, [ia = a.id(), m = std::move(m)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(ia);
    Matrix d(av.rows(), av.cols());
    for (std::size_t i = 0; i < m.size(); ++i) d.data()[i] = g.data()[m[i]];
    t.accumulate(ia, d);
  });
}

Var fft_magnitude(Var a, Index blocks, Index units) {
  const Matrix& av = a.value();
  require(blocks >= 1 && units >= 1 && av.rows() == blocks * units, ErrorCode::shape_mismatch,
          "fft_magnitude: rows must equal blocks * units");
  Tape& t = *a.tape();
  const Index cols = av.cols();
  const Index bins = blocks / 2 + 1;
  Matrix out = Matrix::Zero(av.rows(), cols);
  // Complex spectra kept for the backward pass: [s][c][k].
  std::vector<fft::Complex> spectra(static_cast<std::size_t>(units * cols * bins));
  std::vector<double> series(static_cast<std::size_t>(blocks));
  for (Index s = 0; s < units; ++s) {
    for (Index c = 0; c < cols; ++c) {
      for (Index b = 0; b < blocks; ++b) series[static_cast<std::size_t>(b)] = av(b * units + s, c);
      const auto spec = fft::rfft(series);
      for (Index k = 0; k < bins; ++k) {
        spectra[static_cast<std::size_t>((s * cols + c) * bins + k)] = spec[static_cast<std::size_t>(k)];
        out(k * units + s, c) = std::abs(spec[static_cast<std::size_t>(k)]);
      }
    }
  }
  return t.push(std::move(out), {a},
                [ia = a.id(), blocks, units, cols, bins, spectra = std::move(spectra)](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  Matrix d(blocks * units, cols);
                  std::vector<fft::Complex> buf(static_cast<std::size_t>(blocks));
                  for (Index s = 0; s < units; ++s) {
                    for (Index c = 0; c < cols; ++c) {
                      // d|X_k|/dx_b = Re(X_k e^{+2 pi i k b / n}) / |X_k|, an inverse DFT.
                      std::fill(buf.begin(), buf.end(), fft::Complex{});
                      for (Index k = 0; k < bins; ++k) {
                        const fft::Complex x = spectra[static_cast<std::size_t>((s * cols + c) * bins + k)];
                        const double mag = std::abs(x);
                        if (mag > 1e-12) buf[static_cast<std::size_t>(k)] = x * (g(k * units + s, c) / mag);
                      }
                      fft::inverse_unnormalized(buf);
                      for (Index b = 0; b < blocks; ++b) d(b * units + s, c) = buf[static_cast<std::size_t>(b)].real();
                    }
                  }
                  t.accumulate(ia, d);
                });
}

Var multihead_attention(Var q, Var k, Var v, int heads, std::vector<Matrix>* probs) {
  const Index d = q.cols();
  require(heads >= 1 && d % heads == 0, ErrorCode::invalid_argument, "heads must divide the model width");
  require(k.cols() == d && v.cols() == d && k.rows() == v.rows(), ErrorCode::shape_mismatch,
          "attention operand shapes disagree");
  Tape& t = *q.tape();
  const Index dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out(qv.rows(), d);
  std::vector<Matrix> p(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Matrix s = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * sc;
    p[static_cast<std::size_t>(h)] = softmax_rows(s);
    out.middleCols(h * dh, dh) = p[static_cast<std::size_t>(h)] * vv.middleCols(h * dh, dh);
  }
  if (probs) probs->insert(probs->end(), p.begin(), p.end());
  return t.push(std::move(out), {q, k, v},
                [iq = q.id(), ik = k.id(), iv = v.id(), heads, dh, sc, p = std::move(p)](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  const Matrix& qv = t.value(iq);
                  const Matrix& kv = t.value(ik);
                  const Matrix& vv = t.value(iv);
                  Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
                  Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
                  Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
                  for (int h = 0; h < heads; ++h) {
                    const Matrix& ph = p[static_cast<std::size_t>(h)];
                    Matrix gh = g.middleCols(h * dh, dh);
                    Matrix dp = gh * vv.middleCols(h * dh, dh).transpose();
                    dv.middleCols(h * dh, dh).noalias() += ph.transpose() * gh;
                    Matrix ds = softmax_backward(ph, dp) * sc;
                    dq.middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
                    dk.middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
                  }
                  t.accumulate(iq, dq);
                  t.accumulate(ik, dk);
                  t.accumulate(iv, dv);
                });
}

Var dropout(Var a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  Matrix mask(av.rows(), av.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  Matrix out = av.cwiseProduct(mask);
  return t.push(std::move(out), {a}, [ia = a.id(), mask = std::move(mask)](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(mask));
  });
}

Var rows_mse(Var pred, const Matrix& target, Index row_begin, Index row_end) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorCode::shape_mismatch,
          "rows_mse shape mismatch");
  require(row_begin >= 0 && row_begin < row_end && row_end <= pred.rows(), ErrorCode::out_of_range,
          "rows_mse row range invalid");
  Tape& t = *pred.tape();
  const Index count = row_end - row_begin;
  Matrix diff = pred.value().middleRows(row_begin, count) - target.middleRows(row_begin, count);
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return t.push(std::move(out), {pred},
                [ip = pred.id(), row_begin, count, n, diff = std::move(diff)](Tape& t, int self) {
                  const Matrix& pv = t.value(ip);
                  Matrix d = Matrix::Zero(pv.rows(), pv.cols());
                  d.middleRows(row_begin, count) = diff * (2.0 * t.grad(self)(0, 0) / n);
                  t.accumulate(ip, d);
                });
}

}  // namespace uniflow::ad
