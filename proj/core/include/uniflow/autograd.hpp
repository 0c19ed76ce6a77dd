#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace uniflow {
class Rng;
}

namespace uniflow::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recording of a computation.
///
/// Nodes are appended in evaluation order, so the reverse of insertion order
/// is a valid topological order for backpropagation. A tape built with
/// requires_grad = false records values only (inference mode).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool requires_grad = true) : requires_grad_(requires_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool requires_grad() const { return requires_grad_; }

  Var constant(Matrix value);
  /// Leaf whose gradient is added into *grad_sink during backward. A null
  /// sink makes it a constant.
  Var leaf(Matrix value, Matrix* grad_sink);

  /// Runs backpropagation from a 1x1 root.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient of a node; zero-sized until something flowed into it.
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  /// Adds delta into the gradient of node id (allocating zeros on first use).
  template <typename Expr>
  void accumulate(int id, const Expr& delta) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Records an op result. `fn` is kept only when some input needs grad.
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool needs_grad = false;
  };
  bool requires_grad_;
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops. All inputs must live on the same tape.

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
Var relu(Var a);
/// tanh approximation.
Var gelu(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var sum_all(Var a);
Var mean_all(Var a);
Var slice_rows(Var a, Index begin, Index count);
Var concat_rows(std::span<const Var> parts);
/// 1 x n mean over rows.
Var mean_rows(Var a);
/// Repeats a 1 x n row m times.
Var broadcast_rows(Var row, Index m);
/// Rows of `table` picked by index (repeats allowed).
Var gather_rows(Var table, std::span<const Index> rows);
/// Output row r is the mean of input rows groups[r].
Var pool_rows(Var a, const std::vector<std::vector<Index>>& groups);
/// out(flat map[i]) = a(flat i); untouched output entries are zero. The map
/// must be injective.
Var scatter_flat(Var a, std::span<const Index> map, Index out_rows, Index out_cols);

/// Magnitude spectrum along the temporal-block axis. Row r = b * units + s of
/// `a` holds block b of spatial unit s. For every (s, channel) the real FFT
/// over b is taken and |X_k| written to row k * units + s for
/// k <= blocks / 2; the remaining rows are zero padding.
Var fft_magnitude(Var a, Index blocks, Index units);

/// Scaled dot-product attention split over `heads` column groups. When
/// `probs` is non-null the per-head attention matrices are appended to it.
Var multihead_attention(Var q, Var k, Var v, int heads, std::vector<Matrix>* probs = nullptr);

/// Inverted dropout; identity when p == 0.
Var dropout(Var a, double p, Rng& rng);

/// Mean squared error over rows [row_begin, row_end) only; other rows of
/// `pred` are never read.
Var rows_mse(Var pred, const Matrix& target, Index row_begin, Index row_end);

// Plain helpers shared with inspection code.
Matrix softmax_rows(const Matrix& a);

}  // namespace uniflow::ad
