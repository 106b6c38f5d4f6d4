#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace krew::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// holds the node.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  // 1x1 value as a double.
  double scalar() const { return value()(0, 0); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  MatMul,
  Transpose,
  Exp,
  Log,
  Tanh,
  Sqrt,
  MaskMul,
  BroadcastTo,
  SumTo,
  Reshape,
  SliceCols,
  PadCols,
  ConcatCols,
  SegSum,
};

// Column groups for SegSum: every column appears in exactly one group.
using Segments = std::vector<std::vector<int>>;

struct Node {
  Op op = Op::Leaf;
  Matrix value;
  int a = -1;
  int b = -1;
  bool requires_grad = false;
  double scalar = 0.0;
  Eigen::Index i0 = 0;  // op-specific: start column / original rows
  Eigen::Index i1 = 0;  // op-specific: width / original cols
  std::shared_ptr<const Matrix> mask;
  std::shared_ptr<const Segments> segments;
};

// Reverse-mode differentiation over a recorded graph of matrix operations.
// Backward rules are expressed with the same recorded operations, so the
// gradients returned by gradients() are themselves differentiable
// (double backprop).
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }
  // Drops every node recorded after the first n.
  void truncate(std::size_t n) { nodes_.resize(n); }

  // d(sum(seed .* output)) / d(input) for each input; seed defaults to ones.
  // Results are recorded on the tape.
  std::vector<Var> gradients(Var output, std::span<const Var> inputs, const Matrix* seed = nullptr);
  // First-order convenience: gradient values only; the backward graph is
  // discarded afterwards.
  std::vector<Matrix> gradient_values(Var output, std::span<const Var> inputs);

  Var record(Node node);

 private:
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->node(id_).value; }
inline bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sqrt(Var a);
// Elementwise product with a constant; mask is rows x cols or 1 x cols.
Var mask_mul(Var a, std::shared_ptr<const Matrix> mask);
Var mask_mul(Var a, const Matrix& mask);
// From 1x1, 1xc or rx1 to rows x cols.
Var broadcast_to(Var a, Eigen::Index rows, Eigen::Index cols);
// Reduction to 1x1, 1xc or rx1 by summation.
Var sum_to(Var a, Eigen::Index rows, Eigen::Index cols);
// Row-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index width);
// Places a into columns [start, start + a.cols) of a zero matrix.
Var pad_cols(Var a, Eigen::Index start, Eigen::Index total);
Var concat_cols(Var a, Var b);
// Each entry replaced by the row-wise sum over its column group.
Var seg_sum(Var a, std::shared_ptr<const Segments> segments);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

inline Var sum(Var a) { return sum_to(a, 1, 1); }
Var mean(Var a);
// 1 x cols mean over rows.
Var col_mean(Var a);
Var square(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);

// Per-row maximum over each column group, written to every column of the
// group. Used as a constant shift for softmax.
Matrix segment_max(const Matrix& x, const Segments& segments);

}  // namespace krew::ad
