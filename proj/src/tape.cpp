#include "krew/ctgan/tape.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "krew/error.hpp"

namespace krew::ad {

namespace {

Tape& tape_of(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("invalid Var");
  if (&a.tape() != &b.tape()) throw std::invalid_argument("Vars belong to different tapes");
  return a.tape();
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Node make(Op op, Matrix value, Var a, Var b = Var{}) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.a = a.id();
  n.b = b.valid() ? b.id() : -1;
  n.requires_grad = a.requires_grad() || (b.valid() && b.requires_grad());
  return n;
}

bool same_shape(const Matrix& x, const Matrix& y) {
  return x.rows() == y.rows() && x.cols() == y.cols();
}

// Brings a and b to a common shape by broadcasting the smaller operand.
void align(Var& a, Var& b) {
  if (same_shape(a.value(), b.value())) return;
  const auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const auto rows = std::max(ar, br), cols = std::max(ac, bc);
  if (ar != rows || ac != cols) a = broadcast_to(a, rows, cols);
  if (br != rows || bc != cols) b = broadcast_to(b, rows, cols);
}

Matrix reshape_row_major(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  const Matrix t = m.transpose();
  return Eigen::Map<const Matrix>(t.data(), cols, rows).transpose();
}

}  // namespace

Var Tape::record(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return record(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return record(std::move(n));
}

// ---------------------------------------------------------------------------
// Operations

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  align(a, b);
  return t.record(make(Op::Add, a.value() + b.value(), a, b));
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  align(a, b);
  return t.record(make(Op::Sub, a.value() - b.value(), a, b));
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  align(a, b);
  return t.record(make(Op::Mul, a.value().cwiseProduct(b.value()), a, b));
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  align(a, b);
  return t.record(make(Op::Div, a.value().cwiseQuotient(b.value()), a, b));
}

Var neg(Var a) { return a.tape().record(make(Op::Neg, -a.value(), a)); }

Var scale(Var a, double c) {
  Node n = make(Op::Scale, a.value() * c, a);
  n.scalar = c;
  return a.tape().record(std::move(n));
}

Var add_scalar(Var a, double c) {
  Node n = make(Op::AddScalar, a.value().array() + c, a);
  n.scalar = c;
  return a.tape().record(std::move(n));
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul shape mismatch " + shape(a.value()) + " * " + shape(b.value()));
  Matrix v = a.value() * b.value();
  return t.record(make(Op::MatMul, std::move(v), a, b));
}

Var transpose(Var a) { return a.tape().record(make(Op::Transpose, a.value().transpose(), a)); }

Var exp(Var a) { return a.tape().record(make(Op::Exp, a.value().array().exp().matrix(), a)); }

Var log(Var a) { return a.tape().record(make(Op::Log, a.value().array().log().matrix(), a)); }

Var tanh(Var a) { return a.tape().record(make(Op::Tanh, a.value().array().tanh().matrix(), a)); }

Var sqrt(Var a) { return a.tape().record(make(Op::Sqrt, a.value().array().sqrt().matrix(), a)); }

Var mask_mul(Var a, std::shared_ptr<const Matrix> mask) {
  const Matrix& m = *mask;
  Matrix v;
  if (m.rows() == a.rows() && m.cols() == a.cols())
    v = a.value().cwiseProduct(m);
  else if (m.rows() == 1 && m.cols() == a.cols())
    v = (a.value().array().rowwise() * m.row(0).array()).matrix();
  else
    throw std::invalid_argument("mask shape " + shape(m) + " does not fit " + shape(a.value()));
  Node n = make(Op::MaskMul, std::move(v), a);
  n.mask = std::move(mask);
  return a.tape().record(std::move(n));
}

Var mask_mul(Var a, const Matrix& mask) { return mask_mul(a, std::make_shared<const Matrix>(mask)); }

Var broadcast_to(Var a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& x = a.value();
  Matrix v;
  if (x.rows() == rows && x.cols() == cols)
    v = x;
  else if (x.rows() == 1 && x.cols() == 1)
    v = Matrix::Constant(rows, cols, x(0, 0));
  else if (x.rows() == 1 && x.cols() == cols)
    v = x.replicate(rows, 1);
  else if (x.cols() == 1 && x.rows() == rows)
    v = x.replicate(1, cols);
  else
    throw std::invalid_argument("cannot broadcast " + shape(x) + " to " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  Node n = make(Op::BroadcastTo, std::move(v), a);
  n.i0 = x.rows();
  n.i1 = x.cols();
  return a.tape().record(std::move(n));
}

Var sum_to(Var a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& x = a.value();
  Matrix v;
  if (x.rows() == rows && x.cols() == cols)
    v = x;
  else if (rows == 1 && cols == 1)
    v = Matrix::Constant(1, 1, x.sum());
  else if (rows == 1 && cols == x.cols())
    v = x.colwise().sum();
  else if (cols == 1 && rows == x.rows())
    v = x.rowwise().sum();
  else
    throw std::invalid_argument("cannot reduce " + shape(x) + " to " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  Node n = make(Op::SumTo, std::move(v), a);
  n.i0 = x.rows();
  n.i1 = x.cols();
  return a.tape().record(std::move(n));
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size())
    throw std::invalid_argument("cannot reshape " + shape(a.value()) + " to " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  Node n = make(Op::Reshape, reshape_row_major(a.value(), rows, cols), a);
  n.i0 = a.rows();
  n.i1 = a.cols();
  return a.tape().record(std::move(n));
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index width) {
  if (start < 0 || width < 0 || start + width > a.cols())
    throw std::invalid_argument("column slice out of range");
  Node n = make(Op::SliceCols, a.value().middleCols(start, width), a);
  n.i0 = start;
  n.i1 = a.cols();
  return a.tape().record(std::move(n));
}

Var pad_cols(Var a, Eigen::Index start, Eigen::Index total) {
  if (start < 0 || start + a.cols() > total) throw std::invalid_argument("column pad out of range");
  Matrix v = Matrix::Zero(a.rows(), total);
  v.middleCols(start, a.cols()) = a.value();
  Node n = make(Op::PadCols, std::move(v), a);
  n.i0 = start;
  n.i1 = a.cols();
  return a.tape().record(std::move(n));
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols row mismatch");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  Node n = make(Op::ConcatCols, std::move(v), a, b);
  n.i0 = a.cols();
  return t.record(std::move(n));
}

Var seg_sum(Var a, std::shared_ptr<const Segments> segments) {
  const Matrix& x = a.value();
  Matrix v(x.rows(), x.cols());
  for (const auto& group : *segments) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(x.rows());
    for (int c : group) s += x.col(c);
    for (int c : group) v.col(c) = s;
  }
  Node n = make(Op::SegSum, std::move(v), a);
  n.segments = std::move(segments);
  return a.tape().record(std::move(n));
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var col_mean(Var a) { return scale(sum_to(a, 1, a.cols()), 1.0 / static_cast<double>(a.rows())); }

Var square(Var a) { return mul(a, a); }

Var relu(Var a) {
  auto mask = std::make_shared<const Matrix>((a.value().array() > 0.0).cast<double>().matrix());
  return mask_mul(a, std::move(mask));
}

Var leaky_relu(Var a, double slope) {
  auto mask = std::make_shared<const Matrix>(
      (a.value().array() > 0.0).select(Matrix::Ones(a.rows(), a.cols()), slope).matrix());
  return mask_mul(a, std::move(mask));
}

Matrix segment_max(const Matrix& x, const Segments& segments) {
  Matrix out(x.rows(), x.cols());
  for (const auto& group : segments) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double m = x(r, group.front());
      for (int c : group) m = std::max(m, x(r, c));
      for (int c : group) out(r, c) = m;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse mode

std::vector<Var> Tape::gradients(Var output, std::span<const Var> inputs, const Matrix* seed) {
  const int top = output.id();
  const auto count = static_cast<std::size_t>(top + 1);

  // Nodes that depend on at least one input; only they receive gradients.
  std::vector<char> relevant(count, 0);
  int lowest = top + 1;
  for (const Var& in : inputs) {
    if (in.id() <= top) {
      relevant[static_cast<std::size_t>(in.id())] = 1;
      lowest = std::min(lowest, in.id());
    }
  }
  for (int id = lowest; id <= top; ++id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if ((n.a >= 0 && relevant[static_cast<std::size_t>(n.a)]) ||
        (n.b >= 0 && relevant[static_cast<std::size_t>(n.b)]))
      relevant[static_cast<std::size_t>(id)] = 1;
  }

  std::vector<Var> grad(count);
  if (relevant[static_cast<std::size_t>(top)]) {
    const Matrix& out_value = nodes_[static_cast<std::size_t>(top)].value;
    if (seed) {
      if (!same_shape(*seed, out_value)) throw std::invalid_argument("gradient seed shape mismatch");
      grad[static_cast<std::size_t>(top)] = constant(*seed);
    } else {
      grad[static_cast<std::size_t>(top)] = constant(Matrix::Ones(out_value.rows(), out_value.cols()));
    }
  }

  const auto accumulate = [&](int parent, Var g) {
    if (parent < 0 || !relevant[static_cast<std::size_t>(parent)]) return;
    Var& slot = grad[static_cast<std::size_t>(parent)];
    slot = slot.valid() ? add(slot, g) : g;
  };
  const auto wants = [&](int parent) {
    return parent >= 0 && relevant[static_cast<std::size_t>(parent)];
  };

  for (int id = top; id >= lowest; --id) {
    Var g = grad[static_cast<std::size_t>(id)];
    if (!g.valid()) continue;
    // Copy what the rule needs: recording new nodes may reallocate nodes_.
    const Node& ref = nodes_[static_cast<std::size_t>(id)];
    const Op op = ref.op;
    const int ia = ref.a, ib = ref.b;
    const double c = ref.scalar;
    const Eigen::Index i0 = ref.i0, i1 = ref.i1;
    const auto mask = ref.mask;
    const auto segments = ref.segments;
    const Var self(this, id);
    const Var a = ia >= 0 ? Var(this, ia) : Var{};
    const Var b = ib >= 0 ? Var(this, ib) : Var{};

    switch (op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(ia, g);
        accumulate(ib, g);
        break;
      case Op::Sub:
        accumulate(ia, g);
        if (wants(ib)) accumulate(ib, neg(g));
        break;
      case Op::Mul:
        if (wants(ia)) accumulate(ia, mul(g, b));
        if (wants(ib)) accumulate(ib, mul(g, a));
        break;
      case Op::Div:
        if (wants(ia)) accumulate(ia, div(g, b));
        if (wants(ib)) accumulate(ib, neg(div(mul(g, self), b)));
        break;
      case Op::Neg:
        accumulate(ia, neg(g));
        break;
      case Op::Scale:
        accumulate(ia, scale(g, c));
        break;
      case Op::AddScalar:
        accumulate(ia, g);
        break;
      case Op::MatMul:
        if (wants(ia)) accumulate(ia, matmul(g, transpose(b)));
        if (wants(ib)) accumulate(ib, matmul(transpose(a), g));
        break;
      case Op::Transpose:
        accumulate(ia, transpose(g));
        break;
      case Op::Exp:
        accumulate(ia, mul(g, self));
        break;
      case Op::Log:
        accumulate(ia, div(g, a));
        break;
      case Op::Tanh:
        accumulate(ia, mul(g, add_scalar(neg(mul(self, self)), 1.0)));
        break;
      case Op::Sqrt:
        accumulate(ia, scale(div(g, self), 0.5));
        break;
      case Op::MaskMul:
        accumulate(ia, mask_mul(g, mask));
        break;
      case Op::BroadcastTo:
        accumulate(ia, sum_to(g, i0, i1));
        break;
      case Op::SumTo:
        accumulate(ia, broadcast_to(g, i0, i1));
        break;
      case Op::Reshape:
        accumulate(ia, reshape(g, i0, i1));
        break;
      case Op::SliceCols:
        accumulate(ia, pad_cols(g, i0, i1));
        break;
      case Op::PadCols:
        accumulate(ia, slice_cols(g, i0, i1));
        break;
      case Op::ConcatCols: {
        const Eigen::Index total = g.cols();
        if (wants(ia)) accumulate(ia, slice_cols(g, 0, i0));
        if (wants(ib)) accumulate(ib, slice_cols(g, i0, total - i0));
        break;
      }
      case Op::SegSum:
        accumulate(ia, seg_sum(g, segments));
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(inputs.size());
  for (const Var& in : inputs) {
    Var g = in.id() <= top ? grad[static_cast<std::size_t>(in.id())] : Var{};
    out.push_back(g.valid() ? g : constant(Matrix::Zero(in.rows(), in.cols())));
  }
  return out;
}

std::vector<Matrix> Tape::gradient_values(Var output, std::span<const Var> inputs) {
  const std::size_t mark = nodes_.size();
  auto vars = gradients(output, inputs);
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (const Var& v : vars) out.push_back(v.value());
  truncate(mark);
  return out;
}

}  // namespace krew::ad
