#include "hdpde/autodiff/tape.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

namespace hdpde::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::AddColBroadcast: return "add_col_broadcast";
    case Op::SumCols: return "sum_cols";
    case Op::SumRows: return "sum_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::Sum: return "sum";
    case Op::BroadcastScalar: return "broadcast_scalar";
    case Op::ColBlock: return "col_block";
    case Op::PadCols: return "pad_cols";
    case Op::RowBlock: return "row_block";
    case Op::PadRows: return "pad_rows";
    case Op::TileCols: return "tile_cols";
    case Op::FoldCols: return "fold_cols";
    case Op::Tanh: return "tanh";
    case Op::TanhDeriv: return "tanh_deriv";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Square: return "square";
  }
  return "?";
}

const Matrix& Var::value() const { return tape_->node(index_).value; }
bool Var::requires_grad() const { return tape_->node(index_).requires_grad; }

Var Tape::constant(Matrix value) {
  return record(Op::Leaf, std::move(value), -1);
}

Var Tape::constant(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

Var Tape::variable(Matrix value) {
  Var v = record(Op::Leaf, std::move(value), -1);
  nodes_[v.index()].requires_grad = true;
  return v;
}

void Tape::truncate(std::size_t size) {
  if (size < nodes_.size()) nodes_.resize(size);
}

Var Tape::record(Op op, Matrix value, std::int64_t a, std::int64_t b,
                 double scalar, Eigen::Index i0, Eigen::Index i1) {
  const std::size_t index = nodes_.size();
  if (!value.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite value produced by operation " << index << " ("
        << op_name(op) << ")";
    throw NumericError(msg.str(), index);
  }
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.scalar = scalar;
  n.i0 = i0;
  n.i1 = i1;
  n.requires_grad = (a >= 0 && nodes_[a].requires_grad) ||
                    (b >= 0 && nodes_[b].requires_grad);
  n.value = std::move(value);
  if (nodes_.capacity() == nodes_.size()) nodes_.reserve(2 * nodes_.size() + 64);
  nodes_.push_back(std::move(n));
  return Var(this, index);
}

namespace {

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ShapeError("operands live on different tapes");
}

void same_shape(Var a, Var b, const char* what) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << what << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs "
        << b.rows() << "x" << b.cols();
    throw ShapeError(msg.str());
  }
}

std::int64_t idx(Var v) { return static_cast<std::int64_t>(v.index()); }

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  if (a.cols() != b.rows()) {
    std::ostringstream msg;
    msg << "matmul: inner dimensions differ (" << a.rows() << "x" << a.cols()
        << " * " << b.rows() << "x" << b.cols() << ")";
    throw ShapeError(msg.str());
  }
  Matrix v = a.value() * b.value();
  return a.tape().record(Op::MatMul, std::move(v), idx(a), idx(b));
}

Var transpose(Var a) {
  Matrix v = a.value().transpose();
  return a.tape().record(Op::Transpose, std::move(v), idx(a));
}

Var operator+(Var a, Var b) {
  same_shape(a, b, "add");
  Matrix v = a.value() + b.value();
  return a.tape().record(Op::Add, std::move(v), idx(a), idx(b));
}

Var operator-(Var a, Var b) {
  same_shape(a, b, "sub");
  Matrix v = a.value() - b.value();
  return a.tape().record(Op::Sub, std::move(v), idx(a), idx(b));
}

Var operator*(Var a, Var b) {
  same_shape(a, b, "mul");
  Matrix v = a.value().cwiseProduct(b.value());
  return a.tape().record(Op::Mul, std::move(v), idx(a), idx(b));
}

Var operator-(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  Matrix v = c * a.value();
  return a.tape().record(Op::Scale, std::move(v), idx(a), -1, c);
}

Var add_scalar(Var a, double c) {
  Matrix v = a.value().array() + c;
  return a.tape().record(Op::AddScalar, std::move(v), idx(a), -1, c);
}

Var add_col_broadcast(Var a, Var column) {
  same_tape(a, column);
  if (column.cols() != 1 || column.rows() != a.rows())
    throw ShapeError("add_col_broadcast: expected a column matching the row count");
  Matrix v = a.value().colwise() + column.value().col(0);
  return a.tape().record(Op::AddColBroadcast, std::move(v), idx(a), idx(column));
}

Var sum_cols(Var a) {
  Matrix v = a.value().rowwise().sum();
  return a.tape().record(Op::SumCols, std::move(v), idx(a));
}

Var sum_rows(Var a) {
  Matrix v = a.value().colwise().sum();
  return a.tape().record(Op::SumRows, std::move(v), idx(a));
}

Var broadcast_cols(Var column, Eigen::Index cols) {
  if (column.cols() != 1) throw ShapeError("broadcast_cols: expected a column");
  Matrix v = column.value().replicate(1, cols);
  return column.tape().record(Op::BroadcastCols, std::move(v), idx(column), -1,
                              0.0, cols);
}

Var broadcast_rows(Var row, Eigen::Index rows) {
  if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a row");
  Matrix v = row.value().replicate(rows, 1);
  return row.tape().record(Op::BroadcastRows, std::move(v), idx(row), -1, 0.0,
                           rows);
}

Var sum(Var a) {
  Matrix v = Matrix::Constant(1, 1, a.value().sum());
  return a.tape().record(Op::Sum, std::move(v), idx(a));
}

Var broadcast_scalar(Var s, Eigen::Index rows, Eigen::Index cols) {
  if (s.rows() != 1 || s.cols() != 1)
    throw ShapeError("broadcast_scalar: expected a 1x1 operand");
  Matrix v = Matrix::Constant(rows, cols, s.value()(0, 0));
  return s.tape().record(Op::BroadcastScalar, std::move(v), idx(s), -1, 0.0,
                         rows, cols);
}

Var col_block(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("col_block: range outside operand");
  Matrix v = a.value().middleCols(start, count);
  return a.tape().record(Op::ColBlock, std::move(v), idx(a), -1, 0.0, start,
                         count);
}

Var pad_cols(Var a, Eigen::Index start, Eigen::Index total) {
  if (start < 0 || start + a.cols() > total)
    throw ShapeError("pad_cols: block does not fit");
  Matrix v = Matrix::Zero(a.rows(), total);
  v.middleCols(start, a.cols()) = a.value();
  return a.tape().record(Op::PadCols, std::move(v), idx(a), -1, 0.0, start,
                         total);
}

Var row_block(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("row_block: range outside operand");
  Matrix v = a.value().middleRows(start, count);
  return a.tape().record(Op::RowBlock, std::move(v), idx(a), -1, 0.0, start,
                         count);
}

Var pad_rows(Var a, Eigen::Index start, Eigen::Index total) {
  if (start < 0 || start + a.rows() > total)
    throw ShapeError("pad_rows: block does not fit");
  Matrix v = Matrix::Zero(total, a.cols());
  v.middleRows(start, a.rows()) = a.value();
  return a.tape().record(Op::PadRows, std::move(v), idx(a), -1, 0.0, start,
                         total);
}

Var tile_cols(Var a, Eigen::Index copies) {
  if (copies < 1) throw ShapeError("tile_cols: need at least one copy");
  const Eigen::Index b = a.cols();
  Matrix v(a.rows(), b * copies);
  for (Eigen::Index k = 0; k < copies; ++k) v.middleCols(k * b, b) = a.value();
  return a.tape().record(Op::TileCols, std::move(v), idx(a), -1, 0.0, copies);
}

Var fold_cols(Var a, Eigen::Index blocks) {
  if (blocks < 1 || a.cols() % blocks != 0)
    throw ShapeError("fold_cols: column count is not a multiple of the block count");
  const Eigen::Index b = a.cols() / blocks;
  Matrix v = a.value().leftCols(b);
  for (Eigen::Index k = 1; k < blocks; ++k) v += a.value().middleCols(k * b, b);
  return a.tape().record(Op::FoldCols, std::move(v), idx(a), -1, 0.0, blocks);
}

Var tanh(Var a) {
  Matrix v = a.value().array().tanh();
  return a.tape().record(Op::Tanh, std::move(v), idx(a));
}

Var tanh_deriv(Var y) {
  Matrix v = 1.0 - y.value().array().square();
  return y.tape().record(Op::TanhDeriv, std::move(v), idx(y));
}

Var sin(Var a) {
  Matrix v = a.value().array().sin();
  return a.tape().record(Op::Sin, std::move(v), idx(a));
}

Var cos(Var a) {
  Matrix v = a.value().array().cos();
  return a.tape().record(Op::Cos, std::move(v), idx(a));
}

Var square(Var a) {
  Matrix v = a.value().array().square();
  return a.tape().record(Op::Square, std::move(v), idx(a));
}

Var mean(Var a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  return scale(sum(a), 1.0 / n);
}

namespace {

using MaybeVar = std::optional<Var>;

void accumulate(MaybeVar& slot, Var contribution) {
  slot = slot ? *slot + contribution : contribution;
}

// Adjoint contributions of node `i` (output adjoint g) to its inputs.
void propagate_adjoint(Tape& tape, std::size_t i, Var g,
                       std::vector<MaybeVar>& adj,
                       const std::vector<char>& needed) {
  // Copy: recording below may reallocate the node storage.
  const Tape::Node n = [&] {
    const Tape::Node& ref = tape.node(i);
    Tape::Node c;
    c.op = ref.op;
    c.a = ref.a;
    c.b = ref.b;
    c.scalar = ref.scalar;
    c.i0 = ref.i0;
    c.i1 = ref.i1;
    return c;
  }();
  const bool need_a = n.a >= 0 && needed[n.a];
  const bool need_b = n.b >= 0 && needed[n.b];
  if (!need_a && !need_b) return;
  Var self(&tape, i);
  Var a = n.a >= 0 ? Var(&tape, n.a) : Var();
  Var b = n.b >= 0 ? Var(&tape, n.b) : Var();
  const double c = n.scalar;
  const Eigen::Index i0 = n.i0;
  const Eigen::Index i1 = n.i1;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul:
      if (need_a) accumulate(adj[n.a], matmul(g, transpose(b)));
      if (need_b) accumulate(adj[n.b], matmul(transpose(a), g));
      break;
    case Op::Transpose:
      accumulate(adj[n.a], transpose(g));
      break;
    case Op::Add:
      if (need_a) accumulate(adj[n.a], g);
      if (need_b) accumulate(adj[n.b], g);
      break;
    case Op::Sub:
      if (need_a) accumulate(adj[n.a], g);
      if (need_b) accumulate(adj[n.b], -g);
      break;
    case Op::Mul:
      if (need_a) accumulate(adj[n.a], g * b);
      if (need_b) accumulate(adj[n.b], g * a);
      break;
    case Op::Scale:
      accumulate(adj[n.a], scale(g, c));
      break;
    case Op::AddScalar:
      accumulate(adj[n.a], g);
      break;
    case Op::AddColBroadcast:
      if (need_a) accumulate(adj[n.a], g);
      if (need_b) accumulate(adj[n.b], sum_cols(g));
      break;
    case Op::SumCols:
      accumulate(adj[n.a], broadcast_cols(g, a.cols()));
      break;
    case Op::SumRows:
      accumulate(adj[n.a], broadcast_rows(g, a.rows()));
      break;
    case Op::BroadcastCols:
      accumulate(adj[n.a], sum_cols(g));
      break;
    case Op::BroadcastRows:
      accumulate(adj[n.a], sum_rows(g));
      break;
    case Op::Sum:
      accumulate(adj[n.a], broadcast_scalar(g, a.rows(), a.cols()));
      break;
    case Op::BroadcastScalar:
      accumulate(adj[n.a], sum(g));
      break;
    case Op::ColBlock:
      accumulate(adj[n.a], pad_cols(g, i0, a.cols()));
      break;
    case Op::PadCols:
      accumulate(adj[n.a], col_block(g, i0, a.cols()));
      break;
    case Op::RowBlock:
      accumulate(adj[n.a], pad_rows(g, i0, a.rows()));
      break;
    case Op::PadRows:
      accumulate(adj[n.a], row_block(g, i0, a.rows()));
      break;
    case Op::TileCols:
      accumulate(adj[n.a], fold_cols(g, i0));
      break;
    case Op::FoldCols:
      accumulate(adj[n.a], tile_cols(g, i0));
      break;
    case Op::Tanh:
      accumulate(adj[n.a], g * tanh_deriv(self));
      break;
    case Op::TanhDeriv:
      accumulate(adj[n.a], scale(g * a, -2.0));
      break;
    case Op::Sin:
      accumulate(adj[n.a], g * cos(a));
      break;
    case Op::Cos:
      accumulate(adj[n.a], -(g * sin(a)));
      break;
    case Op::Square:
      accumulate(adj[n.a], scale(g * a, 2.0));
      break;
  }
  (void)i1;
}

}  // namespace

std::vector<Var> grad(Var output, std::span<const Var> wrt, bool create_graph) {
  if (output.rows() != 1 || output.cols() != 1) {
    std::ostringstream msg;
    msg << "grad: output must be scalar, got " << output.rows() << "x"
        << output.cols();
    throw ShapeError(msg.str());
  }
  Tape& tape = output.tape();
  const std::size_t end = output.index() + 1;

  // needed[i]: node i depends on at least one wrt node.
  std::vector<char> needed(end, 0);
  std::size_t first = end;
  for (const Var& w : wrt) {
    if (&w.tape() != &tape) throw ShapeError("grad: wrt lives on another tape");
    if (w.index() < end) {
      needed[w.index()] = 1;
      first = std::min(first, w.index());
    }
  }
  for (std::size_t i = first; i < end; ++i) {
    if (needed[i]) continue;
    const Tape::Node& n = tape.node(i);
    needed[i] = (n.a >= 0 && needed[n.a]) || (n.b >= 0 && needed[n.b]);
  }

  std::vector<MaybeVar> adj(end);
  if (needed[output.index()]) {
    adj[output.index()] = tape.constant(Matrix::Ones(1, 1));
  }
  for (std::size_t i = end; i-- > first;) {
    if (!adj[i] || !needed[i]) continue;
    propagate_adjoint(tape, i, *adj[i], adj, needed);
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.index() < end && adj[w.index()]) {
      Var g = *adj[w.index()];
      if (!create_graph && g.requires_grad()) g = tape.constant(g.value());
      out.push_back(g);
    } else {
      out.push_back(tape.constant(Matrix::Zero(w.rows(), w.cols())));
    }
  }
  return out;
}

std::vector<Matrix> backward(Var output, std::span<const Var> wrt) {
  Tape& tape = output.tape();
  const std::size_t mark = tape.size();
  std::vector<Var> g = grad(output, wrt, false);
  std::vector<Matrix> out;
  out.reserve(g.size());
  for (const Var& v : g) out.push_back(v.value());
  tape.truncate(mark);
  return out;
}

std::vector<Var> tangent_sweep(Var input, const Matrix& tangent,
                               std::span<const Var> outputs) {
  if (tangent.rows() != input.rows() || tangent.cols() != input.cols())
    throw ShapeError("tangent_sweep: direction shape differs from input");
  Tape& tape = input.tape();
  std::size_t end = input.index() + 1;
  for (const Var& o : outputs) end = std::max(end, o.index() + 1);

  std::vector<MaybeVar> tan(end);
  tan[input.index()] = tape.constant(tangent);
  for (std::size_t i = input.index() + 1; i < end; ++i) {
    const Tape::Node& node = tape.node(i);
    const MaybeVar ta = node.a >= 0 ? tan[node.a] : MaybeVar{};
    const MaybeVar tb = node.b >= 0 ? tan[node.b] : MaybeVar{};
    if (!ta && !tb) continue;
    Var self(&tape, i);
    Var a = node.a >= 0 ? Var(&tape, node.a) : Var();
    Var b = node.b >= 0 ? Var(&tape, node.b) : Var();
    const double c = node.scalar;
    const Eigen::Index i0 = node.i0;
    const Eigen::Index i1 = node.i1;
    const Op op = node.op;  // `node` may dangle once new nodes are recorded
    MaybeVar t;
    switch (op) {
      case Op::Leaf:
        break;
      case Op::MatMul:
        if (ta) t = matmul(*ta, b);
        if (tb) {
          Var r = matmul(a, *tb);
          t = t ? *t + r : r;
        }
        break;
      case Op::Transpose: t = transpose(*ta); break;
      case Op::Add:
        t = ta && tb ? *ta + *tb : (ta ? *ta : *tb);
        break;
      case Op::Sub:
        t = ta && tb ? *ta - *tb : (ta ? *ta : -*tb);
        break;
      case Op::Mul:
        if (ta) t = *ta * b;
        if (tb) {
          Var r = a * *tb;
          t = t ? *t + r : r;
        }
        break;
      case Op::Scale: t = scale(*ta, c); break;
      case Op::AddScalar: t = *ta; break;
      case Op::AddColBroadcast:
        if (ta && tb) t = add_col_broadcast(*ta, *tb);
        else if (ta) t = *ta;
        else t = broadcast_cols(*tb, a.cols());
        break;
      case Op::SumCols: t = sum_cols(*ta); break;
      case Op::SumRows: t = sum_rows(*ta); break;
      case Op::BroadcastCols: t = broadcast_cols(*ta, i0); break;
      case Op::BroadcastRows: t = broadcast_rows(*ta, i0); break;
      case Op::Sum: t = sum(*ta); break;
      case Op::BroadcastScalar: t = broadcast_scalar(*ta, i0, i1); break;
      case Op::ColBlock: t = col_block(*ta, i0, i1); break;
      case Op::PadCols: t = pad_cols(*ta, i0, i1); break;
      case Op::RowBlock: t = row_block(*ta, i0, i1); break;
      case Op::PadRows: t = pad_rows(*ta, i0, i1); break;
      case Op::TileCols: t = tile_cols(*ta, i0); break;
      case Op::FoldCols: t = fold_cols(*ta, i0); break;
      case Op::Tanh: t = *ta * tanh_deriv(self); break;
      case Op::TanhDeriv: t = scale(a * *ta, -2.0); break;
      case Op::Sin: t = *ta * cos(a); break;
      case Op::Cos: t = -(*ta * sin(a)); break;
      case Op::Square: t = scale(a * *ta, 2.0); break;
    }
    tan[i] = t;
  }

  std::vector<Var> out;
  out.reserve(outputs.size());
  for (const Var& o : outputs) {
    if (tan[o.index()]) out.push_back(*tan[o.index()]);
    else out.push_back(tape.constant(Matrix::Zero(o.rows(), o.cols())));
  }
  return out;
}

DualTensor jvp(const TapeFunction& f, const Matrix& input,
               const Matrix& direction) {
  if (direction.rows() != input.rows() || direction.cols() != input.cols())
    throw ShapeError("jvp: direction shape differs from input");
  Tape tape;
  Var x = tape.variable(input);
  Var y = f(tape, x);
  const Var outs[] = {y};
  Var t = tangent_sweep(x, direction, outs)[0];
  return {y.value(), t.value()};
}

Matrix input_gradient(const TapeFunction& f, const Matrix& input) {
  Tape tape;
  Var x = tape.variable(input);
  Var y = f(tape, x);
  const Var wrt[] = {x};
  return backward(y, wrt)[0];
}

Var hvp(Var input, Var gradient, const Matrix& direction) {
  const Var outs[] = {gradient};
  return tangent_sweep(input, direction, outs)[0];
}

Matrix input_hvp(const TapeFunction& f, const Matrix& input,
                 const Matrix& direction) {
  if (direction.rows() != input.rows() || direction.cols() != input.cols())
    throw ShapeError("input_hvp: direction shape differs from input");
  Tape tape;
  Var x = tape.variable(input);
  Var y = f(tape, x);
  const Var wrt[] = {x};
  Var g = grad(y, wrt, true)[0];
  return hvp(x, g, direction).value();
}

}  // namespace hdpde::ad
