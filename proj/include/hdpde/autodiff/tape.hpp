#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdpde::ad {

using Matrix = Eigen::MatrixXd;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation produces a NaN or infinite entry.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t op_index)
      : std::runtime_error(what), op_index_(op_index) {}
  std::size_t op_index() const noexcept { return op_index_; }

 private:
  std::size_t op_index_;
};

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  AddColBroadcast,  // (n x B) + (n x 1)
  SumCols,          // (n x B) -> (n x 1)
  SumRows,          // (n x B) -> (1 x B)
  BroadcastCols,    // (n x 1) -> (n x B)
  BroadcastRows,    // (1 x B) -> (n x B)
  Sum,              // -> (1 x 1)
  BroadcastScalar,  // (1 x 1) -> (r x c)
  ColBlock,
  PadCols,
  RowBlock,
  PadRows,
  TileCols,  // (n x B) -> (n x kB), k side-by-side copies
  FoldCols,  // (n x kB) -> (n x B), sum of the k column blocks
  Tanh,
  TanhDeriv,  // 1 - y^2, applied to a tanh output y
  Sin,
  Cos,
  Square,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node of a Tape. Cheap to copy; valid while the tape lives and
/// has not been truncated below its index.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Computation record. Every operation appends one node holding its value;
/// nodes are topologically ordered by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  /// Leaf that gradients can be taken with respect to.
  Var variable(Matrix value);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Drops every node with index >= size. Vars pointing there become dangling.
  void truncate(std::size_t size);

  struct Node {
    Op op = Op::Leaf;
    std::int64_t a = -1;
    std::int64_t b = -1;
    double scalar = 0.0;
    Eigen::Index i0 = 0;
    Eigen::Index i1 = 0;
    bool requires_grad = false;
    Matrix value;
  };

  const Node& node(std::size_t i) const { return nodes_[i]; }

  // Used by the free-function operations below.
  Var record(Op op, Matrix value, std::int64_t a, std::int64_t b = -1,
             double scalar = 0.0, Eigen::Index i0 = 0, Eigen::Index i1 = 0);

 private:
  std::vector<Node> nodes_;
};

// Primitive operations. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);  // elementwise
Var operator-(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var add_col_broadcast(Var a, Var column);
Var sum_cols(Var a);
Var sum_rows(Var a);
Var broadcast_cols(Var column, Eigen::Index cols);
Var broadcast_rows(Var row, Eigen::Index rows);
Var sum(Var a);
Var broadcast_scalar(Var s, Eigen::Index rows, Eigen::Index cols);
Var col_block(Var a, Eigen::Index start, Eigen::Index count);
Var pad_cols(Var a, Eigen::Index start, Eigen::Index total);
Var row_block(Var a, Eigen::Index start, Eigen::Index count);
Var pad_rows(Var a, Eigen::Index start, Eigen::Index total);
Var tile_cols(Var a, Eigen::Index copies);
Var fold_cols(Var a, Eigen::Index blocks);
Var tanh(Var a);
Var tanh_deriv(Var y);
Var sin(Var a);
Var cos(Var a);
Var square(Var a);

inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }
/// Mean over every entry, as a 1x1 node.
Var mean(Var a);

/// Reverse sweep from a scalar output. Returns d(output)/d(wrt[k]) for every k;
/// entries for wrt nodes the output does not depend on are zero constants.
/// With create_graph the adjoints are themselves differentiable nodes.
std::vector<Var> grad(Var output, std::span<const Var> wrt,
                      bool create_graph = false);

/// Same as grad without create_graph, but returns plain matrices and removes
/// the adjoint nodes from the tape afterwards.
std::vector<Matrix> backward(Var output, std::span<const Var> wrt);

/// Forward tangent sweep: propagates `tangent` (shape of `input`) through every
/// node recorded after `input` and returns the tangents of `outputs`. The
/// tangents are recorded nodes, so they can be differentiated again.
std::vector<Var> tangent_sweep(Var input, const Matrix& tangent,
                               std::span<const Var> outputs);

/// Value and directional derivative of a recorded map.
struct DualTensor {
  Matrix primal;
  Matrix tangent;
};

using TapeFunction = std::function<Var(Tape&, Var)>;

/// f(input) and (df)(input) . direction.
DualTensor jvp(const TapeFunction& f, const Matrix& input,
               const Matrix& direction);

/// Gradient of a scalar-valued f at input (same shape as input).
Matrix input_gradient(const TapeFunction& f, const Matrix& input);

/// Hessian-vector product of a scalar-valued f: tangent sweep over the
/// recorded gradient graph.
Matrix input_hvp(const TapeFunction& f, const Matrix& input,
                 const Matrix& direction);

/// Differentiable version of input_hvp on an existing tape: `gradient` must be
/// the create_graph gradient of some scalar with respect to `input`.
Var hvp(Var input, Var gradient, const Matrix& direction);

}  // namespace hdpde::ad
