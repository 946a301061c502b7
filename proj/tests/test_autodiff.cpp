#include "hdpde/autodiff/tape.hpp"
#include "hdpde/sde/noise.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>

using namespace hdpde;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

// Central differences of a scalar function of a matrix argument.
Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                   double step = 1e-4) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += step;
    xm.data()[i] -= step;
    g.data()[i] = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

using Unary = std::function<Var(Var)>;

// Reduces an arbitrary-shaped output to a scalar with fixed random weights so
// every output entry is exercised.
Var weighted_sum(Var y, std::uint64_t seed) {
  const Matrix w = sde::NoiseSource(seed).gaussian_matrix(y.rows(), y.cols());
  return ad::sum(y * y.tape().constant(w));
}

void check_unary(const char* name, const Unary& op, const Matrix& x0) {
  auto scalar = [&](const Matrix& x) {
    Tape tape;
    return weighted_sum(op(tape.variable(x)), 7).value()(0, 0);
  };
  Tape tape;
  Var x = tape.variable(x0);
  Var y = weighted_sum(op(x), 7);
  const Var wrt[] = {x};
  const Matrix g = ad::backward(y, wrt)[0];
  EXPECT_LT(rel_err(g, fd_gradient(scalar, x0)), 1e-4) << name;
}

}  // namespace

TEST(Backward, SquareAtThree) {
  Tape tape;
  Var th = tape.variable(Matrix::Constant(1, 1, 3.0));
  Var y = ad::sum(ad::square(th));
  const Var wrt[] = {th};
  EXPECT_DOUBLE_EQ(ad::backward(y, wrt)[0](0, 0), 6.0);
}

TEST(Backward, TanhAtZero) {
  Tape tape;
  Var th = tape.variable(Matrix::Zero(1, 1));
  const Var wrt[] = {th};
  EXPECT_DOUBLE_EQ(ad::backward(ad::sum(ad::tanh(th)), wrt)[0](0, 0), 1.0);
}

TEST(Backward, LinearMapWeights) {
  Tape tape;
  Var w = tape.variable(Matrix::Ones(2, 2));
  Var x = tape.constant(Matrix::Ones(2, 1));
  const Var wrt[] = {w};
  const Matrix g = ad::backward(ad::sum(ad::matmul(w, x)), wrt)[0];
  EXPECT_TRUE(g.isApprox(Matrix::Ones(2, 2)));
}

TEST(Backward, UnusedParameterGetsZero) {
  Tape tape;
  Var a = tape.variable(Matrix::Constant(2, 2, 1.5));
  Var unused = tape.variable(Matrix::Constant(3, 1, 2.0));
  const Var wrt[] = {a, unused};
  const auto g = ad::backward(ad::sum(ad::square(a)), wrt);
  EXPECT_TRUE(g[1].isZero());
  EXPECT_EQ(g[1].rows(), 3);
}

TEST(Backward, NonScalarOutputIsShapeError) {
  Tape tape;
  Var a = tape.variable(Matrix::Ones(2, 2));
  const Var wrt[] = {a};
  EXPECT_THROW(ad::grad(a * a, wrt), ad::ShapeError);
}

TEST(Backward, NanCarriesOperationIndex) {
  Tape tape;
  Var a = tape.variable(Matrix::Constant(1, 1, 1e200));
  try {
    (void)(a * a);
    FAIL() << "expected NumericError";
  } catch (const ad::NumericError& e) {
    EXPECT_EQ(e.op_index(), 1u);
  }
}

TEST(Backward, ShapeMismatchOnAdd) {
  Tape tape;
  EXPECT_THROW((void)(tape.variable(Matrix::Ones(2, 1)) + tape.variable(Matrix::Ones(1, 2))),
               ad::ShapeError);
  EXPECT_THROW((void)ad::matmul(tape.variable(Matrix::Ones(2, 3)), tape.variable(Matrix::Ones(2, 3))),
               ad::ShapeError);
}

TEST(GradientCheck, EveryPrimitiveMatchesFiniteDifferences) {
  sde::NoiseSource noise(11);
  const Matrix a0 = noise.next_gaussian_matrix(3, 4);
  const Matrix b0 = noise.next_gaussian_matrix(3, 4);
  const Matrix m0 = noise.next_gaussian_matrix(4, 2);
  const Matrix c0 = noise.next_gaussian_matrix(3, 1);
  const Matrix r0 = noise.next_gaussian_matrix(1, 4);

  auto k = [](const Matrix& m) { return [m](Var x) { return x.tape().constant(m); }; };
  const auto B = k(b0);
  check_unary("matmul-left", [&](Var x) { return ad::matmul(x, x.tape().constant(m0)); }, a0);
  check_unary("matmul-right", [&](Var x) { return ad::matmul(x.tape().constant(a0), x); }, m0);
  check_unary("transpose", [](Var x) { return ad::transpose(x); }, a0);
  check_unary("add", [&](Var x) { return x + B(x); }, a0);
  check_unary("sub", [&](Var x) { return B(x) - x; }, a0);
  check_unary("mul", [&](Var x) { return x * B(x); }, a0);
  check_unary("mul-self", [](Var x) { return x * x; }, a0);
  check_unary("scale", [](Var x) { return ad::scale(x, -2.5); }, a0);
  check_unary("add_scalar", [](Var x) { return ad::add_scalar(x, 0.7); }, a0);
  check_unary("add_col_broadcast-a", [&](Var x) {
    return ad::add_col_broadcast(x, x.tape().constant(c0)); }, a0);
  check_unary("add_col_broadcast-col", [&](Var c) {
    return ad::add_col_broadcast(c.tape().constant(a0), c); }, c0);
  check_unary("sum_cols", [](Var x) { return ad::sum_cols(x); }, a0);
  check_unary("sum_rows", [](Var x) { return ad::sum_rows(x); }, a0);
  check_unary("broadcast_cols", [](Var c) { return ad::broadcast_cols(c, 5); }, c0);
  check_unary("broadcast_rows", [](Var r) { return ad::broadcast_rows(r, 3); }, r0);
  check_unary("sum", [](Var x) { return ad::square(ad::sum(x)); }, a0);
  check_unary("broadcast_scalar", [](Var x) {
    return ad::broadcast_scalar(ad::sum(x), 2, 3); }, a0);
  check_unary("col_block", [](Var x) { return ad::col_block(x, 1, 2); }, a0);
  check_unary("pad_cols", [](Var x) { return ad::pad_cols(x, 2, 7); }, a0);
  check_unary("row_block", [](Var x) { return ad::row_block(x, 1, 2); }, a0);
  check_unary("pad_rows", [](Var x) { return ad::pad_rows(x, 1, 5); }, a0);
  check_unary("tile_cols", [](Var x) { return ad::tile_cols(x, 3); }, a0);
  check_unary("fold_cols", [](Var x) { return ad::fold_cols(x, 2); }, a0);
  check_unary("tanh", [](Var x) { return ad::tanh(x); }, a0);
  check_unary("tanh_deriv", [](Var x) { return ad::tanh_deriv(x); }, a0);
  check_unary("sin", [](Var x) { return ad::sin(x); }, a0);
  check_unary("cos", [](Var x) { return ad::cos(x); }, a0);
  check_unary("square", [](Var x) { return ad::square(x); }, a0);
  check_unary("mean", [](Var x) { return ad::mean(x * x); }, a0);
}

TEST(GradientCheck, SecondOrderAdjointsAreDifferentiable) {
  // d/dx of sum(grad_x sum(tanh(W x))^2) against finite differences.
  const Matrix w0 = sde::NoiseSource(3).gaussian_matrix(4, 3);
  auto inner = [&](Tape& tape, Var x) {
    Var y = ad::sum(ad::tanh(ad::matmul(tape.constant(w0), x)));
    const Var wrt[] = {x};
    Var g = ad::grad(y, wrt, true)[0];
    return ad::sum(ad::square(g));
  };
  const Matrix x0 = sde::NoiseSource(4).gaussian_matrix(3, 2);
  auto scalar = [&](const Matrix& x) {
    Tape tape;
    return inner(tape, tape.variable(x)).value()(0, 0);
  };
  Tape tape;
  Var x = tape.variable(x0);
  const Var wrt[] = {x};
  const Matrix g = ad::backward(inner(tape, x), wrt)[0];
  EXPECT_LT(rel_err(g, fd_gradient(scalar, x0)), 1e-4);
}

TEST(Jvp, SquaredNorm) {
  auto f = [](Tape&, Var x) { return ad::sum(ad::square(x)); };
  Matrix x(2, 1), v(2, 1);
  x << 1, 2;
  v << 1, 0;
  const auto r = ad::jvp(f, x, v);
  EXPECT_DOUBLE_EQ(r.primal(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(r.tangent(0, 0), 2.0);
}

TEST(Jvp, ConstantHasZeroTangent) {
  auto f = [](Tape& tape, Var) { return tape.constant(3.0); };
  const auto r = ad::jvp(f, Matrix::Ones(3, 1), Matrix::Constant(3, 1, 0.5));
  EXPECT_DOUBLE_EQ(r.primal(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(r.tangent(0, 0), 0.0);
}

TEST(Jvp, SinAtZero) {
  auto f = [](Tape&, Var x) { return ad::sin(x); };
  const auto r = ad::jvp(f, Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(r.tangent(0, 0), 1.0);
}

TEST(Jvp, DirectionShapeMismatch) {
  auto f = [](Tape&, Var x) { return ad::sum(x); };
  EXPECT_THROW(ad::jvp(f, Matrix::Ones(2, 1), Matrix::Ones(3, 1)), ad::ShapeError);
}

namespace {

// A smooth scalar test function with mixed partials.
ad::TapeFunction smooth_function() {
  const Matrix w = sde::NoiseSource(21).gaussian_matrix(5, 4);
  const Matrix v = sde::NoiseSource(22).gaussian_matrix(1, 5);
  return [w, v](Tape& tape, Var x) {
    Var h = ad::tanh(ad::matmul(tape.constant(w), x));
    Var s = ad::sin(h) + ad::square(h);
    return ad::sum(ad::matmul(tape.constant(v), s));
  };
}

}  // namespace

TEST(Jvp, MatchesReverseGradientEntries) {
  const auto f = smooth_function();
  const Matrix x = sde::NoiseSource(5).gaussian_matrix(4, 1);
  const Matrix g = ad::input_gradient(f, x);
  for (int i = 0; i < 4; ++i) {
    Matrix e = Matrix::Zero(4, 1);
    e(i, 0) = 1.0;
    EXPECT_NEAR(ad::jvp(f, x, e).tangent(0, 0), g(i, 0), 1e-10);
  }
}

TEST(InputHvp, QuadraticGivesTwiceDirection) {
  auto f = [](Tape&, Var x) { return ad::sum(ad::square(x)); };
  Matrix x(3, 1), v(3, 1);
  x << 0.3, -1.0, 2.0;
  v << 1.0, 2.0, -0.5;
  EXPECT_TRUE(ad::input_hvp(f, x, v).isApprox(2.0 * v));
}

TEST(InputHvp, OffDiagonalProduct) {
  auto f = [](Tape&, Var x) {
    return ad::sum(ad::row_block(x, 0, 1) * ad::row_block(x, 1, 1));
  };
  Matrix v(2, 1);
  v << 1, 0;
  const Matrix hv = ad::input_hvp(f, Matrix::Zero(2, 1), v);
  EXPECT_DOUBLE_EQ(hv(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(hv(1, 0), 1.0);
}

TEST(InputHvp, TanhSumAtOrigin) {
  auto f = [](Tape&, Var x) { return ad::sum(ad::tanh(x)); };
  const Matrix v = sde::NoiseSource(1).gaussian_matrix(4, 1);
  EXPECT_TRUE(ad::input_hvp(f, Matrix::Zero(4, 1), v).isZero(0.0));
}

TEST(InputHvp, MatchesFiniteDifferenceOfGradient) {
  const auto f = smooth_function();
  const Matrix x = sde::NoiseSource(6).gaussian_matrix(4, 1);
  const Matrix v = sde::NoiseSource(7).gaussian_matrix(4, 1);
  const double eps = 1e-5;
  const Matrix fd = (ad::input_gradient(f, x + eps * v) - ad::input_gradient(f, x - eps * v)) /
                    (2 * eps);
  const Matrix hv = ad::input_hvp(f, x, v);
  EXPECT_LT((hv - fd).norm() / hv.norm(), 1e-5);
}

TEST(InputHvp, LinearInDirection) {
  const auto f = smooth_function();
  const Matrix x = sde::NoiseSource(8).gaussian_matrix(4, 1);
  const Matrix v = sde::NoiseSource(9).gaussian_matrix(4, 1);
  const Matrix w = sde::NoiseSource(10).gaussian_matrix(4, 1);
  const double a = 1.7, b = -0.3;
  const Matrix lhs = ad::input_hvp(f, x, a * v + b * w);
  const Matrix rhs = a * ad::input_hvp(f, x, v) + b * ad::input_hvp(f, x, w);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Determinism, RepeatedEvaluationIsBitwiseIdentical) {
  const auto f = smooth_function();
  const Matrix x = sde::NoiseSource(12).gaussian_matrix(4, 1);
  const Matrix v = sde::NoiseSource(13).gaussian_matrix(4, 1);
  const Matrix a = ad::input_hvp(f, x, v);
  const Matrix b = ad::input_hvp(f, x, v);
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * a.size()));
}

TEST(Tape, BackwardLeavesTapeSizeUnchanged) {
  Tape tape;
  Var a = tape.variable(Matrix::Ones(2, 2));
  Var y = ad::sum(ad::tanh(a));
  const std::size_t before = tape.size();
  const Var wrt[] = {a};
  (void)ad::backward(y, wrt);
  EXPECT_EQ(tape.size(), before);
}
