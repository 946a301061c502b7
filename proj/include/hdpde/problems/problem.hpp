#pragma once

#include "hdpde/autodiff/tape.hpp"
#include "hdpde/sde/noise.hpp"
#include "hdpde/sde/paths.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace hdpde::problems {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Arguments of the source term f(t, x, u, grad u) on a batch of columns.
/// `gradient` is only set when the problem declares source_uses_gradient.
struct SourceArgs {
  const RowVector& t;
  const Matrix& x;
  ad::Var u;         // 1 x B
  ad::Var gradient;  // d x B
};

/// Monte-Carlo (or exact) reference value with its standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// Terminal value problem  u_t + mu.grad u + 1/2 Tr(A Hess u) = f,  u(T) = g,
/// A = sigma sigma^T, posed on R^d. Solvers work in internal coordinates
/// z = x / coordinate_scale with values v = u / value_scale.
struct ParabolicProblem {
  std::string name;
  int dim = 1;
  double horizon = 1.0;
  sde::Dynamics dynamics;

  /// Empty means f = 0.
  std::function<ad::Var(const SourceArgs&)> source;
  bool source_uses_gradient = false;

  std::function<RowVector(const Matrix& x)> terminal;
  std::function<Matrix(const Matrix& x)> terminal_gradient;

  /// Training start states X_0 (internal coordinates), d x count.
  std::function<Matrix(sde::NoiseSource&, int count)> initial_sampler;
  /// Evaluation points in original coordinates, d x count.
  std::function<Matrix(sde::NoiseSource&, int count)> test_sampler;

  /// Reference solution in original coordinates.
  std::function<Estimate(const Vector& x, double t, std::uint64_t samples,
                         sde::NoiseSource& noise)>
      reference;
  bool reference_is_exact = false;

  double coordinate_scale = 1.0;
  double value_scale = 1.0;
  /// Identifies every parameter that changes the solution; used in cache keys.
  std::string identity;

  /// f on the tape; a zero node when the problem has no source.
  ad::Var source_on(ad::Tape& tape, const RowVector& t, const Matrix& x, ad::Var u,
                    ad::Var gradient) const;
  /// f on plain values (gradient may be empty when unused).
  RowVector source_values(const RowVector& t, const Matrix& x, const RowVector& u,
                          const Matrix& gradient) const;
};

// ---- concrete instances ---------------------------------------------------

/// mu = 0, sigma = I, f = 0, g = |x|^2; u = |x|^2 + d (T - t).
struct HeatSanityInstance {
  int dim = 3;
  double horizon = 1.0;
};

/// u_t + 1/2 Lap u - |grad u|^2 = 0 with the Rosenbrock-type terminal cost.
struct HjbLqgInstance {
  int dim = 10;
  double horizon = 1.0;
  std::uint64_t coefficient_seed = 0;
  Vector c1;  // d - 1 coefficients in [0.5, 1.5]
  Vector c2;
};

/// Basket call on the maximum of d independent geometric Brownian motions.
struct BlackScholesInstance {
  int dim = 10;
  double horizon = 1.0;
  double rate = 1.0 / 20.0;
  Vector mu;     // drift per coordinate
  Vector sigma;  // volatility per coordinate
  double strike = 100.0;
  /// K: the instance is posed over z = x / K with strike a / K.
  double scale = 1.0;
};

HjbLqgInstance make_hjb_instance(int dim, std::uint64_t coefficient_seed,
                                 double horizon = 1.0);
BlackScholesInstance make_bs_instance(int dim);

double rosenbrock_terminal(const HjbLqgInstance& inst, const Vector& x);
Vector rosenbrock_gradient(const HjbLqgInstance& inst, const Vector& x);
/// exp(-r T) max(max_i x_i - a, 0), with a the (possibly scaled) strike.
double bs_payoff(const BlackScholesInstance& inst, const Vector& x);

double heat_exact(const Vector& x, double t, const HeatSanityInstance& inst);

/// Cole-Hopf Monte-Carlo value -1/2 log mean exp(-2 g(x - sqrt(T-t) y)),
/// accumulated with log-sum-exp.
Estimate hjb_reference(const Vector& x, double t, const HjbLqgInstance& inst,
                       std::uint64_t samples, sde::NoiseSource& noise);
/// Same estimator on explicit unit-Gaussian draws (d x n).
Estimate hjb_reference_from_draws(const Vector& x, double t,
                                  const HjbLqgInstance& inst, const Matrix& draws);
/// Variant with the terminal cost shifted by a constant, for identity checks.
Estimate hjb_reference_from_draws(const Vector& x, double t,
                                  const HjbLqgInstance& inst, const Matrix& draws,
                                  double terminal_shift);

/// Mean payoff over GBM terminal draws, in the instance's own coordinates.
Estimate bs_reference(const Vector& x, double t, const BlackScholesInstance& inst,
                      std::uint64_t samples, sde::NoiseSource& noise);
Estimate bs_reference_from_draws(const Vector& x, double t,
                                 const BlackScholesInstance& inst, const Matrix& draws);

/// Instance over z = x / K with strike a / K.
BlackScholesInstance scale_bs(const BlackScholesInstance& inst, double scale);
/// u(t, x) = K v(t, x / K).
double unscale_bs_value(const BlackScholesInstance& scaled, double v);

ParabolicProblem make_problem(const HeatSanityInstance& inst);
ParabolicProblem make_problem(const HjbLqgInstance& inst);
/// `inst` may be scaled; reference and test points stay in original units.
ParabolicProblem make_problem(const BlackScholesInstance& inst);

}  // namespace hdpde::problems
