#pragma once

#include "hdpde/network/mlp.hpp"
#include "hdpde/pinn/pinn.hpp"
#include "hdpde/problems/problem.hpp"
#include "hdpde/trainer/trainer.hpp"

#include <functional>
#include <string>

namespace hdpde::shotgun {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class WeightSchedule { Linear, Cubic };

std::string to_string(WeightSchedule w);
WeightSchedule schedule_from_string(const std::string& s);

/// w(t) = t / T, or max{0, (n t / T - n + 1)^3}.
struct Embedding {
  WeightSchedule schedule = WeightSchedule::Linear;
  int cubic_n = 20;

  double weight(double t, double horizon) const;
};

/// u_hat = (1 - w(t)) net(t, x) + w(t) g(x).
double embedded_eval(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                     const Embedding& embedding, double t, const Vector& x);

/// Recorded u_hat on a batch; `raw` is the [t; x] network input node.
ad::Var embedded_values(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                        const Embedding& embedding, ad::Var raw);

using UFunction = std::function<double(double t, const Vector& x)>;

/// (u(t+h, x + mu h + sqrt(h) sigma xi) - u(t, x)) / h.
double random_difference(const UFunction& u, const problems::ParabolicProblem& problem,
                         double t, const Vector& x, const Vector& xi, double h);

enum class Probe { Gaussian, Rademacher };

struct RandomDifferenceConfig {
  double h_local = 1e-5;
  /// Antithetic pairs per collocation point.
  int pairs = 8;
  Probe probe = Probe::Gaussian;

  void validate() const;
};

Matrix draw_probes(int dim, Eigen::Index count, Probe probe, sde::NoiseSource& noise);

struct AntitheticResult {
  double value = 0.0;
  /// t + h exceeded T, so the difference was taken over [T - h, T].
  bool clamped = false;
};

/// mean_k 1/2 (D_h(xi_k) + D_h(-xi_k)) - f(t, x, u, grad u); `pairs` is d x M.
/// `grad_u` is only called when the source needs it.
AntitheticResult antithetic_residual(const UFunction& u,
                                     const std::function<Vector(double, const Vector&)>& grad_u,
                                     const problems::ParabolicProblem& problem, double t,
                                     const Vector& x, const Matrix& pairs, double h);

struct ShotgunLoss {
  ad::Var loss;
  double value = 0.0;
  double residual_mean = 0.0;
  int clamped = 0;
};

/// mean over points of the squared antithetic residual of the embedded surrogate.
ShotgunLoss shotgun_loss(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                         const Embedding& embedding, const RowVector& t, const Matrix& x,
                         const RandomDifferenceConfig& cfg, sde::NoiseSource& noise);

struct ShotgunConfig {
  RandomDifferenceConfig difference;
  Embedding embedding;
  int points = 128;
  /// Coarse trajectory steps (N + 1 nodes).
  int path_steps = 20;

  void validate() const;
};

class ShotgunSolver : public train::Solver {
 public:
  ShotgunSolver(problems::ParabolicProblem problem, const nn::MlpSpec& spec, std::uint64_t seed,
                ShotgunConfig cfg);

  std::string name() const override { return "shotgun"; }
  std::vector<Matrix*> parameters(int group) override;
  train::StepOutput compute(int group, int epoch, const sde::NoiseSource& noise) override;
  RowVector predict(const Matrix& z) const override;
  std::vector<nn::NetworkState> snapshot() const override { return {net_}; }
  void restore(const std::vector<nn::NetworkState>& states) override;

  const nn::NetworkState& network() const { return net_; }

 private:
  problems::ParabolicProblem problem_;
  nn::NetworkState net_;
  ShotgunConfig cfg_;
};

}  // namespace hdpde::shotgun
