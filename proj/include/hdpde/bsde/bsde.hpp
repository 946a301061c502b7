#pragma once

#include "hdpde/network/mlp.hpp"
#include "hdpde/problems/problem.hpp"
#include "hdpde/sde/paths.hpp"
#include "hdpde/trainer/trainer.hpp"

#include <functional>

namespace hdpde::bsde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// u0_net maps x to u(0, x); grad_net maps (t, x) to grad u(t, x).
struct BsdeNets {
  nn::NetworkState u0_net;
  nn::NetworkState grad_net;
};

/// Both nets share the hidden layout of `base`.
BsdeNets make_nets(const nn::MlpSpec& base, int dim, std::uint64_t seed);

struct BsdeRollout {
  Matrix x_terminal;  // d x M
  ad::Var y0;         // 1 x M
  ad::Var y_terminal; // 1 x M
};

/// Recorded map from a raw input batch to outputs: u0 sees x (d x M), the
/// gradient model sees [t; x] and returns d x M.
using TapeMap = std::function<ad::Var(ad::Tape&, const Matrix& raw)>;

/// Y_0 = u0(X_0), Y_{n+1} = Y_n + f h + (sigma^T grad)(t_n, X_n) . sqrt(h) xi_n,
/// with X from euler_rollout on the same draws. Everything is recorded on the
/// tape of the bound networks.
BsdeRollout bsde_rollout(ad::Tape& tape, const TapeMap& u0, const TapeMap& grad,
                         const problems::ParabolicProblem& problem, const Matrix& initial,
                         const sde::TimeGrid& grid, const sde::NoiseSource& noise);
BsdeRollout bsde_rollout(const nn::BoundNetwork& u0, const nn::BoundNetwork& grad,
                         const problems::ParabolicProblem& problem, const Matrix& initial,
                         const sde::TimeGrid& grid, const sde::NoiseSource& noise);

/// mean over paths of (Y_N - g(X_N))^2.
ad::Var bsde_loss(const BsdeRollout& rollout, const problems::ParabolicProblem& problem);

double bsde_predict(const BsdeNets& nets, const Vector& x);

struct BsdeSolverConfig {
  int paths = 128;
  int steps = 20;
  void validate() const;
};

class BsdeSolver : public train::Solver {
 public:
  BsdeSolver(problems::ParabolicProblem problem, const nn::MlpSpec& base, std::uint64_t seed,
             BsdeSolverConfig cfg);

  std::string name() const override { return "deepbsde"; }
  std::vector<Matrix*> parameters(int group) override;
  train::StepOutput compute(int group, int epoch, const sde::NoiseSource& noise) override;
  RowVector predict(const Matrix& z) const override;
  std::vector<nn::NetworkState> snapshot() const override;
  void restore(const std::vector<nn::NetworkState>& states) override;

  const BsdeNets& nets() const { return nets_; }

 private:
  problems::ParabolicProblem problem_;
  BsdeNets nets_;
  BsdeSolverConfig cfg_;
};

}  // namespace hdpde::bsde
