#pragma once

#include "hdpde/pinn/pinn.hpp"
#include "hdpde/trainer/trainer.hpp"

namespace hdpde::pinn {

struct PinnSolverConfig {
  EstimatorConfig estimator;
  LossWeights weights;
  int points = 128;
  /// Steps of the pilot paths the collocation points are harvested from.
  int path_steps = 20;
  bool declared_sampler = false;
  /// Inner ascent steps of the L-infinity variant; 0 trains on the sampled points.
  int adversarial_steps = 0;
  double adversarial_step = 0.05;
  /// Antithetic pairs used when predicting with the RS surrogate.
  int predict_pairs = 256;

  void validate(int dim) const;
};

class PinnSolver : public train::Solver {
 public:
  PinnSolver(problems::ParabolicProblem problem, const nn::MlpSpec& spec, std::uint64_t seed,
             PinnSolverConfig cfg);

  std::string name() const override;
  std::vector<Matrix*> parameters(int group) override;
  train::StepOutput compute(int group, int epoch, const sde::NoiseSource& noise) override;
  RowVector predict(const Matrix& z) const override;
  std::vector<nn::NetworkState> snapshot() const override { return {net_}; }
  void restore(const std::vector<nn::NetworkState>& states) override;

  const nn::NetworkState& network() const { return net_; }
  const PinnSolverConfig& config() const { return cfg_; }

 private:
  problems::ParabolicProblem problem_;
  nn::NetworkState net_;
  PinnSolverConfig cfg_;
};

/// Box spanned by the batch points, widened by `margin` times its extent.
Region bounding_box(const Matrix& x, double margin = 0.1);

}  // namespace hdpde::pinn
