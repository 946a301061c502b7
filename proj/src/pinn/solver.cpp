#include "hdpde/pinn/solver.hpp"

#include <stdexcept>

namespace hdpde::pinn {

void PinnSolverConfig::validate(int dim) const {
  estimator.validate(dim);
  weights.validate();
  if (points < 1 || path_steps < 1) throw std::invalid_argument("pinn: points and path steps must be positive");
  if (adversarial_steps < 0 || !(adversarial_step > 0.0))
    throw std::invalid_argument("pinn: bad adversarial settings");
  if (predict_pairs < 1) throw std::invalid_argument("pinn: predict_pairs must be positive");
}

Region bounding_box(const Matrix& x, double margin) {
  Region r;
  r.kind = Region::Kind::Box;
  const Vector lo = x.rowwise().minCoeff(), hi = x.rowwise().maxCoeff();
  const Vector pad = margin * (hi - lo);
  r.lower = lo - pad;
  r.upper = hi + pad;
  return r;
}

PinnSolver::PinnSolver(problems::ParabolicProblem problem, const nn::MlpSpec& spec,
                       std::uint64_t seed, PinnSolverConfig cfg)
    : problem_(std::move(problem)), cfg_(cfg) {
  cfg_.validate(problem_.dim);
  if (!spec.time_input || spec.spatial_dim != problem_.dim || spec.output_dim != 1)
    throw std::invalid_argument("pinn: network must map (t, x) to a scalar");
  net_ = nn::initialize(spec, seed);
}

std::string PinnSolver::name() const {
  switch (cfg_.estimator.kind) {
    case EstimatorKind::Full: return "pinn_full";
    case EstimatorKind::SdgdBiased:
    case EstimatorKind::SdgdUnbiased: return "pinn_sdgd";
    case EstimatorKind::HteBiased:
    case EstimatorKind::HteUnbiased: return "pinn_hte";
    case EstimatorKind::Rs: return "pinn_rs";
  }
  return "pinn";
}

std::vector<Matrix*> PinnSolver::parameters(int group) {
  if (group != 0) throw std::out_of_range("pinn: single parameter group");
  std::vector<Matrix*> out;
  for (auto& p : net_.params) out.push_back(&p);
  return out;
}

train::StepOutput PinnSolver::compute(int group, int /*epoch*/, const sde::NoiseSource& noise) {
  if (group != 0) throw std::out_of_range("pinn: single parameter group");
  sde::NoiseSource sampling = noise.split(1), estimator = noise.split(2);
  CollocationBatch batch =
      cfg_.declared_sampler ? declared_collocation(problem_, cfg_.points, sampling)
                            : sample_collocation(problem_, cfg_.points, cfg_.path_steps, sampling);
  if (cfg_.adversarial_steps > 0)
    batch = linf_adversarial_step(net_, problem_, batch, bounding_box(batch.x), cfg_.estimator,
                                  cfg_.adversarial_steps, cfg_.adversarial_step);

  ad::Tape tape;
  const auto bound = nn::bind(tape, net_, true);
  const LossRecord rec = pinn_loss(bound, problem_, batch, cfg_.estimator, cfg_.weights, estimator);
  train::StepOutput out;
  out.loss = rec.value;
  out.residual_mean = rec.residual_mean;
  out.gradients = ad::backward(rec.loss, bound.params);
  return out;
}

RowVector PinnSolver::predict(const Matrix& z) const {
  if (cfg_.estimator.kind != EstimatorKind::Rs) return nn::evaluate_batch(net_, 0.0, z).row(0);
  // Smoothed surrogate with a fixed set of antithetic shifts.
  const sde::NoiseSource shifts(net_.seed ^ 0x5eed);
  RowVector acc = RowVector::Zero(z.cols());
  for (int k = 0; k < cfg_.predict_pairs; ++k) {
    const Matrix delta = cfg_.estimator.rs_sigma *
                         shifts.gaussian_matrix(z.rows(), z.cols(),
                                                static_cast<std::uint64_t>(k) * z.size());
    acc += nn::evaluate_batch(net_, 0.0, z + delta).row(0);
    acc += nn::evaluate_batch(net_, 0.0, z - delta).row(0);
  }
  return acc / (2.0 * cfg_.predict_pairs);
}

void PinnSolver::restore(const std::vector<nn::NetworkState>& states) {
  if (states.size() != 1) throw std::invalid_argument("pinn: restore expects one network");
  net_ = states[0];
}

}  // namespace hdpde::pinn
