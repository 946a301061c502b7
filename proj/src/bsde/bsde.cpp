#include "hdpde/bsde/bsde.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hdpde::bsde {

BsdeNets make_nets(const nn::MlpSpec& base, int dim, std::uint64_t seed) {
  nn::MlpSpec u0 = base, grad = base;
  u0.spatial_dim = grad.spatial_dim = dim;
  u0.time_input = false;
  u0.output_dim = 1;
  grad.time_input = true;
  grad.output_dim = dim;
  sde::NoiseSource seeds(seed, 0xb5de);
  return {nn::initialize(u0, seeds.bits(0)), nn::initialize(grad, seeds.bits(1))};
}

namespace {

void check_finite(const Matrix& y, int step) {
  for (Eigen::Index m = 0; m < y.cols(); ++m)
    if (!std::isfinite(y(0, m))) {
      std::ostringstream msg;
      msg << "bsde rollout: non-finite Y on path " << m << " at step " << step;
      throw sde::RolloutError(msg.str(), static_cast<int>(m), step);
    }
}

}  // namespace

BsdeRollout bsde_rollout(const nn::BoundNetwork& u0, const nn::BoundNetwork& grad,
                         const problems::ParabolicProblem& problem, const Matrix& initial,
                         const sde::TimeGrid& grid, const sde::NoiseSource& noise) {
  if (u0.state->spec.time_input || grad.state->spec.output_dim != problem.dim)
    throw ad::ShapeError("bsde: network shapes do not match the problem");
  auto wrap = [](const nn::BoundNetwork& net) {
    return [&net](ad::Tape& tape, const Matrix& raw) {
      return nn::forward(net, tape.constant(raw));
    };
  };
  return bsde_rollout(u0.params.front().tape(), wrap(u0), wrap(grad), problem, initial, grid,
                      noise);
}

BsdeRollout bsde_rollout(ad::Tape& tape, const TapeMap& u0, const TapeMap& grad,
                         const problems::ParabolicProblem& problem, const Matrix& initial,
                         const sde::TimeGrid& grid, const sde::NoiseSource& noise) {
  if (problem.dynamics.depends_on_u)
    throw std::invalid_argument("bsde: solution-dependent dynamics are not supported");
  const auto paths = sde::euler_rollout(problem.dynamics, {}, initial, grid, noise);
  const int n_steps = grid.steps();
  const Eigen::Index m = initial.cols();
  const int d = problem.dim;
  const double h = grid.step(), sqrt_h = std::sqrt(h);

  // grad u at every (t_n, X_n) in one batched pass.
  Matrix raw(d + 1, n_steps * m);
  for (int n = 0; n < n_steps; ++n) {
    raw.block(0, n * m, 1, m).setConstant(grid.node(n));
    raw.block(1, n * m, d, m) = paths.states[n];
  }
  ad::Var z_all = grad(tape, raw);
  if (z_all.rows() != d || z_all.cols() != n_steps * m)
    throw ad::ShapeError("bsde: gradient model must return d x M per step");

  BsdeRollout out;
  out.y0 = u0(tape, initial);
  check_finite(out.y0.value(), 0);
  ad::Var y = out.y0;
  for (int n = 0; n < n_steps; ++n) {
    const RowVector t = RowVector::Constant(m, grid.node(n));
    const Matrix& x = paths.states[n];
    ad::Var z = ad::col_block(z_all, n * m, m);
    const Matrix scaled_xi = sqrt_h * paths.increments[n];
    try {
      ad::Var sz;  // sigma^T z
      if (problem.dynamics.diagonal()) {
        sz = z * tape.constant(problem.dynamics.diffusion_diag(t, x, RowVector()));
      } else {
        Matrix st(d, d * m);
        for (Eigen::Index b = 0; b < m; ++b)
          st.middleCols(b * d, d) =
              problem.dynamics.full_diffusion(t(b), x.col(b), 0.0).transpose();
        sz = tape.constant(Matrix::Zero(d, m));
        for (Eigen::Index b = 0; b < m; ++b)
          sz = sz + ad::pad_cols(ad::matmul(tape.constant(Matrix(st.middleCols(b * d, d))),
                                            ad::col_block(z, b, 1)),
                                 b, m);
      }
      ad::Var noise_term = ad::sum_rows(sz * tape.constant(scaled_xi));
      ad::Var f = problem.source_on(tape, t, x, y, z);
      y = y + ad::scale(f, h) + noise_term;
    } catch (const ad::NumericError&) {
      // Locate the first path whose plain update overflows.
      const RowVector plain =
          y.value().row(0) + z.value().cwiseProduct(scaled_xi).colwise().sum();
      int path = 0;
      for (Eigen::Index k = 0; k < m; ++k)
        if (!std::isfinite(plain(k)) || !z.value().col(k).allFinite()) {
          path = static_cast<int>(k);
          break;
        }
      throw sde::RolloutError("bsde rollout: non-finite Y", path, n + 1);
    }
    check_finite(y.value(), n + 1);
  }
  out.x_terminal = paths.states.back();
  out.y_terminal = y;
  return out;
}

ad::Var bsde_loss(const BsdeRollout& rollout, const problems::ParabolicProblem& problem) {
  ad::Tape& tape = rollout.y_terminal.tape();
  const RowVector g = problem.terminal(rollout.x_terminal);
  return ad::mean(ad::square(rollout.y_terminal - tape.constant(Matrix(g))));
}

double bsde_predict(const BsdeNets& nets, const Vector& x) {
  return nn::evaluate(nets.u0_net, 0.0, x);
}

void BsdeSolverConfig::validate() const {
  if (paths < 1) throw std::invalid_argument("bsde: paths must be positive");
  if (steps < 1) throw std::invalid_argument("bsde: steps must be positive");
}

BsdeSolver::BsdeSolver(problems::ParabolicProblem problem, const nn::MlpSpec& base,
                       std::uint64_t seed, BsdeSolverConfig cfg)
    : problem_(std::move(problem)), cfg_(cfg) {
  cfg_.validate();
  nets_ = make_nets(base, problem_.dim, seed);
}

std::vector<Matrix*> BsdeSolver::parameters(int group) {
  if (group != 0) throw std::out_of_range("bsde: single parameter group");
  std::vector<Matrix*> out;
  for (auto& p : nets_.u0_net.params) out.push_back(&p);
  for (auto& p : nets_.grad_net.params) out.push_back(&p);
  return out;
}

train::StepOutput BsdeSolver::compute(int group, int /*epoch*/, const sde::NoiseSource& noise) {
  if (group != 0) throw std::out_of_range("bsde: single parameter group");
  sde::NoiseSource init = noise.split(1);
  const Matrix x0 = problem_.initial_sampler(init, cfg_.paths);
  ad::Tape tape;
  const auto u0 = nn::bind(tape, nets_.u0_net, true);
  const auto grad = nn::bind(tape, nets_.grad_net, true);
  const auto rollout = bsde_rollout(u0, grad, problem_, x0,
                                    sde::TimeGrid(problem_.horizon, cfg_.steps), noise.split(2));
  ad::Var loss = bsde_loss(rollout, problem_);
  std::vector<ad::Var> params = u0.params;
  params.insert(params.end(), grad.params.begin(), grad.params.end());
  train::StepOutput out;
  out.loss = loss.value()(0, 0);
  out.residual_mean = (rollout.y_terminal.value().row(0) - problem_.terminal(rollout.x_terminal)).mean();
  out.gradients = ad::backward(loss, params);
  return out;
}

RowVector BsdeSolver::predict(const Matrix& z) const {
  return nn::evaluate_raw(nets_.u0_net, nn::pack_input(nets_.u0_net.spec, {}, z)).row(0);
}

std::vector<nn::NetworkState> BsdeSolver::snapshot() const {
  return {nets_.u0_net, nets_.grad_net};
}

void BsdeSolver::restore(const std::vector<nn::NetworkState>& states) {
  if (states.size() != 2) throw std::invalid_argument("bsde: restore expects two networks");
  nets_.u0_net = states[0];
  nets_.grad_net = states[1];
}

}  // namespace hdpde::bsde
