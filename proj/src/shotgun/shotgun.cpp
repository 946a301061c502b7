#include "hdpde/shotgun/shotgun.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hdpde::shotgun {

std::string to_string(WeightSchedule w) { return w == WeightSchedule::Linear ? "linear" : "cubic"; }

WeightSchedule schedule_from_string(const std::string& s) {
  if (s == "linear") return WeightSchedule::Linear;
  if (s == "cubic") return WeightSchedule::Cubic;
  throw std::invalid_argument("unknown weight schedule '" + s + "'");
}

double Embedding::weight(double t, double horizon) const {
  if (t >= horizon) return 1.0;
  if (schedule == WeightSchedule::Linear) return std::max(0.0, t / horizon);
  const double n = cubic_n;
  const double base = n * t / horizon - n + 1.0;
  return base <= 0.0 ? 0.0 : base * base * base;
}

double embedded_eval(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                     const Embedding& embedding, double t, const Vector& x) {
  const double w = embedding.weight(t, problem.horizon);
  if (w == 1.0) return problem.terminal(Matrix(x))(0);
  const double u = nn::evaluate(net, t, x);
  if (w == 0.0) return u;
  return (1.0 - w) * u + w * problem.terminal(Matrix(x))(0);
}

ad::Var embedded_values(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                        const Embedding& embedding, ad::Var raw) {
  ad::Tape& tape = raw.tape();
  const int d = problem.dim;
  const RowVector t = raw.value().row(0);
  const Matrix x = raw.value().bottomRows(d);
  RowVector w(t.size());
  for (Eigen::Index k = 0; k < t.size(); ++k) w(k) = embedding.weight(t(k), problem.horizon);
  ad::Var u = nn::forward(net, raw);
  const RowVector g = problem.terminal(x);
  return u * tape.constant(Matrix((1.0 - w.array()).matrix())) +
         tape.constant(Matrix(w.cwiseProduct(g)));
}

double random_difference(const UFunction& u, const problems::ParabolicProblem& problem,
                         double t, const Vector& x, const Vector& xi, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("random_difference: h must be positive");
  if (t + h > problem.horizon * (1.0 + 1e-12))
    throw std::invalid_argument("random_difference: t + h exceeds the horizon");
  const RowVector tr = RowVector::Constant(1, t);
  const RowVector ur = RowVector::Constant(1, problem.dynamics.depends_on_u ? u(t, x) : 0.0);
  const RowVector uarg = problem.dynamics.depends_on_u ? ur : RowVector();
  const Vector next = x + h * problem.dynamics.drift_at(tr, Matrix(x), uarg).col(0) +
                      std::sqrt(h) * problem.dynamics.apply_diffusion(tr, Matrix(x), uarg, Matrix(xi)).col(0);
  return (u(t + h, next) - u(t, x)) / h;
}

void RandomDifferenceConfig::validate() const {
  if (!(h_local > 0.0)) throw std::invalid_argument("shotgun: h_local must be positive");
  if (pairs < 1) throw std::invalid_argument("shotgun: need at least one pair");
}

Matrix draw_probes(int dim, Eigen::Index count, Probe probe, sde::NoiseSource& noise) {
  return probe == Probe::Gaussian ? noise.next_gaussian_matrix(dim, count)
                                  : noise.next_rademacher_matrix(dim, count);
}

AntitheticResult antithetic_residual(const UFunction& u,
                                     const std::function<Vector(double, const Vector&)>& grad_u,
                                     const problems::ParabolicProblem& problem, double t,
                                     const Vector& x, const Matrix& pairs, double h) {
  if (pairs.cols() < 1 || pairs.rows() != problem.dim)
    throw ad::ShapeError("antithetic_residual: pairs must be d x M with M >= 1");
  AntitheticResult out;
  double te = t;
  if (t + h > problem.horizon) {
    te = problem.horizon - h;
    out.clamped = true;
  }
  double acc = 0.0;
  for (Eigen::Index k = 0; k < pairs.cols(); ++k)
    acc += 0.5 * (random_difference(u, problem, te, x, pairs.col(k), h) +
                  random_difference(u, problem, te, x, -pairs.col(k), h));
  acc /= static_cast<double>(pairs.cols());
  const RowVector tr = RowVector::Constant(1, te);
  const RowVector ur = RowVector::Constant(1, u(te, x));
  Matrix g;
  if (problem.source && problem.source_uses_gradient) g = grad_u(te, x);
  out.value = acc - problem.source_values(tr, Matrix(x), ur, g)(0);
  return out;
}

ShotgunLoss shotgun_loss(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                         const Embedding& embedding, const RowVector& t, const Matrix& x,
                         const RandomDifferenceConfig& cfg, sde::NoiseSource& noise) {
  cfg.validate();
  const Eigen::Index b = x.cols();
  if (b == 0 || t.size() != b) throw std::invalid_argument("shotgun_loss: empty or inconsistent batch");
  const int d = problem.dim;
  const double h = cfg.h_local;
  const Eigen::Index m = cfg.pairs;
  ad::Tape& tape = net.params.front().tape();

  ShotgunLoss out;
  RowVector te = t;
  for (Eigen::Index k = 0; k < b; ++k)
    if (te(k) + h > problem.horizon) {
      te(k) = problem.horizon - h;
      ++out.clamped;
    }

  RowVector uv;
  if (problem.dynamics.depends_on_u)
    uv = nn::evaluate_batch(*net.state, te, x).row(0);
  const Matrix base = x + h * problem.dynamics.drift_at(te, x, uv);
  const Matrix xi = draw_probes(d, m * b, cfg.probe, noise);
  // Columns: m blocks of +xi then m blocks of -xi, each of width b.
  Matrix shifted(d + 1, 2 * m * b);
  shifted.row(0).setConstant(0.0);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Matrix step =
        std::sqrt(h) * problem.dynamics.apply_diffusion(te, x, uv, xi.middleCols(k * b, b));
    shifted.block(0, k * b, 1, b) = (te.array() + h).matrix();
    shifted.block(0, (m + k) * b, 1, b) = (te.array() + h).matrix();
    shifted.block(1, k * b, d, b) = base + step;
    shifted.block(1, (m + k) * b, d, b) = base - step;
  }
  Matrix raw0(d + 1, b);
  raw0 << te, x;

  const bool need_grad = problem.source && problem.source_uses_gradient;
  ad::Var in0 = need_grad ? tape.variable(raw0) : tape.constant(raw0);
  ad::Var u0 = embedded_values(net, problem, embedding, in0);
  ad::Var us = embedded_values(net, problem, embedding, tape.constant(shifted));
  ad::Var mean_shift = ad::scale(ad::fold_cols(us, 2 * m), 1.0 / static_cast<double>(2 * m));
  ad::Var diff = ad::scale(mean_shift - u0, 1.0 / h);

  ad::Var gradient;
  if (need_grad) {
    const ad::Var wrt[] = {in0};
    gradient = ad::row_block(ad::grad(ad::sum(u0), wrt, true)[0], 1, d);
    if (!problem.terminal_gradient)
      throw std::invalid_argument("shotgun_loss: source needs the terminal gradient");
    RowVector w(b);
    for (Eigen::Index k = 0; k < b; ++k) w(k) = embedding.weight(te(k), problem.horizon);
    gradient = gradient + tape.constant(Matrix(problem.terminal_gradient(x) * w.asDiagonal()));
  }
  ad::Var r = diff - problem.source_on(tape, te, x, u0, gradient);
  out.loss = ad::mean(ad::square(r));
  out.value = out.loss.value()(0, 0);
  out.residual_mean = r.value().mean();
  return out;
}

void ShotgunConfig::validate() const {
  difference.validate();
  if (points < 1 || path_steps < 1) throw std::invalid_argument("shotgun: bad collocation settings");
  if (embedding.cubic_n < 1) throw std::invalid_argument("shotgun: cubic_n must be positive");
}

ShotgunSolver::ShotgunSolver(problems::ParabolicProblem problem, const nn::MlpSpec& spec,
                             std::uint64_t seed, ShotgunConfig cfg)
    : problem_(std::move(problem)), cfg_(cfg) {
  cfg_.validate();
  if (!spec.time_input || spec.spatial_dim != problem_.dim || spec.output_dim != 1)
    throw std::invalid_argument("shotgun: network must map (t, x) to a scalar");
  net_ = nn::initialize(spec, seed);
}

std::vector<Matrix*> ShotgunSolver::parameters(int group) {
  if (group != 0) throw std::out_of_range("shotgun: single parameter group");
  std::vector<Matrix*> out;
  for (auto& p : net_.params) out.push_back(&p);
  return out;
}

train::StepOutput ShotgunSolver::compute(int group, int /*epoch*/, const sde::NoiseSource& noise) {
  if (group != 0) throw std::out_of_range("shotgun: single parameter group");
  sde::NoiseSource sampling = noise.split(1), probes = noise.split(2);
  const auto batch = pinn::sample_collocation(problem_, cfg_.points, cfg_.path_steps, sampling);
  ad::Tape tape;
  const auto bound = nn::bind(tape, net_, true);
  const auto loss = shotgun_loss(bound, problem_, cfg_.embedding, batch.t, batch.x,
                                 cfg_.difference, probes);
  train::StepOutput out;
  out.loss = loss.value;
  out.residual_mean = loss.residual_mean;
  out.gradients = ad::backward(loss.loss, bound.params);
  return out;
}

RowVector ShotgunSolver::predict(const Matrix& z) const {
  RowVector out = nn::evaluate_batch(net_, 0.0, z).row(0);
  const double w = cfg_.embedding.weight(0.0, problem_.horizon);
  if (w != 0.0) out = (1.0 - w) * out + w * problem_.terminal(z);
  return out;
}

void ShotgunSolver::restore(const std::vector<nn::NetworkState>& states) {
  if (states.size() != 1) throw std::invalid_argument("shotgun: restore expects one network");
  net_ = states[0];
}

}  // namespace hdpde::shotgun
