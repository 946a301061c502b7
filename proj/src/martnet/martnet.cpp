#include "hdpde/martnet/martnet.hpp"

#include "hdpde/pinn/pinn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hdpde::martnet {

ad::Var increments(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                   const RowVector& t, const Matrix& x, const Matrix& xi, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("increment: h must be positive");
  if (x.rows() != problem.dim || xi.rows() != problem.dim || xi.cols() != x.cols() ||
      t.size() != x.cols())
    throw ad::ShapeError("increment: inconsistent shapes");
  if ((t.array() + h > problem.horizon * (1.0 + 1e-12)).any())
    throw std::invalid_argument("increment: t + h exceeds the horizon");
  const nn::MlpSpec& spec = net.state->spec;
  ad::Tape& tape = net.params.front().tape();
  const Eigen::Index k = x.cols();
  const int d = problem.dim;

  const Matrix raw0 = nn::pack_input(spec, t, x);
  RowVector uv;
  if (problem.dynamics.depends_on_u) uv = nn::evaluate_raw(*net.state, raw0).row(0);
  const Matrix next = x + h * problem.dynamics.drift_at(t, x, uv) +
                      std::sqrt(h) * problem.dynamics.apply_diffusion(t, x, uv, xi);
  const Matrix raw1 = nn::pack_input(spec, (t.array() + h).matrix(), next);

  ad::Var u0, u1, gradient;
  if (problem.source && problem.source_uses_gradient) {
    ad::Var in0 = tape.variable(raw0);
    u0 = nn::forward(net, in0);
    const ad::Var wrt[] = {in0};
    gradient = ad::row_block(ad::grad(ad::sum(u0), wrt, true)[0], spec.time_input ? 1 : 0, d);
    u1 = nn::forward(net, tape.constant(raw1));
  } else {
    Matrix both(raw0.rows(), 2 * k);
    both << raw0, raw1;
    ad::Var u = nn::forward(net, tape.constant(both));
    u0 = ad::col_block(u, 0, k);
    u1 = ad::col_block(u, k, k);
  }
  ad::Var f = problem.source_on(tape, t, x, u0, gradient);
  return u1 - u0 - ad::scale(f, h);
}

double increment(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                 double t, const Vector& x, const Vector& xi, double h) {
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, false);
  return increments(bound, problem, RowVector::Constant(1, t), Matrix(x), Matrix(xi), h)
      .value()(0, 0);
}

// ---- plans ------------------------------------------------------------------

GalerkinBatchPlan make_plan(std::vector<int> nodes1, std::vector<int> paths1,
                            std::vector<int> nodes2, std::vector<int> paths2, int steps,
                            int paths) {
  auto check = [](const std::vector<int>& v, int bound, const char* what) {
    if (v.empty()) throw PlanError(std::string("galerkin plan: empty ") + what);
    for (int i : v)
      if (i < 0 || i >= bound) throw PlanError(std::string("galerkin plan: ") + what + " out of range");
  };
  check(nodes1, steps, "node set");
  check(nodes2, steps, "node set");
  check(paths1, paths, "path set");
  check(paths2, paths, "path set");
  const std::set<int> a(paths1.begin(), paths1.end());
  for (int m : paths2)
    if (a.count(m)) throw PlanError("galerkin plan: path sets overlap at path " + std::to_string(m));
  return {std::move(nodes1), std::move(paths1), std::move(nodes2), std::move(paths2)};
}

GalerkinBatchPlan sample_plan(int steps, int paths, int paths_per_set, int nodes_per_set,
                              sde::NoiseSource& noise, bool shared_nodes) {
  if (paths_per_set < 1 || 2 * paths_per_set > paths)
    throw PlanError("galerkin plan: need 2 * paths_per_set <= pilot paths");
  if (nodes_per_set < 0 || nodes_per_set > steps)
    throw PlanError("galerkin plan: nodes_per_set out of range");
  const std::vector<int> perm = noise.next_subset(paths, 2 * paths_per_set);
  std::vector<int> p1(perm.begin(), perm.begin() + paths_per_set);
  std::vector<int> p2(perm.begin() + paths_per_set, perm.end());
  auto nodes = [&]() {
    if (nodes_per_set == 0) {
      std::vector<int> all(steps);
      for (int n = 0; n < steps; ++n) all[n] = n;
      return all;
    }
    return noise.next_subset(steps, nodes_per_set);
  };
  std::vector<int> n1 = nodes();
  std::vector<int> n2 = shared_nodes ? n1 : nodes();
  return make_plan(std::move(n1), std::move(p1), std::move(n2), std::move(p2), steps, paths);
}

// ---- Galerkin estimate --------------------------------------------------------

ad::Var test_function(const nn::BoundNetwork& test_net, const RowVector& t, const Matrix& x) {
  ad::Tape& tape = test_net.params.front().tape();
  return ad::tanh(nn::forward(test_net, tape.constant(nn::pack_input(test_net.state->spec, t, x))));
}

namespace {

// rho(t_n, X_n^m) * M(t_n, X_n^m, xi_n^m) for the (node, path) cells in order, J x K.
ad::Var weighted_increments(const nn::BoundNetwork& net, const nn::BoundNetwork& test_net,
                            const problems::ParabolicProblem& problem,
                            const sde::PathBatch& paths,
                            const std::vector<std::pair<int, int>>& cells, bool antithetic) {
  const Eigen::Index k = static_cast<Eigen::Index>(cells.size());
  const int d = problem.dim;
  RowVector t(k);
  Matrix x(d, k), xi(d, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto [n, m] = cells[static_cast<std::size_t>(c)];
    t(c) = paths.grid.node(n);
    x.col(c) = paths.states[n].col(m);
    xi.col(c) = paths.increments[n].col(m);
  }
  const double h = paths.grid.step();
  ad::Var inc;
  if (antithetic) {
    Matrix both(d, 2 * k);
    both << xi, -xi;
    RowVector tt(2 * k);
    tt << t, t;
    inc = ad::scale(ad::fold_cols(increments(net, problem, tt, x.replicate(1, 2), both, h), 2), 0.5);
  } else {
    inc = increments(net, problem, t, x, xi, h);
  }
  ad::Var rho = test_function(test_net, t, x);
  return rho * ad::broadcast_rows(inc, rho.rows());
}

void append_cells(std::vector<std::pair<int, int>>& cells, const std::vector<int>& outer,
                  const std::vector<int>& inner, bool node_major) {
  for (int a : outer)
    for (int b : inner) cells.emplace_back(node_major ? a : b, node_major ? b : a);
}

}  // namespace

GalerkinPair galerkin_estimate(const nn::BoundNetwork& net, const nn::BoundNetwork& test_net,
                               const problems::ParabolicProblem& problem,
                               const sde::PathBatch& paths, const GalerkinBatchPlan& plan,
                               bool antithetic) {
  make_plan(plan.nodes1, plan.paths1, plan.nodes2, plan.paths2, paths.grid.steps(), paths.paths());
  const Eigen::Index k1 = static_cast<Eigen::Index>(plan.size1());
  const Eigen::Index k2 = static_cast<Eigen::Index>(plan.size2());
  std::vector<std::pair<int, int>> cells;
  append_cells(cells, plan.nodes1, plan.paths1, true);
  append_cells(cells, plan.nodes2, plan.paths2, true);
  ad::Var prod = weighted_increments(net, test_net, problem, paths, cells, antithetic);
  const double h = paths.grid.step();
  GalerkinPair out;
  out.g1 = ad::scale(ad::sum_cols(ad::col_block(prod, 0, k1)), h / static_cast<double>(k1));
  out.g2 = ad::scale(ad::sum_cols(ad::col_block(prod, k1, k2)), h / static_cast<double>(k2));
  return out;
}

ad::Var galerkin_node_product(const nn::BoundNetwork& net, const nn::BoundNetwork& test_net,
                              const problems::ParabolicProblem& problem,
                              const sde::PathBatch& paths, const GalerkinBatchPlan& plan,
                              bool antithetic) {
  make_plan(plan.nodes1, plan.paths1, plan.nodes2, plan.paths2, paths.grid.steps(), paths.paths());
  if (plan.nodes1 != plan.nodes2) throw PlanError("galerkin plan: node sets must match per node");
  const Eigen::Index nodes = static_cast<Eigen::Index>(plan.nodes1.size());
  const Eigen::Index k1 = static_cast<Eigen::Index>(plan.size1());
  const Eigen::Index k2 = static_cast<Eigen::Index>(plan.size2());
  std::vector<std::pair<int, int>> cells;
  append_cells(cells, plan.paths1, plan.nodes1, false);
  append_cells(cells, plan.paths2, plan.nodes2, false);
  ad::Var prod = weighted_increments(net, test_net, problem, paths, cells, antithetic);
  const double h = paths.grid.step();
  // Path-major columns: folding over paths leaves one column per node.
  ad::Var g1 = ad::scale(ad::fold_cols(ad::col_block(prod, 0, k1), static_cast<int>(plan.paths1.size())),
                         h / static_cast<double>(plan.paths1.size()));
  ad::Var g2 = ad::scale(ad::fold_cols(ad::col_block(prod, k1, k2), static_cast<int>(plan.paths2.size())),
                         h / static_cast<double>(plan.paths2.size()));
  return ad::scale(ad::sum(g1 * g2), 1.0 / static_cast<double>(nodes));
}

ad::Var galerkin_product(const GalerkinPair& g) { return ad::sum(g.g1 * g.g2); }

ad::Var terminal_loss(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                      const Matrix& x) {
  ad::Tape& tape = net.params.front().tape();
  const RowVector t = RowVector::Constant(x.cols(), problem.horizon);
  ad::Var u = nn::forward(net, tape.constant(nn::pack_input(net.state->spec, t, x)));
  return ad::mean(ad::square(u - tape.constant(Matrix(problem.terminal(x)))));
}

namespace {

Matrix terminal_states(const sde::PathBatch& paths, const std::vector<int>& a,
                       const std::vector<int>& b) {
  Matrix out(paths.dim(), static_cast<Eigen::Index>(a.size() + b.size()));
  Eigen::Index c = 0;
  for (int m : a) out.col(c++) = paths.states.back().col(m);
  for (int m : b) out.col(c++) = paths.states.back().col(m);
  return out;
}

std::vector<Matrix*> pointers(nn::NetworkState& net) {
  std::vector<Matrix*> out;
  for (auto& p : net.params) out.push_back(&p);
  return out;
}

}  // namespace

StepReport martnet_train_step(nn::NetworkState& net, nn::NetworkState& test_net,
                              const problems::ParabolicProblem& problem,
                              const sde::PathBatch& paths, const GalerkinBatchPlan& plan,
                              train::AdamState& net_opt, train::AdamState& test_opt,
                              double lr, double terminal_weight) {
  StepReport report;
  {
    ad::Tape tape;
    const auto u = nn::bind(tape, net, false);
    const auto rho = nn::bind(tape, test_net, true);
    ad::Var obj = galerkin_product(galerkin_estimate(u, rho, problem, paths, plan));
    report.galerkin = obj.value()(0, 0);
    train::adam_step(test_opt, pointers(test_net), ad::backward(obj, rho.params), lr, +1.0);
  }
  ad::Tape tape;
  const auto u = nn::bind(tape, net, true);
  const auto rho = nn::bind(tape, test_net, false);
  ad::Var obj = galerkin_product(galerkin_estimate(u, rho, problem, paths, plan));
  ad::Var term = terminal_loss(u, problem, terminal_states(paths, plan.paths1, plan.paths2));
  report.terminal = term.value()(0, 0);
  ad::Var loss = obj + ad::scale(term, terminal_weight);
  train::adam_step(net_opt, pointers(net), ad::backward(loss, u.params), lr, -1.0);
  return report;
}

BridgeCheck residual_bridge_check(const nn::NetworkState& net,
                                  const problems::ParabolicProblem& problem, double t,
                                  const Vector& x, double h, int samples,
                                  sde::NoiseSource& noise) {
  if (samples < 2) throw std::invalid_argument("bridge check: need at least two samples");
  const int d = problem.dim;
  const Matrix xi = noise.next_gaussian_matrix(d, samples);
  Matrix both(d, 2 * samples);
  both << xi, -xi;
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, false);
  const RowVector m = increments(bound, problem, RowVector::Constant(2 * samples, t),
                                 x.replicate(1, 2 * samples), both, h)
                          .value()
                          .row(0);
  const Eigen::ArrayXd pair = 0.5 * (m.head(samples) + m.tail(samples)).array() / h;
  BridgeCheck out;
  out.mc_mean = pair.mean();
  out.mc_se = std::sqrt((pair - out.mc_mean).square().sum() / (samples - 1) / samples);
  out.residual = pinn::full_residual(net, problem, t, x);
  return out;
}

// ---- solver -------------------------------------------------------------------

void MartNetConfig::validate() const {
  if (pilot_paths < 2 || pilot_steps < 1 || refresh_every < 1)
    throw std::invalid_argument("martnet: bad pilot settings");
  if (paths_per_set < 1 || 2 * paths_per_set > pilot_paths)
    throw std::invalid_argument("martnet: need 2 * paths_per_set <= pilot_paths");
  if (nodes_per_set < 0 || nodes_per_set > pilot_steps)
    throw std::invalid_argument("martnet: nodes_per_set out of range");
  if (test_outputs < 1 || test_hidden.empty())
    throw std::invalid_argument("martnet: bad test network shape");
  if (!(test_lr_scale > 0.0)) throw std::invalid_argument("martnet: test_lr_scale must be positive");
  if (warm_start_steps < 0 || !(warm_start_lr > 0.0))
    throw std::invalid_argument("martnet: bad warm start settings");
  if (!(terminal_weight > 0.0) || terminal_points < 1)
    throw std::invalid_argument("martnet: bad terminal settings");
}

MartNetSolver::MartNetSolver(problems::ParabolicProblem problem, const nn::MlpSpec& spec,
                             std::uint64_t seed, MartNetConfig cfg)
    : problem_(std::move(problem)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (!spec.time_input || spec.spatial_dim != problem_.dim || spec.output_dim != 1)
    throw std::invalid_argument("martnet: network must map (t, x) to a scalar");
  sde::NoiseSource seeds(seed, 0x3a27);
  net_ = nn::initialize(spec, seeds.bits(0));
  nn::MlpSpec test = spec;
  test.hidden_widths = cfg_.test_hidden;
  test.output_dim = cfg_.test_outputs;
  test_net_ = nn::initialize(test, seeds.bits(1));
}

std::vector<Matrix*> MartNetSolver::parameters(int group) {
  if (group == 0) return pointers(test_net_);
  if (group == 1) return pointers(net_);
  throw std::out_of_range("martnet: two parameter groups");
}

void MartNetSolver::refresh(int epoch, const sde::NoiseSource& noise) {
  sde::NoiseSource init = noise.split(1);
  const Matrix x0 = problem_.initial_sampler(init, cfg_.pilot_paths);
  sde::UProvider frozen;
  if (problem_.dynamics.depends_on_u) {
    const nn::NetworkState snapshot = net_;
    frozen = [snapshot](const RowVector& t, const Matrix& x) {
      return RowVector(nn::evaluate_batch(snapshot, t, x).row(0));
    };
  }
  pilot_ = sde::euler_rollout(problem_.dynamics, frozen, x0,
                              sde::TimeGrid(problem_.horizon, cfg_.pilot_steps), noise.split(2),
                              epoch);
  has_pilot_ = true;
}

void MartNetSolver::begin_epoch(int epoch, const sde::NoiseSource& noise) {
  const bool first = !has_pilot_;
  if (first || sde::refresh_policy(pilot_, epoch, cfg_.refresh_every)) refresh(epoch, noise);
  if (first && cfg_.warm_start_steps > 0) {
    warm_start(noise.split(3));
    // Pilot drift may depend on u; redraw it with the warmed-up network.
    if (problem_.dynamics.depends_on_u) refresh(epoch, noise);
  }
}

train::StepOutput MartNetSolver::compute(int group, int epoch, const sde::NoiseSource& noise) {
  if (group != 0 && group != 1) throw std::out_of_range("martnet: two parameter groups");
  if (!has_pilot_) refresh(epoch, noise.split(0xbe91));
  sde::NoiseSource plan_noise = noise.split(1);
  const auto plan = sample_plan(cfg_.pilot_steps, cfg_.pilot_paths, cfg_.paths_per_set,
                                cfg_.nodes_per_set, plan_noise, cfg_.per_node);
  ad::Tape tape;
  const auto u = nn::bind(tape, net_, group == 1);
  const auto rho = nn::bind(tape, test_net_, group == 0);
  ad::Var obj = cfg_.per_node
                    ? galerkin_node_product(u, rho, problem_, pilot_, plan, cfg_.antithetic_increments)
                    : galerkin_product(galerkin_estimate(u, rho, problem_, pilot_, plan,
                                                         cfg_.antithetic_increments));
  if (cfg_.normalize_galerkin) obj = ad::scale(obj, std::pow(pilot_.grid.step(), -4));
  train::StepOutput out;
  if (group == 0) {
    out.loss = obj.value()(0, 0);
    out.gradients = ad::backward(obj, rho.params);
    if (!cfg_.train_test_net)
      for (auto& g : out.gradients) g.setZero();
    return out;
  }
  sde::NoiseSource pick = noise.split(2);
  const int count = std::min(cfg_.terminal_points, cfg_.pilot_paths);
  const std::vector<int> ids = pick.next_subset(cfg_.pilot_paths, count);
  ad::Var term = terminal_loss(u, problem_, terminal_states(pilot_, ids, {}));
  ad::Var loss = obj + ad::scale(term, cfg_.terminal_weight);
  out.loss = loss.value()(0, 0);
  out.residual_mean = obj.value()(0, 0);
  out.gradients = ad::backward(loss, u.params);
  return out;
}

void MartNetSolver::warm_start(const sde::NoiseSource& noise) {
  auto params = pointers(net_);
  train::AdamState adam = train::make_adam(params);
  const int k = cfg_.terminal_points;
  for (int step = 0; step < cfg_.warm_start_steps; ++step) {
    sde::NoiseSource pick = noise.split(static_cast<std::uint64_t>(step));
    RowVector t(k);
    Matrix x(problem_.dim, k);
    for (int c = 0; c < k; ++c) {
      const auto n = static_cast<int>(pick.next_index(static_cast<std::uint64_t>(cfg_.pilot_steps + 1)));
      const auto m = static_cast<int>(pick.next_index(static_cast<std::uint64_t>(cfg_.pilot_paths)));
      t(c) = pilot_.grid.node(n);
      x.col(c) = pilot_.states[n].col(m);
    }
    ad::Tape tape;
    const auto u = nn::bind(tape, net_, true);
    ad::Var v = nn::forward(u, tape.constant(nn::pack_input(net_.spec, t, x)));
    ad::Var loss = ad::mean(ad::square(v - tape.constant(Matrix(problem_.terminal(x)))));
    train::adam_step(adam, params, ad::backward(loss, u.params), cfg_.warm_start_lr);
  }
}

RowVector MartNetSolver::predict(const Matrix& z) const {
  return nn::evaluate_batch(net_, 0.0, z).row(0);
}

void MartNetSolver::restore(const std::vector<nn::NetworkState>& states) {
  if (states.size() != 2) throw std::invalid_argument("martnet: restore expects two networks");
  net_ = states[0];
  test_net_ = states[1];
}

}  // namespace hdpde::martnet
