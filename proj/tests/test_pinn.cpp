#include "hdpde/pinn/pinn.hpp"
#include "hdpde/pinn/solver.hpp"
#include "hdpde/problems/problem.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hdpde;
using pinn::Matrix;
using pinn::RowVector;
using pinn::Vector;

namespace {

nn::NetworkState random_net(int d, std::uint64_t seed = 3) {
  nn::MlpSpec spec;
  spec.spatial_dim = d;
  spec.hidden_widths = {12, 12};
  auto net = nn::initialize(spec, seed);
  sde::NoiseSource n(seed, 9);
  for (std::size_t k = 1; k < net.params.size(); k += 2)
    net.params[k] = 0.3 * n.next_gaussian_matrix(net.params[k].rows(), 1);
  return net;
}

// u = sin(c (x_1 + ... + x_d)) solves u_t + 1/2 Lap u = -1/2 d c^2 u and is one
// sine unit exactly.
problems::ParabolicProblem sine_problem(int d, double c) {
  problems::ParabolicProblem p;
  p.name = "sine";
  p.dim = d;
  p.dynamics.dim = d;
  p.dynamics.drift = [](const RowVector&, const Matrix& x, const RowVector&) {
    return Matrix::Zero(x.rows(), x.cols());
  };
  p.dynamics.diffusion_diag = [](const RowVector&, const Matrix& x, const RowVector&) {
    return Matrix::Ones(x.rows(), x.cols());
  };
  const double k = -0.5 * d * c * c;
  p.source = [k](const problems::SourceArgs& a) { return ad::scale(a.u, k); };
  p.terminal = [c](const Matrix& x) -> RowVector {
    return (c * x.colwise().sum()).array().sin().matrix();
  };
  p.initial_sampler = [d](sde::NoiseSource& n, int m) { return n.next_gaussian_matrix(d, m); };
  p.test_sampler = p.initial_sampler;
  return p;
}

nn::NetworkState sine_net(int d, double c) {
  nn::MlpSpec spec;
  spec.spatial_dim = d;
  spec.hidden_widths = {1};
  spec.activation = nn::Activation::Sin;
  auto net = nn::initialize(spec, 0);
  for (auto& p : net.params) p.setZero();
  net.params[0].rightCols(d).setConstant(c);
  net.params[2](0, 0) = 1.0;
  return net;
}

double fd_residual(const nn::NetworkState& net, const problems::ParabolicProblem& p, double t,
                   const Vector& x) {
  const double h = 1e-3;
  auto u = [&](double s, const Vector& y) { return nn::evaluate(net, s, y); };
  const double u0 = u(t, x);
  const double dt = (u(t + h, x) - u(t - h, x)) / (2 * h);
  const int d = p.dim;
  Vector g(d);
  Matrix hess(d, d);
  for (int i = 0; i < d; ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (u(t, xp) - u(t, xm)) / (2 * h);
    for (int j = 0; j < d; ++j) {
      auto at = [&](double si, double sj) {
        Vector y = x;
        y(i) += si * h;
        y(j) += sj * h;
        return u(t, y);
      };
      hess(i, j) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
    }
  }
  const RowVector tr = RowVector::Constant(1, t), ur = RowVector::Constant(1, u0);
  const Vector mu = p.dynamics.drift_at(tr, Matrix(x), ur).col(0);
  const Matrix a = p.dynamics.covariance(t, x, u0);
  const double f = p.source_values(tr, Matrix(x), ur, Matrix(g))(0);
  return dt + mu.dot(g) + 0.5 * (a * hess).trace() - f;
}

std::vector<problems::ParabolicProblem> sample_problems(int d) {
  std::vector<problems::ParabolicProblem> out;
  out.push_back(problems::make_problem(problems::HeatSanityInstance{d, 1.0}));
  out.push_back(problems::make_problem(problems::make_hjb_instance(d, 4)));
  out.push_back(problems::make_problem(problems::scale_bs(problems::make_bs_instance(d), 100.0)));
  return out;
}

Vector point_for(const problems::ParabolicProblem& p, std::uint64_t seed) {
  sde::NoiseSource n(seed);
  return p.initial_sampler(n, 1).col(0);
}

void enumerate_subsets(int n, int k, int start, std::vector<int>& cur,
                       std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == k) {
    out.push_back(cur);
    return;
  }
  for (int i = start; i < n; ++i) {
    cur.push_back(i);
    enumerate_subsets(n, k, i + 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

TEST(PinnConfig, NamesAndValidation) {
  for (auto k : {pinn::EstimatorKind::Full, pinn::EstimatorKind::SdgdBiased,
                 pinn::EstimatorKind::SdgdUnbiased, pinn::EstimatorKind::HteBiased,
                 pinn::EstimatorKind::HteUnbiased, pinn::EstimatorKind::Rs})
    EXPECT_EQ(pinn::estimator_from_string(pinn::to_string(k)), k);
  EXPECT_THROW(pinn::estimator_from_string("sgd"), std::invalid_argument);
  EXPECT_EQ(pinn::probe_from_string("axis_scaled"), pinn::ProbeKind::AxisScaled);
  pinn::EstimatorConfig cfg;
  cfg.index_batch = 4;
  EXPECT_THROW(cfg.validate(3), std::invalid_argument);
  cfg.index_batch = 0;
  EXPECT_THROW(cfg.validate(3), std::invalid_argument);
  cfg.index_batch = 1;
  cfg.hte_count = 0;
  EXPECT_THROW(cfg.validate(3), std::invalid_argument);
  EXPECT_THROW((pinn::LossWeights{0.0, 1.0}.validate()), std::invalid_argument);
}

TEST(Sdgd, QuadraticExample) {
  // u = x1^2 + 2 x2^2 + 3 x3^2, A = I
  const Matrix a = Matrix::Identity(3, 3);
  std::map<int, Vector> rows;
  rows[0] = Vector::Unit(3, 0) * 2;
  rows[1] = Vector::Unit(3, 1) * 4;
  rows[2] = Vector::Unit(3, 2) * 6;
  EXPECT_DOUBLE_EQ(pinn::sdgd_second_order(a, rows, {0}), 3.0);
  EXPECT_DOUBLE_EQ(pinn::sdgd_second_order(a, rows, {0, 1, 2}), 6.0);
  const double mean = (pinn::sdgd_second_order(a, rows, {0}) +
                       pinn::sdgd_second_order(a, rows, {1}) +
                       pinn::sdgd_second_order(a, rows, {2})) / 3.0;
  EXPECT_DOUBLE_EQ(mean, 6.0);
  EXPECT_THROW(pinn::sdgd_second_order(a, rows, {}), std::invalid_argument);
}

TEST(Sdgd, EnumerationIsUnbiased) {
  for (const auto& p : sample_problems(5)) {
    const auto net = random_net(5);
    const Vector x = point_for(p, 1);
    const double full = pinn::full_residual(net, p, 0.4, x);
    for (int k = 1; k <= 5; ++k) {
      std::vector<std::vector<int>> sets;
      std::vector<int> cur;
      enumerate_subsets(5, k, 0, cur, sets);
      double acc = 0.0;
      for (const auto& s : sets) acc += pinn::sdgd_residual(net, p, 0.4, x, s);
      EXPECT_NEAR(acc / sets.size(), full, 1e-10 * std::max(1.0, std::abs(full))) << p.name << k;
    }
  }
}

TEST(Residual, ConstantNetOnHeatIsZero) {
  auto net = random_net(3);
  for (auto& w : net.params) w.setZero();
  net.params.back()(0, 0) = 2.5;
  const auto p = problems::make_problem(problems::HeatSanityInstance{3, 1.0});
  EXPECT_EQ(pinn::full_residual(net, p, 0.3, Vector::Ones(3)), 0.0);
}

TEST(Residual, ExactSolutionGivesZero) {
  const int d = 3;
  const auto p = sine_problem(d, 0.7);
  const auto net = sine_net(d, 0.7);
  sde::NoiseSource n(2);
  for (int k = 0; k < 5; ++k) {
    const Vector x = n.next_gaussian_matrix(d, 1).col(0);
    EXPECT_NEAR(pinn::full_residual(net, p, 0.1 * k, x), 0.0, 1e-8);
  }
}

TEST(Residual, MatchesFiniteDifferenceOracle) {
  for (const auto& p : sample_problems(3)) {
    const auto net = random_net(3, 11);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const Vector x = point_for(p, s);
      const double r = pinn::full_residual(net, p, 0.25 + 0.2 * s, x);
      const double fd = fd_residual(net, p, 0.25 + 0.2 * s, x);
      EXPECT_NEAR(r, fd, 1e-3 * std::max(1.0, std::abs(fd))) << p.name;
    }
  }
}

TEST(Residual, BatchedFullMatchesPointwise) {
  for (const auto& p : sample_problems(4)) {
    const auto net = random_net(4, 5);
    sde::NoiseSource n(8);
    const Matrix x = p.initial_sampler(n, 6);
    const RowVector t = n.next_uniform_matrix(1, 6);
    ad::Tape tape;
    const auto bound = nn::bind(tape, net, true);
    pinn::EstimatorConfig cfg;
    const auto terms = pinn::residual_terms(bound, p, t, x, cfg, n);
    for (int b = 0; b < 6; ++b) {
      const double r = pinn::full_residual(net, p, t(b), x.col(b));
      EXPECT_NEAR(terms.residual.value()(0, b), r, 1e-10 * std::max(1.0, std::abs(r))) << p.name;
    }
  }
}

TEST(Residual, BatchedSdgdMatchesPointwise) {
  const auto p = problems::make_problem(problems::scale_bs(problems::make_bs_instance(6), 100.0));
  const auto net = random_net(6, 5);
  sde::NoiseSource n(8);
  const Matrix x = p.initial_sampler(n, 3);
  const RowVector t = RowVector::Constant(3, 0.5);
  pinn::EstimatorConfig cfg;
  cfg.kind = pinn::EstimatorKind::SdgdBiased;
  cfg.index_batch = 2;
  sde::NoiseSource draws(21), replay(21);
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, true);
  const auto terms = pinn::residual_terms(bound, p, t, x, cfg, draws);
  const auto idx = replay.next_subset(6, 2);
  for (int b = 0; b < 3; ++b)
    EXPECT_NEAR(terms.residual.value()(0, b), pinn::sdgd_residual(net, p, 0.5, x.col(b), idx),
                1e-10);
}

TEST(Residual, RsApproachesFullResidualForSmallSigma) {
  const auto p = problems::make_problem(problems::make_hjb_instance(3, 4));
  const auto net = random_net(3, 2);
  const Vector x = point_for(p, 3);
  pinn::EstimatorConfig cfg;
  cfg.kind = pinn::EstimatorKind::Rs;
  cfg.rs_sigma = 0.02;
  cfg.rs_pairs = 200000;
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, false);
  sde::NoiseSource n(4);
  const auto terms = pinn::residual_terms(bound, p, RowVector::Constant(1, 0.3), Matrix(x), cfg, n);
  const double r = pinn::full_residual(net, p, 0.3, x);
  EXPECT_NEAR(terms.residual.value()(0, 0), r, 2e-2 * std::max(1.0, std::abs(r)));
}

TEST(Hte, ExamplesAreExact) {
  sde::NoiseSource n(1);
  auto identity = [](const Vector& v) { return v; };
  for (int k = 0; k < 10; ++k)
    EXPECT_DOUBLE_EQ(pinn::hte_trace_estimate(identity, 7, 1, pinn::ProbeKind::Rademacher, n), 7.0);
  const Matrix diag = Vector(Vector::LinSpaced(3, 1, 3)).asDiagonal();
  auto apply_diag = [&](const Vector& v) -> Vector { return diag * v; };
  for (int k = 0; k < 10; ++k)
    EXPECT_DOUBLE_EQ(pinn::hte_trace_estimate(apply_diag, 3, 1, pinn::ProbeKind::Rademacher, n), 6.0);
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  double acc = 0.0;
  for (double a : {-1.0, 1.0})
    for (double b : {-1.0, 1.0}) {
      const Vector v = Vector{{a, b}};
      acc += v.dot(swap * v);
    }
  EXPECT_EQ(acc / 4.0, 0.0);
}

TEST(Hte, EnumerationGivesTrace) {
  sde::NoiseSource n(5);
  for (int d = 1; d <= 4; ++d) {
    Matrix h = n.next_gaussian_matrix(d, d);
    h = (h + h.transpose()).eval();
    double acc = 0.0;
    for (int mask = 0; mask < (1 << d); ++mask) {
      Vector v(d);
      for (int i = 0; i < d; ++i) v(i) = (mask >> i & 1) ? 1.0 : -1.0;
      acc += v.dot(h * v);
    }
    EXPECT_NEAR(acc / (1 << d), h.trace(), 1e-12);
  }
}

TEST(Hte, MonteCarloAtFiftyDimensions) {
  sde::NoiseSource n(6);
  const int d = 50, draws = 100000;
  Matrix h = n.next_gaussian_matrix(d, d);
  h = (h + h.transpose()).eval();
  auto apply = [&](const Vector& v) -> Vector { return h * v; };
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    const double e = pinn::hte_trace_estimate(apply, d, 1, pinn::ProbeKind::Rademacher, n);
    s += e;
    s2 += e * e;
  }
  const double mean = s / draws;
  const double se = std::sqrt((s2 / draws - mean * mean) / draws);
  EXPECT_LT(std::abs(mean - h.trace()), 3 * se);
}

TEST(Hte, AxisScaledProbeReproducesSdgd) {
  sde::NoiseSource n(7);
  for (int k = 0; k < 20; ++k) {
    const Vector v = pinn::draw_probe(5, pinn::ProbeKind::AxisScaled, n);
    EXPECT_EQ((v.array() != 0.0).count(), 1);
    EXPECT_DOUBLE_EQ(v.squaredNorm(), 5.0);
  }
  // v = sqrt(d) e_i gives d H_ii, the SDGD estimate with |I| = 1 (times 2).
  const Matrix h = Vector{{1.0, 4.0, -2.0, 0.5, 3.0}}.asDiagonal();
  const Matrix a = Matrix::Identity(5, 5);
  for (int i = 0; i < 5; ++i) {
    const Vector v = std::sqrt(5.0) * Vector::Unit(5, i);
    std::map<int, Vector> rows{{i, h.row(i).transpose()}};
    EXPECT_NEAR(0.5 * v.dot(h * v), pinn::sdgd_second_order(a, rows, {i}), 1e-14);
  }
}

TEST(VarianceSplit, DiagonalHessianHteHasZeroVariance) {
  const Matrix h = Vector{{1.5, -2.0, 0.25, 7.0}}.asDiagonal();
  auto apply = [&](const Vector& v) -> Vector { return h * v; };
  sde::NoiseSource n(2);
  const double first = pinn::hte_trace_estimate(apply, 4, 1, pinn::ProbeKind::Rademacher, n);
  for (int k = 0; k < 100; ++k)
    EXPECT_EQ(pinn::hte_trace_estimate(apply, 4, 1, pinn::ProbeKind::Rademacher, n), first);
}

TEST(VarianceSplit, ConstantDiagonalSdgdHasZeroVariance) {
  sde::NoiseSource n(3);
  Matrix h = n.next_gaussian_matrix(6, 6);
  h = (h + h.transpose()).eval();
  h.diagonal().setConstant(1.75);
  std::map<int, Vector> rows;
  for (int i = 0; i < 6; ++i) rows[i] = h.row(i).transpose();
  const Matrix a = Matrix::Identity(6, 6);
  const double first = pinn::sdgd_second_order(a, rows, {0});
  for (int k = 0; k < 50; ++k)
    EXPECT_EQ(pinn::sdgd_second_order(a, rows, n.next_subset(6, 1 + k % 6)), first);
}

TEST(PinnLoss, ExactSolutionHasZeroLoss) {
  const int d = 3;
  const auto p = sine_problem(d, 0.6);
  const auto net = sine_net(d, 0.6);
  sde::NoiseSource n(5);
  const auto batch = pinn::sample_collocation(p, 16, 10, n);
  std::vector<pinn::EstimatorConfig> cfgs(4);
  cfgs[1].kind = pinn::EstimatorKind::SdgdBiased;
  cfgs[1].index_batch = 2;
  cfgs[2].kind = pinn::EstimatorKind::SdgdUnbiased;
  cfgs[3].kind = pinn::EstimatorKind::HteBiased;
  cfgs[3].probe = pinn::ProbeKind::AxisScaled;
  for (const auto& cfg : cfgs) {
    ad::Tape tape;
    const auto bound = nn::bind(tape, net, true);
    const auto rec = pinn::pinn_loss(bound, p, batch, cfg, {}, n);
    EXPECT_LE(rec.value, 1e-8) << pinn::to_string(cfg.kind);
  }
}

TEST(PinnLoss, BiasedAndUnbiasedCoincideWithFullIndexSet) {
  const auto p = problems::make_problem(problems::make_hjb_instance(4, 1));
  const auto net = random_net(4);
  sde::NoiseSource n(5);
  const auto batch = pinn::sample_collocation(p, 8, 10, n);
  pinn::EstimatorConfig biased, unbiased;
  biased.kind = pinn::EstimatorKind::SdgdBiased;
  unbiased.kind = pinn::EstimatorKind::SdgdUnbiased;
  biased.index_batch = unbiased.index_batch = 4;
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, true);
  const double lb = pinn::pinn_loss(bound, p, batch, biased, {}, n).value;
  const double lu = pinn::pinn_loss(bound, p, batch, unbiased, {}, n).value;
  EXPECT_NEAR(lb, lu, 1e-12 * lb);
}

TEST(PinnLoss, UnbiasedMatchesFullInExpectation) {
  const auto p = problems::make_problem(problems::HeatSanityInstance{4, 1.0});
  const auto net = random_net(4, 13);
  sde::NoiseSource n(5);
  const auto batch = pinn::sample_collocation(p, 4, 10, n);
  pinn::EstimatorConfig full, unbiased;
  unbiased.kind = pinn::EstimatorKind::SdgdUnbiased;
  unbiased.index_batch = 1;
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, false);
  const std::size_t mark = tape.size();
  const double target = pinn::pinn_loss(bound, p, batch, full, {}, n).residual_loss;
  const int reps = 10000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < reps; ++k) {
    tape.truncate(mark);
    const double v = pinn::pinn_loss(bound, p, batch, unbiased, {}, n).residual_loss;
    s += v;
    s2 += v * v;
  }
  const double mean = s / reps;
  const double se = std::sqrt((s2 / reps - mean * mean) / reps);
  EXPECT_LT(std::abs(mean - target), 3 * se);
}

TEST(PinnLoss, EmptyBatchThrows) {
  const auto p = problems::make_problem(problems::HeatSanityInstance{2, 1.0});
  const auto net = random_net(2);
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, true);
  sde::NoiseSource n;
  pinn::CollocationBatch empty;
  EXPECT_THROW(pinn::pinn_loss(bound, p, empty, {}, {}, n), std::invalid_argument);
}

TEST(PinnLoss, ReportsEstimatorVariance) {
  const auto p = problems::make_problem(problems::make_hjb_instance(6, 1));
  const auto net = random_net(6);
  sde::NoiseSource n(5);
  const auto batch = pinn::sample_collocation(p, 8, 10, n);
  pinn::EstimatorConfig cfg;
  cfg.kind = pinn::EstimatorKind::SdgdBiased;
  cfg.index_batch = 3;
  ad::Tape tape;
  const auto bound = nn::bind(tape, net, true);
  const auto rec = pinn::pinn_loss(bound, p, batch, cfg, {}, n);
  EXPECT_GT(rec.estimator_variance, 0.0);
  cfg.kind = pinn::EstimatorKind::Full;
  EXPECT_EQ(pinn::pinn_loss(bound, p, batch, cfg, {}, n).estimator_variance, 0.0);
}

TEST(Collocation, PointsLieOnGridNodes) {
  const auto p = problems::make_problem(problems::HeatSanityInstance{3, 2.0});
  sde::NoiseSource n(1);
  const auto b = pinn::sample_collocation(p, 50, 20, n);
  ASSERT_EQ(b.t.size(), 50);
  ASSERT_EQ(b.x.cols(), 50);
  for (int j = 0; j < 50; ++j) {
    EXPECT_GE(b.t(j), 0.0);
    EXPECT_LE(b.t(j), 2.0);
    EXPECT_NEAR(b.t(j) / 0.1, std::round(b.t(j) / 0.1), 1e-9);
  }
  EXPECT_EQ(b.terminal_target, p.terminal(b.terminal_x));
  const auto dcl = pinn::declared_collocation(p, 30, n);
  EXPECT_TRUE((dcl.t.array() >= 0.0).all() && (dcl.t.array() <= 2.0).all());
  EXPECT_THROW(pinn::sample_collocation(p, 0, 20, n), std::invalid_argument);
}

TEST(Adversarial, ConstantResidualLeavesPoints) {
  pinn::Region box;
  box.lower = Vector::Constant(2, -1.0);
  box.upper = Vector::Constant(2, 1.0);
  sde::NoiseSource n(1);
  const Matrix pool = 2.0 * n.next_uniform_matrix(2, 10).array() - 1.0;
  auto constant = [](ad::Tape& tape, ad::Var x) {
    return ad::add_scalar(ad::scale(ad::sum_rows(x), 0.0), 3.0);
  };
  EXPECT_EQ(pinn::ascend_points(constant, pool, box), pool);
}

TEST(Adversarial, NormSquaredReachesBoundary) {
  pinn::Region ball;
  ball.kind = pinn::Region::Kind::Ball;
  ball.center = Vector::Zero(3);
  ball.radius = 1.0;
  sde::NoiseSource n(1);
  const Matrix pool = 0.3 * n.next_gaussian_matrix(3, 8);
  auto norm2 = [](ad::Tape&, ad::Var x) { return ad::sum_rows(ad::square(x)); };
  const Matrix out = pinn::ascend_points(norm2, pool, ball, 40, 0.05);
  for (int j = 0; j < 8; ++j) EXPECT_NEAR(out.col(j).norm(), 1.0, 1e-12);
}

TEST(Adversarial, BeatsRandomSearch) {
  const auto p = problems::make_problem(problems::HeatSanityInstance{2, 1.0});
  const auto net = random_net(2, 17);
  pinn::Region box;
  box.lower = Vector::Constant(2, -1.5);
  box.upper = Vector::Constant(2, 1.5);
  sde::NoiseSource n(3);
  pinn::CollocationBatch pool;
  pool.t = RowVector::Constant(32, 0.5);
  pool.x = 3.0 * n.next_uniform_matrix(2, 32).array() - 1.5;
  const pinn::EstimatorConfig cfg;
  const auto moved = pinn::linf_adversarial_step(net, p, pool, box, cfg, 60, 0.05);
  EXPECT_EQ(moved.t, pool.t);
  double found = 0.0;
  for (int j = 0; j < 32; ++j) {
    EXPECT_TRUE((moved.x.col(j).array() >= -1.5).all() && (moved.x.col(j).array() <= 1.5).all());
    found = std::max(found, std::abs(pinn::full_residual(net, p, 0.5, moved.x.col(j))));
  }
  double probe = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Vector x = 3.0 * n.next_uniform_matrix(2, 1).col(0).array() - 1.5;
    probe = std::max(probe, std::abs(pinn::full_residual(net, p, 0.5, x)));
  }
  EXPECT_GE(found, probe);
}

TEST(PinnSolver, ComputeIsDeterministic) {
  const auto p = problems::make_problem(problems::HeatSanityInstance{3, 1.0});
  nn::MlpSpec spec;
  spec.spatial_dim = 3;
  spec.hidden_widths = {8, 8};
  pinn::PinnSolverConfig cfg;
  cfg.estimator.kind = pinn::EstimatorKind::HteBiased;
  cfg.points = 16;
  pinn::PinnSolver a(p, spec, 4, cfg), b(p, spec, 4, cfg);
  const sde::NoiseSource noise(9);
  const auto ra = a.compute(0, 0, noise), rb = b.compute(0, 0, noise);
  EXPECT_EQ(ra.loss, rb.loss);
  ASSERT_EQ(ra.gradients.size(), rb.gradients.size());
  for (std::size_t k = 0; k < ra.gradients.size(); ++k) EXPECT_EQ(ra.gradients[k], rb.gradients[k]);
  EXPECT_EQ(a.name(), "pinn_hte");
  EXPECT_EQ(a.predict(Matrix::Zero(3, 4)).size(), 4);
}
