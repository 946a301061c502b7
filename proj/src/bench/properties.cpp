#include "hdpde/bench/properties.hpp"

#include "hdpde/autodiff/tape.hpp"
#include "hdpde/martnet/martnet.hpp"
#include "hdpde/network/mlp.hpp"
#include "hdpde/network/smoothing.hpp"
#include "hdpde/pinn/pinn.hpp"
#include "hdpde/problems/problem.hpp"
#include "hdpde/shotgun/shotgun.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace hdpde::bench {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

nn::NetworkState random_net(int d, std::uint64_t seed) {
  nn::MlpSpec spec;
  spec.spatial_dim = d;
  spec.hidden_widths = {16, 16};
  auto net = nn::initialize(spec, seed);
  sde::NoiseSource n(seed, 9);
  for (std::size_t k = 1; k < net.params.size(); k += 2)
    net.params[k] = 0.3 * n.next_gaussian_matrix(net.params[k].rows(), 1);
  return net;
}

void subsets(int n, int k, int start, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == k) {
    out.push_back(cur);
    return;
  }
  for (int i = start; i < n; ++i) {
    cur.push_back(i);
    subsets(n, k, i + 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

CriterionResult check_sdgd_unbiased() {
  CriterionResult r{1, "SDGD unbiasedness by enumeration", true, ""};
  const int d = 6;
  std::vector<problems::ParabolicProblem> ps = {
      problems::make_problem(problems::HeatSanityInstance{d, 1.0}),
      problems::make_problem(problems::scale_bs(problems::make_bs_instance(d), 100.0))};
  double worst = 0.0;
  for (const auto& p : ps) {
    const auto net = random_net(d, 3);
    sde::NoiseSource n(1);
    const Vector x = p.initial_sampler(n, 1).col(0);
    std::vector<int> all(d);
    for (int i = 0; i < d; ++i) all[i] = i;
    const auto rows = nn::hessian_rows(net, 0.4, x, all);
    const Matrix a = p.dynamics.covariance(0.4, x, 0.0);
    const double full = pinn::sdgd_second_order(a, rows, all);
    for (int k = 1; k <= d; ++k) {
      std::vector<std::vector<int>> sets;
      std::vector<int> cur;
      subsets(d, k, 0, cur, sets);
      double acc = 0.0;
      for (const auto& s : sets) acc += pinn::sdgd_second_order(a, rows, s);
      const double rel = std::abs(acc / sets.size() - full) / std::max(std::abs(full), 1e-300);
      worst = std::max(worst, rel);
    }
  }
  r.pass = worst <= 1e-10;
  r.detail = fmt("max relative deviation %.2e over all subset sizes at d=6 (tol 1e-10)", worst);
  return r;
}

CriterionResult check_hte_unbiased() {
  CriterionResult r{2, "HTE unbiasedness", true, ""};
  sde::NoiseSource n(5);
  double worst = 0.0;
  for (int d = 1; d <= 4; ++d) {
    Matrix h = n.next_gaussian_matrix(d, d);
    h = (h + h.transpose()).eval();
    double acc = 0.0;
    for (int mask = 0; mask < (1 << d); ++mask) {
      Vector v(d);
      for (int i = 0; i < d; ++i) v(i) = (mask >> i & 1) ? 1.0 : -1.0;
      acc += v.dot(h * v);
    }
    worst = std::max(worst, std::abs(acc / (1 << d) - h.trace()));
  }
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
  const double mean = s / draws, se = std::sqrt((s2 / draws - mean * mean) / draws);
  const double z = std::abs(mean - h.trace()) / se;
  r.pass = worst <= 1e-12 && z < 3.0;
  r.detail = fmt("enumeration error %.1e (d<=4); d=50 MC off by %.2f SE at 1e5 probes", worst, z);
  return r;
}

CriterionResult check_variance_split() {
  CriterionResult r{3, "variance split", true, ""};
  const Matrix hd = Vector{{1.5, -2.0, 0.25, 7.0}}.asDiagonal();
  auto apply = [&](const Vector& v) -> Vector { return hd * v; };
  sde::NoiseSource n(2);
  const double first = pinn::hte_trace_estimate(apply, 4, 1, pinn::ProbeKind::Rademacher, n);
  double hte_spread = 0.0;
  for (int k = 0; k < 200; ++k)
    hte_spread = std::max(hte_spread,
                          std::abs(pinn::hte_trace_estimate(apply, 4, 1, pinn::ProbeKind::Rademacher, n) - first));
  Matrix h = n.next_gaussian_matrix(6, 6);
  h = (h + h.transpose()).eval();
  h.diagonal().setConstant(1.75);
  std::map<int, Vector> rows;
  for (int i = 0; i < 6; ++i) rows[i] = h.row(i).transpose();
  const Matrix a = Matrix::Identity(6, 6);
  const double base = pinn::sdgd_second_order(a, rows, {0});
  double sdgd_spread = 0.0;
  for (int k = 0; k < 200; ++k)
    sdgd_spread = std::max(sdgd_spread,
                           std::abs(pinn::sdgd_second_order(a, rows, n.next_subset(6, 1 + k % 6)) - base));
  r.pass = hte_spread == 0.0 && sdgd_spread == 0.0;
  r.detail = fmt("HTE spread %.1e on diagonal H, SDGD spread %.1e on constant-diagonal H", hte_spread,
                 sdgd_spread);
  return r;
}

CriterionResult check_random_difference() {
  CriterionResult r{4, "random-difference consistency", true, ""};
  const int d = 3;
  const auto p = problems::make_problem(problems::HeatSanityInstance{d, 1.0});
  const auto net = random_net(d, 17);
  auto u = [&net](double t, const Vector& y) { return nn::evaluate(net, t, y); };
  auto none = [](double, const Vector&) -> Vector { return Vector(); };
  const double t = 0.3;
  const Vector x = Vector::LinSpaced(d, -0.3, 0.4);
  const double ut = nn::input_gradient(net, t, x)(0);
  const auto rows = nn::hessian_rows(net, t, x, {0, 1, 2});
  Matrix hess(d, d);
  for (int i = 0; i < d; ++i) hess.row(i) = rows.at(i).transpose();
  sde::NoiseSource n(4);
  const int m = 400;
  const Matrix xi = shotgun::draw_probes(d, m, shotgun::Probe::Gaussian, n);
  const double hs[] = {1e-2, 1e-3, 1e-4};
  double bias[3];
  for (int k = 0; k < 3; ++k) {
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      const Vector v = xi.col(j);
      acc += shotgun::antithetic_residual(u, none, p, t, x, v, hs[k]).value - (ut + 0.5 * v.dot(hess * v));
    }
    bias[k] = std::abs(acc / m);
  }
  const double slope = (std::log(bias[0]) - std::log(bias[2])) / (std::log(hs[0]) - std::log(hs[2]));

  // Quadratic u = |x|^2 on the heat generator: E estimate = d.
  auto quad = [](double, const Vector& y) { return y.squaredNorm(); };
  const int pairs = 100000;
  const Matrix g = shotgun::draw_probes(d, pairs, shotgun::Probe::Gaussian, n);
  double s = 0.0, s2 = 0.0;
  for (int j = 0; j < pairs; ++j) {
    const double v = shotgun::antithetic_residual(quad, none, p, t, x, g.col(j), 1e-3).value;
    s += v;
    s2 += v * v;
  }
  const double mean = s / pairs, se = std::sqrt((s2 / pairs - mean * mean) / pairs);
  const double z = std::abs(mean - d) / se;
  r.pass = std::abs(slope - 1.0) <= 0.3 && z < 3.0;
  r.detail = fmt("bias slope %.3f (1 +- 0.3); quadratic mean off by %.2f SE", slope, z);
  return r;
}

CriterionResult check_martingale_bridge() {
  CriterionResult r{5, "martingale bridge", true, ""};
  const int d = 4;
  const double h = 1e-3;
  const auto p = problems::make_problem(problems::make_hjb_instance(d, 2));
  const auto net = random_net(d, 8);
  sde::NoiseSource n(21);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double t = 0.9 * n.next_uniform();
    const Vector x = n.next_gaussian_matrix(d, 1).col(0);
    const auto b = martnet::residual_bridge_check(net, p, t, x, h, 20000, n);
    const double tol = std::max(3.0 * b.mc_se, 10.0 * h);
    worst = std::max(worst, std::abs(b.mc_mean - b.residual) / tol);
  }
  r.pass = worst <= 1.0;
  r.detail = fmt("worst |E[M]/h - R| / max(3 SE, 10 h) = %.3f over 10 points (HJB d=4)", worst);
  return r;
}

CriterionResult check_rs_identities() {
  CriterionResult r{6, "RS-PINN identities", true, ""};
  const int d = 3;
  Matrix q(d, d);
  q << 1.0, 0.3, -0.2, 0.3, 2.0, 0.1, -0.2, 0.1, 0.5;
  const Vector b = Vector::LinSpaced(d, 0.5, -1.0);
  auto f = [&](const Vector& y) { return y.dot(q * y) + b.dot(y); };
  const double sigma = 0.4;
  const Vector x = Vector::LinSpaced(d, 0.2, -0.3);
  sde::NoiseSource n(31);
  const auto e = nn::rs_value_grad_hessian(f, sigma, 100000, x, n);
  // Smoothed quadratic: value x'Qx + b'x + sigma^2 tr Q, gradient 2Qx + b, Hessian 2Q.
  double worst = std::abs(e.value - (f(x) + sigma * sigma * q.trace())) / std::max(e.value_se, 1e-300);
  const Vector g = 2.0 * q * x + b;
  for (int i = 0; i < d; ++i) {
    worst = std::max(worst, std::abs(e.gradient(i) - g(i)) / e.gradient_se(i));
    for (int j = 0; j < d; ++j)
      worst = std::max(worst, std::abs(e.hessian(i, j) - 2.0 * q(i, j)) / e.hessian_se(i, j));
  }
  r.pass = worst < 3.0;
  r.detail = fmt("largest deviation %.2f SE over value, gradient and Hessian entries at 1e5 samples", worst);
  return r;
}

CriterionResult check_autodiff() {
  CriterionResult r{12, "autodiff suite", true, ""};
  using ad::Var;
  sde::NoiseSource noise(11);
  const Matrix a0 = noise.next_gaussian_matrix(3, 4), b0 = noise.next_gaussian_matrix(3, 4);
  const Matrix m0 = noise.next_gaussian_matrix(4, 2), c0 = noise.next_gaussian_matrix(3, 1);
  const Matrix w = noise.next_gaussian_matrix(8, 8);

  auto weighted = [&](Var y) {
    return ad::sum(y * y.tape().constant(Matrix(w.topLeftCorner(y.rows(), y.cols()))));
  };
  double worst = 0.0;
  auto check = [&](const std::function<Var(Var)>& op, const Matrix& x0) {
    ad::Tape tape;
    Var x = tape.variable(x0);
    const Var wrt[] = {x};
    const Matrix g = ad::backward(weighted(op(x)), wrt)[0];
    Matrix fd(x0.rows(), x0.cols());
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      Matrix xp = x0, xm = x0;
      xp.data()[i] += 1e-5;
      xm.data()[i] -= 1e-5;
      ad::Tape tp, tm;
      fd.data()[i] = (weighted(op(tp.variable(xp))).value()(0, 0) -
                      weighted(op(tm.variable(xm))).value()(0, 0)) / 2e-5;
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, fd.norm()));
  };
  auto k = [](const Matrix& m) { return [m](Var x) { return x.tape().constant(m); }; };
  const auto B = k(b0);
  check([&](Var x) { return ad::matmul(x, x.tape().constant(m0)); }, a0);
  check([&](Var x) { return ad::matmul(x.tape().constant(a0), x); }, m0);
  check([](Var x) { return ad::transpose(x); }, a0);
  check([&](Var x) { return x + B(x); }, a0);
  check([&](Var x) { return B(x) - x; }, a0);
  check([&](Var x) { return x * B(x); }, a0);
  check([](Var x) { return -x; }, a0);
  check([](Var x) { return ad::scale(x, -2.5); }, a0);
  check([](Var x) { return ad::add_scalar(x, 0.7); }, a0);
  check([&](Var x) { return ad::add_col_broadcast(x, x.tape().constant(c0)); }, a0);
  check([&](Var c) { return ad::add_col_broadcast(c.tape().constant(a0), c); }, c0);
  check([](Var x) { return ad::sum_cols(x); }, a0);
  check([](Var x) { return ad::sum_rows(x); }, a0);
  check([](Var c) { return ad::broadcast_cols(c, 5); }, c0);
  check([](Var x) { return ad::broadcast_rows(ad::sum_rows(x), 3); }, a0);
  check([](Var x) { return ad::square(ad::sum(x)); }, a0);
  check([](Var x) { return ad::broadcast_scalar(ad::sum(x), 2, 3); }, a0);
  check([](Var x) { return ad::col_block(x, 1, 2); }, a0);
  check([](Var x) { return ad::pad_cols(x, 2, 7); }, a0);
  check([](Var x) { return ad::row_block(x, 1, 2); }, a0);
  check([](Var x) { return ad::pad_rows(x, 1, 5); }, a0);
  check([](Var x) { return ad::tile_cols(x, 2); }, a0);
  check([](Var x) { return ad::fold_cols(x, 2); }, a0);
  check([](Var x) { return ad::tanh(x); }, a0);
  check([](Var x) { return ad::tanh_deriv(x); }, a0);
  check([](Var x) { return ad::sin(x); }, a0);
  check([](Var x) { return ad::cos(x); }, a0);
  check([](Var x) { return ad::square(x); }, a0);
  check([](Var x) { return ad::mean(x * x); }, a0);

  // input_hvp against a finite difference of the input gradient on a smooth net.
  const auto net = random_net(4, 5);
  ad::TapeFunction fn = [&net](ad::Tape& tape, Var x) {
    const auto bound = nn::bind(tape, net, false);
    return ad::sum(nn::forward(bound, x));
  };
  sde::NoiseSource pts(6);
  double hvp_worst = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix x = pts.next_gaussian_matrix(5, 1);
    const Matrix v = pts.next_gaussian_matrix(5, 1);
    const double eps = 1e-5;
    const Matrix fdh = (ad::input_gradient(fn, x + eps * v) - ad::input_gradient(fn, x - eps * v)) / (2 * eps);
    const Matrix hv = ad::input_hvp(fn, x, v);
    hvp_worst = std::max(hvp_worst, (hv - fdh).norm() / hv.norm());
  }
  r.pass = worst <= 1e-4 && hvp_worst <= 1e-5;
  r.detail = fmt("primitive gradients vs FD %.1e (tol 1e-4); input_hvp vs FD %.1e (tol 1e-5)", worst,
                 hvp_worst);
  return r;
}

std::vector<CriterionResult> property_suite() {
  return {check_sdgd_unbiased(),   check_hte_unbiased(),      check_variance_split(),
          check_random_difference(), check_martingale_bridge(), check_rs_identities(),
          check_autodiff()};
}

std::string format(const CriterionResult& r) {
  return std::string(r.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(r.id) + " (" + r.name +
         "): " + r.detail;
}

}  // namespace hdpde::bench
