#include "hdpde/problems/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hdpde::problems {

ad::Var ParabolicProblem::source_on(ad::Tape& tape, const RowVector& t,
                                    const Matrix& x, ad::Var u,
                                    ad::Var gradient) const {
  if (!source) return tape.constant(Matrix::Zero(1, x.cols()));
  return source(SourceArgs{t, x, u, gradient});
}

RowVector ParabolicProblem::source_values(const RowVector& t, const Matrix& x,
                                          const RowVector& u,
                                          const Matrix& gradient) const {
  if (!source) return RowVector::Zero(x.cols());
  ad::Tape tape;
  ad::Var uv = tape.constant(Matrix(u));
  ad::Var gv = source_uses_gradient ? tape.constant(gradient) : ad::Var();
  return source(SourceArgs{t, x, uv, gv}).value().row(0);
}

namespace {

sde::Dynamics brownian(int d) {
  sde::Dynamics dyn;
  dyn.dim = d;
  dyn.drift = [](const RowVector&, const Matrix& x, const RowVector&) {
    return Matrix::Zero(x.rows(), x.cols());
  };
  dyn.diffusion_diag = [](const RowVector&, const Matrix& x, const RowVector&) {
    return Matrix::Ones(x.rows(), x.cols());
  };
  return dyn;
}

Matrix standard_normal(sde::NoiseSource& noise, int d, int count) {
  return noise.next_gaussian_matrix(d, count);
}

Estimate mean_and_se(double sum, double sum_sq, double n) {
  Estimate e;
  e.value = sum / n;
  if (n > 1) {
    const double var = std::max(0.0, (sum_sq - n * e.value * e.value) / (n - 1));
    e.se = std::sqrt(var / n);
  }
  return e;
}

}  // namespace

// ---- heat -----------------------------------------------------------------

double heat_exact(const Vector& x, double t, const HeatSanityInstance& inst) {
  return x.squaredNorm() + inst.dim * (inst.horizon - t);
}

ParabolicProblem make_problem(const HeatSanityInstance& inst) {
  ParabolicProblem p;
  p.name = "heat";
  p.dim = inst.dim;
  p.horizon = inst.horizon;
  p.dynamics = brownian(inst.dim);
  p.terminal = [](const Matrix& x) -> RowVector { return x.colwise().squaredNorm(); };
  p.terminal_gradient = [](const Matrix& x) -> Matrix { return 2.0 * x; };
  const int d = inst.dim;
  p.initial_sampler = [d](sde::NoiseSource& n, int c) { return standard_normal(n, d, c); };
  p.test_sampler = p.initial_sampler;
  p.reference = [inst](const Vector& x, double t, std::uint64_t, sde::NoiseSource&) {
    return Estimate{heat_exact(x, t, inst), 0.0};
  };
  p.reference_is_exact = true;
  std::ostringstream id;
  id << "heat:d=" << inst.dim << ":T=" << inst.horizon;
  p.identity = id.str();
  return p;
}

// ---- HJB ------------------------------------------------------------------

HjbLqgInstance make_hjb_instance(int dim, std::uint64_t coefficient_seed,
                                 double horizon) {
  if (dim < 1) throw std::invalid_argument("HJB instance needs dim >= 1");
  HjbLqgInstance inst;
  inst.dim = dim;
  inst.horizon = horizon;
  inst.coefficient_seed = coefficient_seed;
  sde::NoiseSource noise(coefficient_seed, 0xc0ef);
  const int m = std::max(0, dim - 1);
  inst.c1 = (0.5 + noise.next_uniform_matrix(m, 1).array()).matrix().col(0);
  inst.c2 = (0.5 + noise.next_uniform_matrix(m, 1).array()).matrix().col(0);
  return inst;
}

double rosenbrock_terminal(const HjbLqgInstance& inst, const Vector& x) {
  double s = 1.0;
  for (int i = 0; i + 1 < inst.dim; ++i) {
    const double a = x(i) - x(i + 1);
    s += inst.c1(i) * a * a + inst.c2(i) * x(i + 1) * x(i + 1);
  }
  return std::log(0.5 * s);
}

Vector rosenbrock_gradient(const HjbLqgInstance& inst, const Vector& x) {
  double s = 1.0;
  Vector ds = Vector::Zero(inst.dim);
  for (int i = 0; i + 1 < inst.dim; ++i) {
    const double a = x(i) - x(i + 1);
    s += inst.c1(i) * a * a + inst.c2(i) * x(i + 1) * x(i + 1);
    ds(i) += 2.0 * inst.c1(i) * a;
    ds(i + 1) += -2.0 * inst.c1(i) * a + 2.0 * inst.c2(i) * x(i + 1);
  }
  return ds / s;
}

Estimate hjb_reference_from_draws(const Vector& x, double t,
                                  const HjbLqgInstance& inst, const Matrix& draws,
                                  double terminal_shift) {
  if (draws.cols() == 0) throw std::invalid_argument("hjb_reference: zero samples");
  if (t > inst.horizon) throw std::invalid_argument("hjb_reference: t beyond horizon");
  const double s = std::sqrt(inst.horizon - t);
  const Eigen::Index n = draws.cols();
  Eigen::ArrayXd a(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    a(k) = -2.0 * (rosenbrock_terminal(inst, x - s * draws.col(k)) + terminal_shift);
  }
  const double m = a.maxCoeff();
  const Eigen::ArrayXd w = (a - m).exp();
  const double mean_w = w.mean();
  Estimate e;
  e.value = -0.5 * (m + std::log(mean_w));
  if (n > 1) {
    const double var = (w - mean_w).square().sum() / static_cast<double>(n - 1);
    e.se = 0.5 * std::sqrt(var / static_cast<double>(n)) / mean_w;
  }
  return e;
}

Estimate hjb_reference_from_draws(const Vector& x, double t,
                                  const HjbLqgInstance& inst, const Matrix& draws) {
  return hjb_reference_from_draws(x, t, inst, draws, 0.0);
}

Estimate hjb_reference(const Vector& x, double t, const HjbLqgInstance& inst,
                       std::uint64_t samples, sde::NoiseSource& noise) {
  if (samples == 0) throw std::invalid_argument("hjb_reference: zero samples");
  // Chunked so 1e6-sample calls do not allocate d x 1e6 draws at once, while
  // keeping one running log-sum-exp.
  const std::uint64_t chunk = 4096;
  const double s = std::sqrt(inst.horizon - t);
  double m = -std::numeric_limits<double>::infinity();
  double sum_w = 0.0, sum_w2 = 0.0;  // relative to m
  for (std::uint64_t done = 0; done < samples; done += chunk) {
    const auto count = static_cast<Eigen::Index>(std::min(chunk, samples - done));
    const Matrix y = noise.next_gaussian_matrix(inst.dim, count);
    for (Eigen::Index k = 0; k < count; ++k) {
      const double a = -2.0 * rosenbrock_terminal(inst, x - s * y.col(k));
      if (a > m) {
        const double r = std::exp(m - a);
        sum_w *= r;
        sum_w2 *= r * r;
        m = a;
      }
      const double w = std::exp(a - m);
      sum_w += w;
      sum_w2 += w * w;
    }
  }
  const double n = static_cast<double>(samples);
  const double mean_w = sum_w / n;
  Estimate e;
  e.value = -0.5 * (m + std::log(mean_w));
  if (samples > 1) {
    const double var = std::max(0.0, (sum_w2 - n * mean_w * mean_w) / (n - 1));
    e.se = 0.5 * std::sqrt(var / n) / mean_w;
  }
  return e;
}

ParabolicProblem make_problem(const HjbLqgInstance& inst) {
  ParabolicProblem p;
  p.name = "hjb";
  p.dim = inst.dim;
  p.horizon = inst.horizon;
  p.dynamics = brownian(inst.dim);
  p.source = [](const SourceArgs& a) { return ad::sum_rows(ad::square(a.gradient)); };
  p.source_uses_gradient = true;
  p.terminal = [inst](const Matrix& x) {
    RowVector g(x.cols());
    for (Eigen::Index m = 0; m < x.cols(); ++m) g(m) = rosenbrock_terminal(inst, x.col(m));
    return g;
  };
  p.terminal_gradient = [inst](const Matrix& x) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index m = 0; m < x.cols(); ++m) g.col(m) = rosenbrock_gradient(inst, x.col(m));
    return g;
  };
  const int d = inst.dim;
  p.initial_sampler = [d](sde::NoiseSource& n, int c) { return standard_normal(n, d, c); };
  p.test_sampler = p.initial_sampler;
  p.reference = [inst](const Vector& x, double t, std::uint64_t samples,
                       sde::NoiseSource& noise) {
    return hjb_reference(x, t, inst, samples, noise);
  };
  std::ostringstream id;
  id << "hjb:d=" << inst.dim << ":T=" << inst.horizon
     << ":cseed=" << inst.coefficient_seed;
  p.identity = id.str();
  return p;
}

// ---- Black-Scholes --------------------------------------------------------

BlackScholesInstance make_bs_instance(int dim) {
  if (dim < 1) throw std::invalid_argument("BS instance needs dim >= 1");
  BlackScholesInstance inst;
  inst.dim = dim;
  inst.mu = Vector::Constant(dim, -1.0 / 20.0);
  inst.sigma.resize(dim);
  for (int i = 0; i < dim; ++i) inst.sigma(i) = 0.1 + 0.4 * (i + 1) / dim;
  return inst;
}

double bs_payoff(const BlackScholesInstance& inst, const Vector& x) {
  const double a = inst.strike / inst.scale;
  return std::exp(-inst.rate * inst.horizon) * std::max(x.maxCoeff() - a, 0.0);
}

Estimate bs_reference_from_draws(const Vector& x, double t,
                                 const BlackScholesInstance& inst,
                                 const Matrix& draws) {
  if (draws.cols() == 0) throw std::invalid_argument("bs_reference: zero samples");
  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index k = 0; k < draws.cols(); ++k) {
    const double v = bs_payoff(
        inst, sde::gbm_terminal(x, t, inst.horizon, inst.mu, inst.sigma, draws.col(k)));
    sum += v;
    sum_sq += v * v;
  }
  return mean_and_se(sum, sum_sq, static_cast<double>(draws.cols()));
}

Estimate bs_reference(const Vector& x, double t, const BlackScholesInstance& inst,
                      std::uint64_t samples, sde::NoiseSource& noise) {
  if (samples == 0) throw std::invalid_argument("bs_reference: zero samples");
  const std::uint64_t chunk = 4096;
  double sum = 0.0, sum_sq = 0.0;
  for (std::uint64_t done = 0; done < samples; done += chunk) {
    const auto count = static_cast<Eigen::Index>(std::min(chunk, samples - done));
    const Matrix y = noise.next_gaussian_matrix(inst.dim, count);
    for (Eigen::Index k = 0; k < count; ++k) {
      const double v = bs_payoff(
          inst, sde::gbm_terminal(x, t, inst.horizon, inst.mu, inst.sigma, y.col(k)));
      sum += v;
      sum_sq += v * v;
    }
  }
  return mean_and_se(sum, sum_sq, static_cast<double>(samples));
}

BlackScholesInstance scale_bs(const BlackScholesInstance& inst, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("scale_bs: K must be positive");
  BlackScholesInstance s = inst;
  s.scale = inst.scale * scale;
  return s;
}

double unscale_bs_value(const BlackScholesInstance& scaled, double v) {
  return scaled.scale * v;
}

ParabolicProblem make_problem(const BlackScholesInstance& inst) {
  ParabolicProblem p;
  p.name = "bs";
  p.dim = inst.dim;
  p.horizon = inst.horizon;
  p.dynamics.dim = inst.dim;
  const Vector mu = inst.mu;
  const Vector sigma = inst.sigma;
  p.dynamics.drift = [mu](const RowVector&, const Matrix& x, const RowVector&) -> Matrix {
    return mu.asDiagonal() * x;
  };
  p.dynamics.diffusion_diag = [sigma](const RowVector&, const Matrix& x,
                                      const RowVector&) -> Matrix {
    return sigma.asDiagonal() * x;
  };
  p.terminal = [inst](const Matrix& x) {
    RowVector g(x.cols());
    for (Eigen::Index m = 0; m < x.cols(); ++m) g(m) = bs_payoff(inst, x.col(m));
    return g;
  };
  p.terminal_gradient = [inst](const Matrix& x) {
    const double a = inst.strike / inst.scale;
    const double disc = std::exp(-inst.rate * inst.horizon);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index m = 0; m < x.cols(); ++m) {
      Eigen::Index i = 0;
      if (x.col(m).maxCoeff(&i) > a) g(i, m) = disc;
    }
    return g;
  };
  const int d = inst.dim;
  const double k = inst.scale;
  p.initial_sampler = [d, k](sde::NoiseSource& n, int c) -> Matrix {
    return (90.0 + 20.0 * n.next_uniform_matrix(d, c).array()) / k;
  };
  p.test_sampler = [d](sde::NoiseSource& n, int c) -> Matrix {
    return 90.0 + 20.0 * n.next_uniform_matrix(d, c).array();
  };
  BlackScholesInstance original = inst;
  original.scale = 1.0;
  p.reference = [original](const Vector& x, double t, std::uint64_t samples,
                           sde::NoiseSource& noise) {
    return bs_reference(x, t, original, samples, noise);
  };
  p.coordinate_scale = k;
  p.value_scale = k;
  std::ostringstream id;
  id << "bs:d=" << inst.dim << ":T=" << inst.horizon << ":strike=" << inst.strike;
  p.identity = id.str();
  return p;
}

}  // namespace hdpde::problems
