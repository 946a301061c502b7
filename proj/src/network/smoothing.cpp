#include "hdpde/network/smoothing.hpp"

#include <cmath>
#include <stdexcept>

namespace hdpde::nn {

SmoothedDerivatives rs_value_grad_hessian(
    const std::function<double(const Vector&)>& base, double sigma,
    int sample_count, const Vector& x, sde::NoiseSource& noise) {
  if (sample_count < 1) throw std::invalid_argument("rs: sample_count must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("rs: smoothing sigma must be positive");
  const Eigen::Index d = x.size();
  const double s2 = sigma * sigma;
  const double f0 = base(x);

  // Running sums for means and second moments.
  double v_sum = 0.0, v_sq = 0.0;
  Vector g_sum = Vector::Zero(d), g_sq = Vector::Zero(d);
  Matrix h_sum = Matrix::Zero(d, d), h_sq = Matrix::Zero(d, d);
  const Matrix I = Matrix::Identity(d, d);
  for (int k = 0; k < sample_count; ++k) {
    const Vector delta = sigma * noise.next_gaussian_matrix(d, 1).col(0);
    const double fp = base(x + delta);
    const double fm = base(x - delta);
    const double v = 0.5 * (fp + fm);
    const Vector g = delta * ((fp - fm) / (2.0 * s2));
    const Matrix h = (delta * delta.transpose() - s2 * I) * ((v - f0) / (s2 * s2));
    v_sum += v;
    v_sq += v * v;
    g_sum += g;
    g_sq += g.cwiseProduct(g);
    h_sum += h;
    h_sq += h.cwiseProduct(h);
  }
  const double n = sample_count;
  SmoothedDerivatives out;
  out.value = v_sum / n;
  out.gradient = g_sum / n;
  out.hessian = h_sum / n;
  auto se = [n](double sq, double mean) {
    if (n < 2) return 0.0;
    const double var = std::max(0.0, (sq / n - mean * mean) * n / (n - 1));
    return std::sqrt(var / n);
  };
  out.value_se = se(v_sq, out.value);
  out.gradient_se.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) out.gradient_se(i) = se(g_sq(i), out.gradient(i));
  out.hessian_se.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out.hessian_se(i, j) = se(h_sq(i, j), out.hessian(i, j));
  return out;
}

SmoothedDerivatives rs_value_grad_hessian(const SmoothedSurrogate& s, double t,
                                          const Vector& x,
                                          sde::NoiseSource& noise) {
  const NetworkState& net = s.base;
  return rs_value_grad_hessian(
      [&net, t](const Vector& y) { return evaluate(net, t, y); },
      s.smoothing_sigma, s.sample_count, x, noise);
}

RowVector rs_evaluate(const SmoothedSurrogate& s, double t, const Matrix& x,
                      int pairs, const sde::NoiseSource& noise) {
  if (pairs < 1) throw std::invalid_argument("rs_evaluate: pairs must be >= 1");
  const Eigen::Index d = x.rows();
  const Eigen::Index batch = x.cols();
  RowVector acc = RowVector::Zero(batch);
  for (int k = 0; k < pairs; ++k) {
    const Matrix delta =
        s.smoothing_sigma *
        noise.gaussian_matrix(d, batch, static_cast<std::uint64_t>(k * d * batch));
    acc += evaluate_batch(s.base, t, x + delta).row(0);
    acc += evaluate_batch(s.base, t, x - delta).row(0);
  }
  return acc / (2.0 * pairs);
}

}  // namespace hdpde::nn
