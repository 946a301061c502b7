#pragma once

#include "hdpde/network/mlp.hpp"
#include "hdpde/sde/noise.hpp"

#include <functional>

namespace hdpde::nn {

/// Gaussian-smoothed surrogate u(t, x) = E f(t, x + delta), delta ~ N(0, sigma^2 I),
/// smoothing in the spatial variables only.
struct SmoothedSurrogate {
  NetworkState base;
  double smoothing_sigma = 0.1;
  int sample_count = 64;
};

struct SmoothedDerivatives {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
  // Standard errors of the Monte-Carlo means.
  double value_se = 0.0;
  Vector gradient_se;
  Matrix hessian_se;
};

/// Stein-type Monte-Carlo estimates of the smoothed value, gradient and
/// Hessian from `sample_count` antithetic pairs (delta, -delta) sharing one
/// draw. The Hessian estimate uses f(x) as a control variate; all three are
/// unbiased for the smoothed function.
SmoothedDerivatives rs_value_grad_hessian(
    const std::function<double(const Vector&)>& base, double sigma,
    int sample_count, const Vector& x, sde::NoiseSource& noise);

SmoothedDerivatives rs_value_grad_hessian(const SmoothedSurrogate& s, double t,
                                          const Vector& x,
                                          sde::NoiseSource& noise);

/// Smoothed value at a batch of points (d x B) from `pairs` antithetic pairs
/// per point.
RowVector rs_evaluate(const SmoothedSurrogate& s, double t, const Matrix& x,
                      int pairs, const sde::NoiseSource& noise);

}  // namespace hdpde::nn
