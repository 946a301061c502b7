#pragma once

#include "hdpde/network/mlp.hpp"
#include "hdpde/problems/problem.hpp"
#include "hdpde/sde/noise.hpp"
#include "hdpde/sde/paths.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace hdpde::pinn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class EstimatorKind { Full, SdgdBiased, SdgdUnbiased, HteBiased, HteUnbiased, Rs };
enum class ProbeKind { Rademacher, AxisScaled };

std::string to_string(EstimatorKind k);
EstimatorKind estimator_from_string(const std::string& s);
std::string to_string(ProbeKind k);
ProbeKind probe_from_string(const std::string& s);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Full;
  /// |I| (and |J|) for SDGD.
  int index_batch = 1;
  /// Probes per estimate for HTE.
  int hte_count = 1;
  ProbeKind probe = ProbeKind::Rademacher;
  double rs_sigma = 0.1;
  /// Antithetic pairs per point for RS.
  int rs_pairs = 16;
  /// Split the RS pairs into two independent halves whose residuals multiply
  /// in the loss, like the unbiased variants.
  bool rs_split = true;
  /// Orthogonal directions and stratified radii within each group of pairs.
  /// Every offset is still marginally N(0, sigma^2 I).
  bool rs_stratified = true;

  void validate(int dim) const;
};

struct LossWeights {
  double terminal = 1.0;
  double residual = 1.0;
  void validate() const;
};

/// Interior points (t, x) and terminal points with targets, internal coordinates.
struct CollocationBatch {
  RowVector t;
  Matrix x;
  Matrix terminal_x;
  RowVector terminal_target;
};

/// Interior points harvested from pilot paths: each path contributes one node
/// chosen uniformly from {0, ..., N}; terminal points are the path end states.
CollocationBatch collocation_from_paths(const problems::ParabolicProblem& problem,
                                        const sde::PathBatch& paths,
                                        sde::NoiseSource& noise);

/// Fresh pilot paths from the problem's initial sampler, then harvested.
CollocationBatch sample_collocation(const problems::ParabolicProblem& problem,
                                    int points, int steps, sde::NoiseSource& noise);

/// Declared-distribution sampler: t ~ U[0, T], x from the initial sampler;
/// terminal points from the initial sampler.
CollocationBatch declared_collocation(const problems::ParabolicProblem& problem,
                                      int points, sde::NoiseSource& noise);

// ---- single-point operations ------------------------------------------------

/// d_t u + mu . grad u + 1/2 Tr(A Hess u) - f at one point (internal coordinates).
double full_residual(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                     double t, const Vector& x);

/// Same with the second-order term replaced by (d/|I|) sum_{i in I} 1/2 (A H)_ii.
double sdgd_residual(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                     double t, const Vector& x, const std::vector<int>& indices);

/// (d/|I|) sum_{i in I} 1/2 (A H)_ii, from the Hessian rows listed in `indices`.
double sdgd_second_order(const Matrix& a, const std::map<int, Vector>& hessian_rows,
                         const std::vector<int>& indices);

/// (1/V) sum_k v_k^T (A H) v_k, with hessian_apply(v) = (A H) v.
double hte_trace_estimate(const std::function<Vector(const Vector&)>& hessian_apply, int dim,
                          int probes, ProbeKind probe, sde::NoiseSource& noise);

/// One probe vector of the requested kind.
Vector draw_probe(int dim, ProbeKind probe, sde::NoiseSource& noise);

// ---- batched, differentiable ------------------------------------------------

/// Per-point residual pieces recorded on the tape (all 1 x B).
struct ResidualTerms {
  ad::Var u;
  ad::Var drift;        // d_t u + mu . grad u
  ad::Var source;       // f(t, x, u, grad u)
  ad::Var residual;     // primary estimate
  ad::Var residual_b;   // independent second estimate (unbiased variants), else invalid
  Matrix contributions; // per-direction second-order terms, for variance diagnostics
};

/// RS offsets for a batch: column k B + b is pair k of point b.
Matrix rs_offsets(int dim, Eigen::Index batch, const EstimatorConfig& cfg, sde::NoiseSource& noise);

/// Residual estimate for a batch of points. For the sampled estimators the
/// index sets or probes are drawn from `noise`.
ResidualTerms residual_terms(const nn::BoundNetwork& net,
                             const problems::ParabolicProblem& problem,
                             const RowVector& t, const Matrix& x,
                             const EstimatorConfig& cfg, sde::NoiseSource& noise);

/// Same on a differentiable input node (input_dim x B raw network input).
ResidualTerms residual_terms(const nn::BoundNetwork& net,
                             const problems::ParabolicProblem& problem, ad::Var raw_input,
                             const EstimatorConfig& cfg, sde::NoiseSource& noise);

/// Network (or smoothed surrogate, for RS) value at a batch of points.
ad::Var surrogate_value(const nn::BoundNetwork& net, const RowVector& t, const Matrix& x,
                        const EstimatorConfig& cfg, sde::NoiseSource& noise);

struct LossRecord {
  ad::Var loss;
  double value = 0.0;
  double residual_loss = 0.0;
  double terminal_loss = 0.0;
  double residual_mean = 0.0;
  /// Mean over points of the sampling variance of the second-order estimate.
  double estimator_variance = 0.0;
};

/// lambda_r mean(R R') + lambda_t mean((u(T, x) - g)^2), where R' = R for the
/// biased estimators and an independent estimate for the unbiased ones.
LossRecord pinn_loss(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                     const CollocationBatch& batch, const EstimatorConfig& cfg,
                     const LossWeights& weights, sde::NoiseSource& noise);

// ---- adversarial points -------------------------------------------------------

struct Region {
  enum class Kind { Box, Ball };
  Kind kind = Kind::Box;
  Vector lower;  // box
  Vector upper;
  Vector center;  // ball
  double radius = 1.0;

  Matrix clamp(const Matrix& x) const;
};

/// Sign-gradient ascent of sum_b residual_b(x)^2 over the columns of `pool`,
/// each column clamped to `region` after every step. `residual` maps a
/// differentiable d x B node to 1 x B residuals. Returns the final points.
Matrix ascend_points(const std::function<ad::Var(ad::Tape&, ad::Var)>& residual,
                     const Matrix& pool, const Region& region, int steps = 10,
                     double step = 0.05);

/// Adversarial L-infinity step for the PINN: ascends |residual| in x at fixed t
/// from the pool points and returns the moved collocation points.
CollocationBatch linf_adversarial_step(const nn::NetworkState& net,
                                       const problems::ParabolicProblem& problem,
                                       const CollocationBatch& pool, const Region& region,
                                       const EstimatorConfig& cfg, int inner_steps = 10,
                                       double step = 0.05);

}  // namespace hdpde::pinn
