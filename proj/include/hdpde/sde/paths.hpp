#pragma once

#include "hdpde/sde/noise.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdpde::sde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Uniform partition t_n = n T / N.
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps);

  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  double step() const noexcept { return horizon_ / steps_; }
  double node(int n) const { return n == steps_ ? horizon_ : n * step(); }

 private:
  double horizon_;
  int steps_;
};

/// Coefficients of dX = mu dt + sigma dB, evaluated column-wise on a batch.
/// `u` carries solution values for quasi-linear coefficients and is empty
/// when depends_on_u is false.
struct Dynamics {
  using BatchField =
      std::function<Matrix(const RowVector& t, const Matrix& x, const RowVector& u)>;
  using FullDiffusion = std::function<Matrix(double t, const Vector& x, double u)>;

  int dim = 1;
  BatchField drift;
  /// Diagonal of sigma, d x B. Used when full_diffusion is empty.
  BatchField diffusion_diag;
  /// Optional dense sigma (d x d) for one point.
  FullDiffusion full_diffusion;
  bool depends_on_u = false;

  Matrix drift_at(const RowVector& t, const Matrix& x, const RowVector& u) const;
  /// sigma(t, x, u) xi, column by column.
  Matrix apply_diffusion(const RowVector& t, const Matrix& x, const RowVector& u,
                         const Matrix& xi) const;
  /// sigma^T v, column by column.
  Matrix apply_diffusion_transpose(const RowVector& t, const Matrix& x,
                                   const RowVector& u, const Matrix& v) const;
  /// Dense A = sigma sigma^T at one column.
  Matrix covariance(double t, const Vector& x, double u) const;
  bool diagonal() const { return !full_diffusion; }
};

using UProvider = std::function<RowVector(const RowVector& t, const Matrix& x)>;

/// M Euler-Maruyama trajectories. states[n] and increments[n] are d x M with
/// one column per path; increments are the unit Gaussian draws xi_n.
struct PathBatch {
  TimeGrid grid{1.0, 1};
  std::vector<Matrix> states;
  std::vector<Matrix> increments;
  int generation_epoch = 0;
  std::uint64_t seed = 0;

  int dim() const { return states.empty() ? 0 : static_cast<int>(states[0].rows()); }
  int paths() const { return states.empty() ? 0 : static_cast<int>(states[0].cols()); }
};

class RolloutError : public std::runtime_error {
 public:
  RolloutError(const std::string& what, int path, int step)
      : std::runtime_error(what), path_(path), step_(step) {}
  int path() const noexcept { return path_; }
  int step() const noexcept { return step_; }

 private:
  int path_;
  int step_;
};

/// X_{n+1} = X_n + mu h + sigma sqrt(h) xi_n. Path m draws its increments from
/// noise.split(m), so each path is reproducible on its own.
PathBatch euler_rollout(const Dynamics& dynamics, const UProvider& u_provider,
                        const Matrix& initial, const TimeGrid& grid,
                        const NoiseSource& noise, int epoch = 0);

/// True when the batch is at least `refresh_every` epochs old.
bool refresh_policy(const PathBatch& batch, int current_epoch, int refresh_every);
bool refresh_policy(int current_epoch, int generation_epoch, int refresh_every);

struct AntitheticPairs {
  Matrix plus;   // d x count
  Matrix minus;  // exact negation of plus
};

AntitheticPairs antithetic_pairs(NoiseSource& noise, int count, int d);

/// Terminal state of independent geometric Brownian motions started at x at
/// time t, driven by the unit Gaussian draw xi.
Vector gbm_terminal(const Vector& x, double t, double horizon, const Vector& mu,
                    const Vector& sigma, const Vector& xi);
Vector gbm_terminal(const Vector& x, double t, double horizon, const Vector& mu,
                    const Vector& sigma, NoiseSource& noise);

/// Debug dump: <stem>.bin holds states then increments as float64 in
/// [path][node][coordinate] order; <stem>.json holds M, N, d, seed, horizon.
void write_paths(const PathBatch& batch, const std::filesystem::path& stem);
PathBatch read_paths(const std::filesystem::path& stem);

}  // namespace hdpde::sde
