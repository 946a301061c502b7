#include "hdpde/sde/paths.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace hdpde::sde {

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
  if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
}

Matrix Dynamics::drift_at(const RowVector& t, const Matrix& x,
                          const RowVector& u) const {
  if (!drift) return Matrix::Zero(x.rows(), x.cols());
  return drift(t, x, u);
}

Matrix Dynamics::apply_diffusion(const RowVector& t, const Matrix& x,
                                 const RowVector& u, const Matrix& xi) const {
  if (diagonal()) return diffusion_diag(t, x, u).cwiseProduct(xi);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index m = 0; m < x.cols(); ++m) {
    const double um = u.size() ? u(m) : 0.0;
    out.col(m) = full_diffusion(t(m), x.col(m), um) * xi.col(m);
  }
  return out;
}

Matrix Dynamics::apply_diffusion_transpose(const RowVector& t, const Matrix& x,
                                           const RowVector& u,
                                           const Matrix& v) const {
  if (diagonal()) return diffusion_diag(t, x, u).cwiseProduct(v);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index m = 0; m < x.cols(); ++m) {
    const double um = u.size() ? u(m) : 0.0;
    out.col(m) = full_diffusion(t(m), x.col(m), um).transpose() * v.col(m);
  }
  return out;
}

Matrix Dynamics::covariance(double t, const Vector& x, double u) const {
  if (diagonal()) {
    const Vector s = diffusion_diag(RowVector::Constant(1, t), Matrix(x),
                                    RowVector::Constant(1, u))
                         .col(0);
    return s.array().square().matrix().asDiagonal();
  }
  const Matrix s = full_diffusion(t, x, u);
  return s * s.transpose();
}

PathBatch euler_rollout(const Dynamics& dynamics, const UProvider& u_provider,
                        const Matrix& initial, const TimeGrid& grid,
                        const NoiseSource& noise, int epoch) {
  if (initial.rows() != dynamics.dim)
    throw std::invalid_argument("euler_rollout: initial states have wrong dimension");
  if (dynamics.depends_on_u && !u_provider)
    throw std::invalid_argument("euler_rollout: quasi-linear dynamics need a u provider");
  const int d = dynamics.dim;
  const int paths = static_cast<int>(initial.cols());
  const int steps = grid.steps();
  const double h = grid.step();
  const double sqrt_h = std::sqrt(h);

  PathBatch batch;
  batch.grid = grid;
  batch.generation_epoch = epoch;
  batch.seed = noise.seed();
  batch.increments.assign(steps, Matrix(d, paths));
  for (int m = 0; m < paths; ++m) {
    const Matrix xi = noise.split(static_cast<std::uint64_t>(m)).gaussian_matrix(d, steps);
    for (int n = 0; n < steps; ++n) batch.increments[n].col(m) = xi.col(n);
  }

  batch.states.reserve(steps + 1);
  batch.states.push_back(initial);
  RowVector u;
  for (int n = 0; n < steps; ++n) {
    const Matrix& x = batch.states.back();
    const RowVector t = RowVector::Constant(paths, grid.node(n));
    if (dynamics.depends_on_u) u = u_provider(t, x);
    Matrix next = x + h * dynamics.drift_at(t, x, u) +
                  sqrt_h * dynamics.apply_diffusion(t, x, u, batch.increments[n]);
    if (!next.allFinite()) {
      for (int m = 0; m < paths; ++m) {
        if (!next.col(m).allFinite()) {
          std::ostringstream msg;
          msg << "euler_rollout: non-finite state on path " << m << " at step " << n + 1;
          throw RolloutError(msg.str(), m, n + 1);
        }
      }
    }
    batch.states.push_back(std::move(next));
  }
  return batch;
}

bool refresh_policy(int current_epoch, int generation_epoch, int refresh_every) {
  return current_epoch - generation_epoch >= refresh_every;
}

bool refresh_policy(const PathBatch& batch, int current_epoch, int refresh_every) {
  return refresh_policy(current_epoch, batch.generation_epoch, refresh_every);
}

AntitheticPairs antithetic_pairs(NoiseSource& noise, int count, int d) {
  AntitheticPairs p;
  p.plus = noise.next_gaussian_matrix(d, count);
  p.minus = -p.plus;
  return p;
}

Vector gbm_terminal(const Vector& x, double t, double horizon, const Vector& mu,
                    const Vector& sigma, const Vector& xi) {
  const double tau = horizon - t;
  const Vector w = std::sqrt(tau) * xi;
  Vector y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y(i) = x(i) * std::exp(sigma(i) * w(i) + (mu(i) - 0.5 * sigma(i) * sigma(i)) * tau);
  }
  return y;
}

Vector gbm_terminal(const Vector& x, double t, double horizon, const Vector& mu,
                    const Vector& sigma, NoiseSource& noise) {
  const Vector xi = noise.next_gaussian_matrix(x.size(), 1).col(0);
  return gbm_terminal(x, t, horizon, mu, sigma, xi);
}

void write_paths(const PathBatch& batch, const std::filesystem::path& stem) {
  const int d = batch.dim();
  const int paths = batch.paths();
  const int steps = batch.grid.steps();
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path side = stem;
  side += ".json";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin.string());
  auto put = [&out](double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  for (int m = 0; m < paths; ++m)
    for (int n = 0; n <= steps; ++n)
      for (int i = 0; i < d; ++i) put(batch.states[n](i, m));
  for (int m = 0; m < paths; ++m)
    for (int n = 0; n < steps; ++n)
      for (int i = 0; i < d; ++i) put(batch.increments[n](i, m));
  nlohmann::json meta = {{"M", paths},
                         {"N", steps},
                         {"d", d},
                         {"seed", batch.seed},
                         {"horizon", batch.grid.horizon()},
                         {"generation_epoch", batch.generation_epoch}};
  std::ofstream js(side);
  js << meta.dump(2) << "\n";
}

PathBatch read_paths(const std::filesystem::path& stem) {
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path side = stem;
  side += ".json";
  std::ifstream js(side);
  if (!js) throw std::runtime_error("cannot read " + side.string());
  const nlohmann::json meta = nlohmann::json::parse(js);
  const int paths = meta.at("M");
  const int steps = meta.at("N");
  const int d = meta.at("d");
  PathBatch batch;
  batch.grid = TimeGrid(meta.at("horizon").get<double>(), steps);
  batch.seed = meta.at("seed");
  batch.generation_epoch = meta.at("generation_epoch");
  batch.states.assign(steps + 1, Matrix(d, paths));
  batch.increments.assign(steps, Matrix(d, paths));
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + bin.string());
  auto get = [&in]() {
    double v = 0.0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  for (int m = 0; m < paths; ++m)
    for (int n = 0; n <= steps; ++n)
      for (int i = 0; i < d; ++i) batch.states[n](i, m) = get();
  for (int m = 0; m < paths; ++m)
    for (int n = 0; n < steps; ++n)
      for (int i = 0; i < d; ++i) batch.increments[n](i, m) = get();
  if (!in) throw std::runtime_error("path dump " + bin.string() + " is truncated");
  return batch;
}

}  // namespace hdpde::sde
