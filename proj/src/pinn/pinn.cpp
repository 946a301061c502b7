#include "hdpde/pinn/pinn.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <stdexcept>

namespace hdpde::pinn {

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Full: return "full";
    case EstimatorKind::SdgdBiased: return "sdgd_biased";
    case EstimatorKind::SdgdUnbiased: return "sdgd_unbiased";
    case EstimatorKind::HteBiased: return "hte_biased";
    case EstimatorKind::HteUnbiased: return "hte_unbiased";
    case EstimatorKind::Rs: return "rs";
  }
  return "?";
}

EstimatorKind estimator_from_string(const std::string& s) {
  for (auto k : {EstimatorKind::Full, EstimatorKind::SdgdBiased, EstimatorKind::SdgdUnbiased,
                 EstimatorKind::HteBiased, EstimatorKind::HteUnbiased, EstimatorKind::Rs})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown estimator '" + s + "'");
}

std::string to_string(ProbeKind k) {
  return k == ProbeKind::Rademacher ? "rademacher" : "axis_scaled";
}

ProbeKind probe_from_string(const std::string& s) {
  if (s == "rademacher") return ProbeKind::Rademacher;
  if (s == "axis_scaled") return ProbeKind::AxisScaled;
  throw std::invalid_argument("unknown probe '" + s + "'");
}

void EstimatorConfig::validate(int dim) const {
  if (index_batch < 1 || index_batch > dim)
    throw std::invalid_argument("estimator: need 1 <= |I| <= d");
  if (hte_count < 1) throw std::invalid_argument("estimator: HTE probe count must be >= 1");
  if (!(rs_sigma > 0.0)) throw std::invalid_argument("estimator: RS sigma must be positive");
  if (rs_pairs < 1) throw std::invalid_argument("estimator: RS pair count must be >= 1");
}

void LossWeights::validate() const {
  if (!(terminal > 0.0) || !(residual > 0.0))
    throw std::invalid_argument("loss weights must be positive");
}

// ---- collocation ------------------------------------------------------------

CollocationBatch collocation_from_paths(const problems::ParabolicProblem& problem,
                                        const sde::PathBatch& paths,
                                        sde::NoiseSource& noise) {
  const int m = paths.paths();
  const int n = paths.grid.steps();
  if (m == 0) throw std::invalid_argument("collocation: empty path batch");
  CollocationBatch b;
  b.t.resize(m);
  b.x.resize(paths.dim(), m);
  for (int j = 0; j < m; ++j) {
    const int node = static_cast<int>(noise.next_index(static_cast<std::uint64_t>(n + 1)));
    b.t(j) = paths.grid.node(node);
    b.x.col(j) = paths.states[node].col(j);
  }
  b.terminal_x = paths.states.back();
  b.terminal_target = problem.terminal(b.terminal_x);
  return b;
}

CollocationBatch sample_collocation(const problems::ParabolicProblem& problem, int points,
                                    int steps, sde::NoiseSource& noise) {
  if (points < 1) throw std::invalid_argument("collocation: need at least one point");
  sde::NoiseSource init = noise.split(1), drive = noise.split(2), pick = noise.split(3);
  const Matrix x0 = problem.initial_sampler(init, points);
  const auto paths = sde::euler_rollout(problem.dynamics, {}, x0,
                                        sde::TimeGrid(problem.horizon, steps), drive);
  return collocation_from_paths(problem, paths, pick);
}

CollocationBatch declared_collocation(const problems::ParabolicProblem& problem, int points,
                                      sde::NoiseSource& noise) {
  if (points < 1) throw std::invalid_argument("collocation: need at least one point");
  sde::NoiseSource a = noise.split(1), b = noise.split(2), c = noise.split(3);
  CollocationBatch out;
  out.t = problem.horizon * a.next_uniform_matrix(1, points);
  out.x = problem.initial_sampler(b, points);
  out.terminal_x = problem.initial_sampler(c, points);
  out.terminal_target = problem.terminal(out.terminal_x);
  return out;
}

// ---- single-point operations ------------------------------------------------

namespace {

struct PointDerivatives {
  double u = 0.0;
  double dt = 0.0;
  Vector grad;
  Vector mu;
  Matrix a;
  double f = 0.0;
};

PointDerivatives point_derivatives(const nn::NetworkState& net,
                                   const problems::ParabolicProblem& problem, double t,
                                   const Vector& x) {
  if (x.size() != problem.dim) throw ad::ShapeError("residual: point has wrong dimension");
  if (!net.spec.time_input) throw std::invalid_argument("residual: network needs a time input");
  PointDerivatives p;
  p.u = nn::evaluate(net, t, x);
  const Vector g = nn::input_gradient(net, t, x);
  p.dt = g(0);
  p.grad = g.tail(problem.dim);
  const RowVector tr = RowVector::Constant(1, t);
  const RowVector ur = RowVector::Constant(1, p.u);
  p.mu = problem.dynamics.drift_at(tr, Matrix(x), ur).col(0);
  p.a = problem.dynamics.covariance(t, x, p.u);
  p.f = problem.source_values(tr, Matrix(x), ur, Matrix(p.grad))(0);
  return p;
}

}  // namespace

double sdgd_second_order(const Matrix& a, const std::map<int, Vector>& hessian_rows,
                         const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("sdgd: empty index set");
  double partial = 0.0;
  for (int i : indices) partial += a.row(i).dot(hessian_rows.at(i));
  return 0.5 * static_cast<double>(a.rows()) / static_cast<double>(indices.size()) * partial;
}

double full_residual(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                     double t, const Vector& x) {
  std::vector<int> all(problem.dim);
  for (int i = 0; i < problem.dim; ++i) all[i] = i;
  return sdgd_residual(net, problem, t, x, all);
}

double sdgd_residual(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                     double t, const Vector& x, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("sdgd_residual: empty index set");
  const PointDerivatives p = point_derivatives(net, problem, t, x);
  const auto rows = nn::hessian_rows(net, t, x, indices);
  return p.dt + p.mu.dot(p.grad) + sdgd_second_order(p.a, rows, indices) - p.f;
}

Vector draw_probe(int dim, ProbeKind probe, sde::NoiseSource& noise) {
  if (probe == ProbeKind::Rademacher) return noise.next_rademacher_matrix(dim, 1).col(0);
  Vector v = Vector::Zero(dim);
  v(static_cast<Eigen::Index>(noise.next_index(static_cast<std::uint64_t>(dim)))) =
      std::sqrt(static_cast<double>(dim));
  return v;
}

double hte_trace_estimate(const std::function<Vector(const Vector&)>& hessian_apply, int dim,
                          int probes, ProbeKind probe, sde::NoiseSource& noise) {
  if (probes < 1) throw std::invalid_argument("hte: need at least one probe");
  double acc = 0.0;
  for (int k = 0; k < probes; ++k) {
    const Vector v = draw_probe(dim, probe, noise);
    acc += v.dot(hessian_apply(v));
  }
  return acc / probes;
}

// ---- batched residuals --------------------------------------------------------

Matrix rs_offsets(int dim, Eigen::Index batch, const EstimatorConfig& cfg, sde::NoiseSource& noise) {
  const Eigen::Index s = cfg.rs_pairs;
  if (!cfg.rs_stratified) return cfg.rs_sigma * noise.next_gaussian_matrix(dim, s * batch);
  Matrix out(dim, s * batch);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> groups;
  if (cfg.rs_split && s >= 2)
    groups = {{0, s / 2}, {s / 2, s - s / 2}};
  else
    groups = {{0, s}};
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (auto [k0, kc] : groups) {
      const Matrix g = noise.next_gaussian_matrix(dim, kc);
      Matrix dirs(dim, kc);
      if (kc <= dim) {
        // Haar-distributed orthonormal columns.
        Eigen::HouseholderQR<Matrix> qr(g);
        dirs = qr.householderQ() * Matrix::Identity(dim, kc);
        const Matrix r = qr.matrixQR().topRows(kc).template triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < kc; ++j)
          if (r(j, j) < 0) dirs.col(j) *= -1.0;
      } else {
        dirs = g.colwise().normalized();
      }
      // One radius per stratum of the chi distribution.
      for (Eigen::Index j = 0; j < kc; ++j) {
        const double u = (static_cast<double>(j) + noise.next_uniform()) / static_cast<double>(kc);
        const double r2 = 2.0 * boost::math::gamma_p_inv(0.5 * dim, u);
        out.col((k0 + j) * batch + b) = cfg.rs_sigma * std::sqrt(r2) * dirs.col(j);
      }
    }
  }
  return out;
}

namespace {

// Block k (d x B) holds sigma(t_b, x_b) column idx[k] for every sample b.
Matrix sigma_columns(const problems::ParabolicProblem& problem, const RowVector& t,
                     const Matrix& x, const RowVector& u, const std::vector<int>& idx) {
  const Eigen::Index d = x.rows(), batch = x.cols();
  Matrix out = Matrix::Zero(d, static_cast<Eigen::Index>(idx.size()) * batch);
  const auto& dyn = problem.dynamics;
  if (dyn.diagonal()) {
    const Matrix diag = dyn.diffusion_diag(t, x, u);
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.row(idx[k]).segment(static_cast<Eigen::Index>(k) * batch, batch) = diag.row(idx[k]);
  } else {
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Matrix s = dyn.full_diffusion(t(b), x.col(b), u.size() ? u(b) : 0.0);
      for (std::size_t k = 0; k < idx.size(); ++k)
        out.col(static_cast<Eigen::Index>(k) * batch + b) = s.col(idx[k]);
    }
  }
  return out;
}

// sigma v for per-sample probes v (d x (K B)).
Matrix sigma_times(const problems::ParabolicProblem& problem, const RowVector& t,
                   const Matrix& x, const RowVector& u, const Matrix& probes) {
  const Eigen::Index batch = x.cols();
  const Eigen::Index k = probes.cols() / batch;
  Matrix out(probes.rows(), probes.cols());
  for (Eigen::Index j = 0; j < k; ++j)
    out.middleCols(j * batch, batch) =
        problem.dynamics.apply_diffusion(t, x, u, probes.middleCols(j * batch, batch));
  return out;
}

Matrix draw_probe_block(int dim, Eigen::Index cols, ProbeKind probe, sde::NoiseSource& noise) {
  if (probe == ProbeKind::Rademacher) return noise.next_rademacher_matrix(dim, cols);
  Matrix v = Matrix::Zero(dim, cols);
  const double s = std::sqrt(static_cast<double>(dim));
  for (Eigen::Index c = 0; c < cols; ++c)
    v(static_cast<Eigen::Index>(noise.next_index(static_cast<std::uint64_t>(dim))), c) = s;
  return v;
}

// Stacks a 1 x B time row over a d x B spatial node.
ad::Var stack_input(ad::Tape& tape, const RowVector& t, ad::Var x) {
  const Eigen::Index d = x.rows();
  return ad::pad_rows(tape.constant(Matrix(t)), 0, d + 1) + ad::pad_rows(x, 1, d + 1);
}

double mean_variance(const Matrix& contributions, Eigen::Index batch, Eigen::Index count) {
  if (count < 2) return 0.0;
  double acc = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    double s = 0.0, s2 = 0.0;
    for (Eigen::Index k = 0; k < count; ++k) {
      const double c = contributions(0, k * batch + b);
      s += c;
      s2 += c * c;
    }
    const double m = s / count;
    acc += std::max(0.0, (s2 / count - m * m)) * count / (count - 1) / count;
  }
  return acc / batch;
}

ResidualTerms rs_terms(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                       ad::Var raw, const EstimatorConfig& cfg, sde::NoiseSource& noise) {
  ad::Tape& tape = raw.tape();
  const int d = problem.dim;
  const Eigen::Index batch = raw.cols();
  const Eigen::Index s = cfg.rs_pairs;
  const double sig = cfg.rs_sigma, s2 = sig * sig;
  const RowVector t = raw.value().row(0);
  const Matrix x = raw.value().bottomRows(d);

  const Matrix delta = rs_offsets(d, batch, cfg, noise);
  Matrix shift = Matrix::Zero(d + 1, (1 + 2 * s) * batch);
  shift.block(1, batch, d, s * batch) = delta;
  shift.block(1, (1 + s) * batch, d, s * batch) = -delta;
  ad::Var all = ad::tile_cols(raw, 1 + 2 * s) + tape.constant(shift);
  Matrix dir = Matrix::Zero(d + 1, (1 + 2 * s) * batch);
  dir.row(0).setOnes();
  const nn::Jet jet = nn::forward_jet(net, all, dir, 0);

  auto block = [&](ad::Var v, Eigen::Index start, Eigen::Index count) {
    return ad::col_block(v, start * batch, count * batch);
  };
  ad::Var f0 = block(jet.value, 0, 1);
  ad::Var fp = block(jet.value, 1, s), fm = block(jet.value, 1 + s, s);
  ad::Var avg = ad::scale(fp + fm, 0.5);
  ad::Var diff = ad::scale(fp - fm, 0.5);
  ad::Var dts = ad::scale(block(jet.first, 1, s) + block(jet.first, 1 + s, s), 0.5);

  // Coefficients are frozen at x; they weight the smoothed derivatives.
  const RowVector u_all = avg.value().reshaped(batch, s).rowwise().mean().transpose();
  const Matrix mu = problem.dynamics.drift_at(t, x, u_all);
  RowVector w_mu(s * batch), q(s * batch);
  for (Eigen::Index k = 0; k < s; ++k) {
    const Matrix dk = delta.middleCols(k * batch, batch);
    w_mu.segment(k * batch, batch) = (mu.cwiseProduct(dk)).colwise().sum() / s2;
    if (problem.dynamics.diagonal()) {
      const Matrix sd = problem.dynamics.diffusion_diag(t, x, u_all);
      const Matrix a = sd.cwiseProduct(sd);
      const RowVector quad = a.cwiseProduct(dk.cwiseProduct(dk)).colwise().sum();
      const RowVector tr = a.colwise().sum();
      q.segment(k * batch, batch) = (quad - s2 * tr) / (s2 * s2);
    } else {
      for (Eigen::Index b = 0; b < batch; ++b) {
        const Matrix a = problem.dynamics.covariance(t(b), x.col(b), u_all(b));
        const Vector db = dk.col(b);
        q(k * batch + b) = (db.dot(a * db) - s2 * a.trace()) / (s2 * s2);
      }
    }
  }
  ad::Var drift_terms = diff * tape.constant(Matrix(w_mu));
  ad::Var weighted = (avg - ad::tile_cols(f0, s)) * tape.constant(Matrix(q));
  const bool need_grad = problem.source && problem.source_uses_gradient;
  ad::Var grad_terms;
  if (need_grad) grad_terms = ad::broadcast_rows(diff, d) * tape.constant(delta);

  struct Part {
    ad::Var u, drift, source, residual;
  };
  // Estimates from pairs [k0, k0 + kc).
  auto part = [&](Eigen::Index k0, Eigen::Index kc) {
    auto mean_of = [&](ad::Var v) {
      return ad::scale(ad::fold_cols(ad::col_block(v, k0 * batch, kc * batch), kc),
                       1.0 / static_cast<double>(kc));
    };
    Part p;
    p.u = mean_of(avg);
    p.drift = mean_of(dts) + mean_of(drift_terms);
    ad::Var second = ad::scale(mean_of(weighted), 0.5);
    ad::Var gradient;
    if (need_grad) gradient = ad::scale(mean_of(grad_terms), 1.0 / s2);
    p.source = problem.source_on(tape, t, x, p.u, gradient);
    p.residual = p.drift + second - p.source;
    return p;
  };

  ResidualTerms out;
  const Part whole = part(0, s);
  out.u = whole.u;
  out.drift = whole.drift;
  out.source = whole.source;
  if (cfg.rs_split && s >= 2) {
    const Eigen::Index h = s / 2;
    out.residual = part(0, h).residual;
    out.residual_b = part(h, s - h).residual;
  } else {
    out.residual = whole.residual;
  }
  out.contributions = 0.5 * weighted.value();
  return out;
}

}  // namespace

ResidualTerms residual_terms(const nn::BoundNetwork& net,
                             const problems::ParabolicProblem& problem, ad::Var raw,
                             const EstimatorConfig& cfg, sde::NoiseSource& noise) {
  const int d = problem.dim;
  const nn::MlpSpec& spec = net.state->spec;
  if (!spec.time_input || spec.spatial_dim != d)
    throw ad::ShapeError("residual: network must take (t, x) with the problem dimension");
  if (raw.rows() != d + 1) throw ad::ShapeError("residual: raw input must have d + 1 rows");
  const Eigen::Index batch = raw.cols();
  if (batch == 0) throw std::invalid_argument("residual: empty batch");
  cfg.validate(d);
  if (cfg.kind == EstimatorKind::Rs) return rs_terms(net, problem, raw, cfg, noise);

  ad::Tape& tape = raw.tape();
  const RowVector t = raw.value().row(0);
  const Matrix x = raw.value().bottomRows(d);
  RowVector uv;
  if (problem.dynamics.depends_on_u) uv = nn::evaluate_raw(*net.state, raw.value()).row(0);
  const Matrix mu = problem.dynamics.drift_at(t, x, uv);

  // Second-order directions for estimate one (n1 blocks) then estimate two (n2).
  Matrix dirs;
  Eigen::Index n1 = 0, n2 = 0;
  double w1 = 0.5, w2 = 0.5;
  switch (cfg.kind) {
    case EstimatorKind::Full: {
      std::vector<int> all(d);
      for (int i = 0; i < d; ++i) all[i] = i;
      dirs = sigma_columns(problem, t, x, uv, all);
      n1 = d;
      break;
    }
    case EstimatorKind::SdgdBiased:
    case EstimatorKind::SdgdUnbiased: {
      std::vector<int> idx = noise.next_subset(d, cfg.index_batch);
      n1 = cfg.index_batch;
      if (cfg.kind == EstimatorKind::SdgdUnbiased) {
        const std::vector<int> j = noise.next_subset(d, cfg.index_batch);
        idx.insert(idx.end(), j.begin(), j.end());
        n2 = cfg.index_batch;
      }
      dirs = sigma_columns(problem, t, x, uv, idx);
      w1 = w2 = 0.5 * d / static_cast<double>(cfg.index_batch);
      break;
    }
    case EstimatorKind::HteBiased:
    case EstimatorKind::HteUnbiased: {
      n1 = cfg.hte_count;
      if (cfg.kind == EstimatorKind::HteUnbiased) n2 = cfg.hte_count;
      const Matrix v = draw_probe_block(d, (n1 + n2) * batch, cfg.probe, noise);
      dirs = sigma_times(problem, t, x, uv, v);
      w1 = w2 = 0.5 / static_cast<double>(cfg.hte_count);
      break;
    }
    case EstimatorKind::Rs:
      break;
  }
  const Eigen::Index k2 = n1 + n2;
  Matrix all_dirs = Matrix::Zero(d + 1, (k2 + 1) * batch);
  all_dirs.block(1, 0, d, k2 * batch) = dirs;
  all_dirs.block(0, k2 * batch, 1, batch).setOnes();
  all_dirs.block(1, k2 * batch, d, batch) = mu;

  const nn::Jet jet = nn::forward_jet(net, raw, all_dirs, static_cast<int>(k2));
  ResidualTerms out;
  out.u = jet.value;
  out.drift = ad::col_block(jet.first, k2 * batch, batch);

  ad::Var gradient;
  if (problem.source && problem.source_uses_gradient) {
    if (!raw.requires_grad())
      throw std::invalid_argument("residual: source needs grad u, so the input must be a variable");
    const ad::Var wrt[] = {raw};
    gradient = ad::row_block(ad::grad(ad::sum(jet.value), wrt, true)[0], 1, d);
  }
  out.source = problem.source_on(tape, t, x, out.u, gradient);

  ad::Var s1 = ad::scale(ad::fold_cols(ad::col_block(jet.second, 0, n1 * batch), n1), w1);
  out.residual = out.drift + s1 - out.source;
  if (n2 > 0) {
    ad::Var s2 = ad::scale(ad::fold_cols(ad::col_block(jet.second, n1 * batch, n2 * batch), n2), w2);
    out.residual_b = out.drift + s2 - out.source;
  }
  if (cfg.kind != EstimatorKind::Full)
    out.contributions = jet.second.value().leftCols(n1 * batch) * (w1 * n1);
  return out;
}

ResidualTerms residual_terms(const nn::BoundNetwork& net,
                             const problems::ParabolicProblem& problem, const RowVector& t,
                             const Matrix& x, const EstimatorConfig& cfg,
                             sde::NoiseSource& noise) {
  ad::Tape& tape = net.params.front().tape();
  const Matrix raw = nn::pack_input(net.state->spec, t, x);
  ad::Var input = problem.source_uses_gradient && cfg.kind != EstimatorKind::Rs
                      ? tape.variable(raw)
                      : tape.constant(raw);
  return residual_terms(net, problem, input, cfg, noise);
}

ad::Var surrogate_value(const nn::BoundNetwork& net, const RowVector& t, const Matrix& x,
                        const EstimatorConfig& cfg, sde::NoiseSource& noise) {
  ad::Tape& tape = net.params.front().tape();
  const Matrix raw = nn::pack_input(net.state->spec, t, x);
  if (cfg.kind != EstimatorKind::Rs) return nn::forward(net, tape.constant(raw));
  const Eigen::Index batch = x.cols(), s = cfg.rs_pairs;
  const Matrix delta = rs_offsets(static_cast<int>(x.rows()), batch, cfg, noise);
  Matrix shifted(raw.rows(), 2 * s * batch);
  for (Eigen::Index k = 0; k < s; ++k) {
    shifted.middleCols(k * batch, batch) = raw;
    shifted.middleCols((s + k) * batch, batch) = raw;
  }
  shifted.bottomRows(x.rows()).leftCols(s * batch) += delta;
  shifted.bottomRows(x.rows()).rightCols(s * batch) -= delta;
  ad::Var y = nn::forward(net, tape.constant(shifted));
  return ad::scale(ad::fold_cols(y, 2 * s), 0.5 / static_cast<double>(s));
}

LossRecord pinn_loss(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                     const CollocationBatch& batch, const EstimatorConfig& cfg,
                     const LossWeights& weights, sde::NoiseSource& noise) {
  if (batch.t.size() == 0 || batch.x.cols() == 0 || batch.terminal_x.cols() == 0)
    throw std::invalid_argument("pinn_loss: empty collocation batch");
  if (batch.t.size() != batch.x.cols() || batch.terminal_target.size() != batch.terminal_x.cols())
    throw std::invalid_argument("pinn_loss: collocation sizes are inconsistent");
  weights.validate();
  ad::Tape& tape = net.params.front().tape();

  const ResidualTerms r = residual_terms(net, problem, batch.t, batch.x, cfg, noise);
  ad::Var rl = r.residual_b.valid() ? ad::mean(r.residual * r.residual_b)
                                    : ad::mean(ad::square(r.residual));
  const RowVector tt = RowVector::Constant(batch.terminal_x.cols(), problem.horizon);
  ad::Var ut = surrogate_value(net, tt, batch.terminal_x, cfg, noise);
  ad::Var tl = ad::mean(ad::square(ut - tape.constant(Matrix(batch.terminal_target))));

  LossRecord rec;
  rec.loss = ad::scale(rl, weights.residual) + ad::scale(tl, weights.terminal);
  rec.value = rec.loss.value()(0, 0);
  rec.residual_loss = rl.value()(0, 0);
  rec.terminal_loss = tl.value()(0, 0);
  rec.residual_mean = r.residual.value().mean();
  if (r.contributions.size() > 0) {
    const Eigen::Index b = batch.x.cols();
    rec.estimator_variance = mean_variance(r.contributions, b, r.contributions.cols() / b);
  }
  return rec;
}

// ---- adversarial points -------------------------------------------------------

Matrix Region::clamp(const Matrix& x) const {
  Matrix out = x;
  if (kind == Kind::Box) {
    if (lower.size() != x.rows() || upper.size() != x.rows())
      throw ad::ShapeError("region: box bounds have the wrong dimension");
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out.col(c) = x.col(c).cwiseMax(lower).cwiseMin(upper);
  } else {
    if (center.size() != x.rows()) throw ad::ShapeError("region: ball center has the wrong dimension");
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const Vector off = x.col(c) - center;
      const double r = off.norm();
      if (r > radius) out.col(c) = center + off * (radius / r);
    }
  }
  return out;
}

Matrix ascend_points(const std::function<ad::Var(ad::Tape&, ad::Var)>& residual,
                     const Matrix& pool, const Region& region, int steps, double step) {
  if (steps < 0 || !(step > 0.0)) throw std::invalid_argument("ascend_points: bad step settings");
  Matrix x = region.clamp(pool);
  for (int k = 0; k < steps; ++k) {
    ad::Tape tape;
    ad::Var xv = tape.variable(x);
    ad::Var r = residual(tape, xv);
    const ad::Var wrt[] = {xv};
    const Matrix g = ad::backward(ad::sum(ad::square(r)), wrt)[0];
    x = region.clamp(x + step * g.cwiseSign());
  }
  return x;
}

CollocationBatch linf_adversarial_step(const nn::NetworkState& net,
                                       const problems::ParabolicProblem& problem,
                                       const CollocationBatch& pool, const Region& region,
                                       const EstimatorConfig& cfg, int inner_steps,
                                       double step) {
  const RowVector t = pool.t;
  const std::uint64_t seed = net.seed ^ 0xad7e;
  auto residual = [&](ad::Tape& tape, ad::Var x) {
    auto bound = nn::bind(tape, net, false);
    sde::NoiseSource n(seed);  // same estimator draws at every ascent step
    return residual_terms(bound, problem, stack_input(tape, t, x), cfg, n).residual;
  };
  CollocationBatch out = pool;
  out.x = ascend_points(residual, pool.x, region, inner_steps, step);
  return out;
}

}  // namespace hdpde::pinn
