#include "hdpde/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace hdpde::train {

AdamState make_adam(const std::vector<Matrix*>& params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const Matrix* p : params) {
    s.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adam_step(AdamState& state, const std::vector<Matrix*>& params,
               const std::vector<Matrix>& grads, double lr, double sign) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = grads[k];
    if (g.rows() != params[k]->rows() || g.cols() != params[k]->cols())
      throw std::invalid_argument("adam_step: gradient shape differs from parameter");
    state.m[k] = c.beta1 * state.m[k] + (1.0 - c.beta1) * g;
    state.v[k] = c.beta2 * state.v[k] + (1.0 - c.beta2) * g.cwiseProduct(g);
    const auto mhat = state.m[k].array() / bc1;
    const auto vhat = state.v[k].array() / bc2;
    params[k]->array() += sign * lr * mhat / (vhat.sqrt() + c.eps);
  }
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) g *= f;
  }
  return norm;
}

double TrainSchedule::lr_at(int epoch) const {
  if (decay_every <= 0 || lr_decay == 1.0) return adam.lr;
  return adam.lr * std::pow(lr_decay, static_cast<double>(epoch / decay_every));
}

void TrainSchedule::validate() const {
  if (epochs < 0) throw std::invalid_argument("schedule: epochs must be >= 0");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("schedule: lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw std::invalid_argument("schedule: lr_decay must lie in (0, 1]");
  if (adversarial_ratio < 1) throw std::invalid_argument("schedule: adversarial_ratio must be >= 1");
  if (eval_every < 0) throw std::invalid_argument("schedule: eval_every must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0))
    throw std::invalid_argument("schedule: ema_decay must lie in [0, 1)");
}

TrainResult train(Solver& solver, const TrainSchedule& schedule,
                  const sde::NoiseSource& noise, const Evaluator& evaluate) {
  schedule.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto seconds = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  const int groups = solver.group_count();
  std::vector<AdamState> adam;
  for (int g = 0; g < groups; ++g) adam.push_back(make_adam(solver.parameters(g), schedule.adam));

  TrainResult result;
  std::vector<nn::NetworkState> last_good = solver.snapshot();
  std::vector<nn::NetworkState> best;

  const bool use_ema = schedule.ema_decay > 0.0;
  std::vector<std::vector<Matrix>> ema(groups);
  if (use_ema)
    for (int g = 0; g < groups; ++g)
      for (Matrix* p : solver.parameters(g)) ema[g].push_back(*p);
  long ema_updates = 0;
  auto update_ema = [&] {
    ++ema_updates;
    const double beta = std::min(schedule.ema_decay, (1.0 + ema_updates) / (10.0 + ema_updates));
    for (int g = 0; g < groups; ++g) {
      const auto params = solver.parameters(g);
      for (std::size_t k = 0; k < params.size(); ++k)
        ema[g][k] = beta * ema[g][k] + (1.0 - beta) * *params[k];
    }
  };
  auto load_ema = [&] {
    for (int g = 0; g < groups; ++g) {
      const auto params = solver.parameters(g);
      for (std::size_t k = 0; k < params.size(); ++k) *params[k] = ema[g][k];
    }
  };

  auto record_eval = [&](HistoryRow& row) {
    if (!evaluate) return;
    std::vector<nn::NetworkState> live;
    if (use_ema) {
      live = solver.snapshot();
      load_ema();
    }
    const double err = evaluate(solver);
    row.rel_l2 = err;
    if (std::isfinite(err) && (!result.best_rel_l2 || err < *result.best_rel_l2)) {
      result.best_rel_l2 = err;
      result.best_epoch = row.epoch;
      if (schedule.keep_best) best = solver.snapshot();
    }
    if (use_ema) solver.restore(live);
  };

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const sde::NoiseSource epoch_noise = noise.split(static_cast<std::uint64_t>(epoch));
    solver.begin_epoch(epoch, epoch_noise.split(0xbe91));
    const double lr = schedule.lr_at(epoch);
    HistoryRow row;
    row.epoch = epoch;
    bool finite = true;
    int call = 0;
    for (int pass = 0; pass < 2 && finite; ++pass) {
      for (int g = 0; g < groups && finite; ++g) {
        const bool ascent = solver.is_ascent(g);
        if ((pass == 0) != ascent) continue;
        const int repeats = ascent ? schedule.adversarial_ratio : 1;
        for (int r = 0; r < repeats; ++r) {
          StepOutput out;
          try {
            out = solver.compute(g, epoch, epoch_noise.split(static_cast<std::uint64_t>(++call)));
          } catch (const ad::NumericError& e) {
            finite = false;
            result.abort_reason = e.what();
            break;
          }
          bool ok = std::isfinite(out.loss);
          for (const auto& gr : out.gradients) ok = ok && gr.allFinite();
          if (!ok) {
            finite = false;
            result.abort_reason = "non-finite loss or gradient";
            break;
          }
          clip_global_norm(out.gradients, schedule.clip_norm);
          adam_step(adam[g], solver.parameters(g), out.gradients, lr * solver.lr_scale(g), ascent ? 1.0 : -1.0);
          if (!ascent) {
            row.loss = out.loss;
            row.residual_mean = out.residual_mean;
          }
        }
      }
    }
    if (!finite) {
      result.aborted = true;
      result.abort_reason = "epoch " + std::to_string(epoch) + ": " + result.abort_reason;
      solver.restore(best.empty() ? last_good : best);
      return result;
    }
    last_good = solver.snapshot();
    if (use_ema) update_ema();
    const bool last = epoch + 1 == schedule.epochs;
    if ((schedule.eval_every > 0 && (epoch + 1) % schedule.eval_every == 0) || last)
      record_eval(row);
    row.wall_seconds = seconds();
    result.history.push_back(row);
  }
  if (schedule.keep_best && !best.empty())
    solver.restore(best);
  else if (use_ema)
    load_ema();
  return result;
}

void write_history_csv(const std::vector<HistoryRow>& history,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,loss,residual_mean,rel_l2,wall_seconds\n";
  out << std::setprecision(17);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.loss << ',' << r.residual_mean << ',';
    if (r.rel_l2) out << *r.rel_l2;
    out << ',' << std::setprecision(6) << r.wall_seconds << std::setprecision(17) << '\n';
  }
}

}  // namespace hdpde::train
