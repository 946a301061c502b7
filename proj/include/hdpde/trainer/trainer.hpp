#pragma once

#include "hdpde/network/mlp.hpp"
#include "hdpde/sde/noise.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdpde::train {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators shaped like the parameters they update.
struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

AdamState make_adam(const std::vector<Matrix*>& params, const AdamConfig& config = {});

/// One bias-corrected Adam update with learning rate `lr` (overrides config.lr
/// so schedules do not touch the state). `sign` is -1 for descent, +1 for ascent.
void adam_step(AdamState& state, const std::vector<Matrix*>& params,
               const std::vector<Matrix>& grads, double lr, double sign = -1.0);

/// Scales grads in place so their global norm is at most max_norm; returns the
/// norm before clipping. max_norm <= 0 disables clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

struct TrainSchedule {
  int epochs = 2000;
  AdamConfig adam;
  /// Staircase decay: lr(e) = lr * decay^(floor(e / decay_every)).
  double lr_decay = 1.0;
  int decay_every = 0;
  double clip_norm = 1.0;
  /// Ascent steps per descent step for minimax solvers.
  int adversarial_ratio = 1;
  /// Test-set evaluation cadence in epochs (0: only at the end).
  int eval_every = 0;
  bool keep_best = true;
  /// Exponential moving average of the parameters (0 disables). Evaluation,
  /// checkpoints and the returned state use the averaged parameters.
  double ema_decay = 0.0;

  double lr_at(int epoch) const;
  void validate() const;
};

struct StepOutput {
  double loss = 0.0;
  double residual_mean = 0.0;
  std::vector<Matrix> gradients;
};

/// Contract between the training loop and a solver.
class Solver {
 public:
  virtual ~Solver() = default;
  virtual std::string name() const = 0;

  /// Parameter groups; ascent groups are maximized and run before the descent
  /// groups within an epoch.
  virtual int group_count() const { return 1; }
  virtual bool is_ascent(int /*group*/) const { return false; }
  virtual std::vector<Matrix*> parameters(int group) = 0;
  /// Multiplier on the scheduled learning rate for one group.
  virtual double lr_scale(int /*group*/) const { return 1.0; }

  /// Hook before the groups of an epoch run (pilot refresh and the like).
  virtual void begin_epoch(int /*epoch*/, const sde::NoiseSource& /*noise*/) {}
  /// Loss and parameter gradients of one group at the current parameters.
  virtual StepOutput compute(int group, int epoch, const sde::NoiseSource& noise) = 0;

  /// u(0, z) in the solver's internal coordinates (1 x B).
  virtual RowVector predict(const Matrix& z) const = 0;

  virtual std::vector<nn::NetworkState> snapshot() const = 0;
  virtual void restore(const std::vector<nn::NetworkState>& states) = 0;
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double residual_mean = 0.0;
  std::optional<double> rel_l2;
  double wall_seconds = 0.0;
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, int epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::optional<double> best_rel_l2;
  int best_epoch = -1;
  bool aborted = false;
  std::string abort_reason;
};

/// Returns the relative L2 test error of the solver's current state.
using Evaluator = std::function<double(const Solver&)>;

/// Epoch loop. Training noise for epoch e is noise.split(e); evaluation must
/// draw from its own stream. On a non-finite loss the solver is restored to
/// the last good (or best) state and the result is marked aborted.
TrainResult train(Solver& solver, const TrainSchedule& schedule,
                  const sde::NoiseSource& noise, const Evaluator& evaluate = {});

void write_history_csv(const std::vector<HistoryRow>& history,
                       const std::filesystem::path& path);

}  // namespace hdpde::train
