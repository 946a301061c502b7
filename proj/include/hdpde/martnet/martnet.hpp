#pragma once

#include "hdpde/network/mlp.hpp"
#include "hdpde/problems/problem.hpp"
#include "hdpde/sde/paths.hpp"
#include "hdpde/trainer/trainer.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace hdpde::martnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// u(t+h, x') - u(t, x) - h f(t, x, u, grad u) with
/// x' = x + mu(t, x, u) h + sigma(t, x, u) sqrt(h) xi.
/// Its mean over xi is h times the PDE residual up to O(h^2).
double increment(const nn::NetworkState& net, const problems::ParabolicProblem& problem,
                 double t, const Vector& x, const Vector& xi, double h);

/// Batched, differentiable increments (1 x K) at columns (t_k, x_k, xi_k).
ad::Var increments(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                   const RowVector& t, const Matrix& x, const Matrix& xi, double h);

class PlanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A_i = nodes_i x paths_i over (time node, path) pairs of a pilot batch.
struct GalerkinBatchPlan {
  std::vector<int> nodes1, paths1, nodes2, paths2;

  std::size_t size1() const { return nodes1.size() * paths1.size(); }
  std::size_t size2() const { return nodes2.size() * paths2.size(); }
};

/// Validates the sets against a pilot batch with `steps` steps and `paths`
/// paths; overlapping path sets raise PlanError.
GalerkinBatchPlan make_plan(std::vector<int> nodes1, std::vector<int> paths1,
                            std::vector<int> nodes2, std::vector<int> paths2, int steps,
                            int paths);

/// Disjoint random path sets of `paths_per_set` each; `nodes_per_set` random
/// nodes from {0..N-1} per set, or all nodes when 0. With `shared_nodes` both
/// sets use the same nodes.
GalerkinBatchPlan sample_plan(int steps, int paths, int paths_per_set, int nodes_per_set,
                              sde::NoiseSource& noise, bool shared_nodes = false);

/// Squashed test function rho = tanh(test_net(t, x)), one row per output.
ad::Var test_function(const nn::BoundNetwork& test_net, const RowVector& t, const Matrix& x);

struct GalerkinPair {
  ad::Var g1;  // J x 1
  ad::Var g2;
};

/// G_i = (h / |A_i|) sum_{(n, m) in A_i} rho(t_n, X_n^m) M(t_n, X_n^m, xi_n^m).
/// With `antithetic`, M is replaced by 1/2 (M(xi) + M(-xi)) on the same draw.
GalerkinPair galerkin_estimate(const nn::BoundNetwork& net, const nn::BoundNetwork& test_net,
                               const problems::ParabolicProblem& problem,
                               const sde::PathBatch& paths, const GalerkinBatchPlan& plan,
                               bool antithetic = false);

/// Per-node variant: G_i(n) over the paths of set i at node n, returns
/// mean_n sum_j G1_j(n) G2_j(n). Requires identical node sets.
ad::Var galerkin_node_product(const nn::BoundNetwork& net, const nn::BoundNetwork& test_net,
                              const problems::ParabolicProblem& problem,
                              const sde::PathBatch& paths, const GalerkinBatchPlan& plan,
                              bool antithetic = false);

/// sum_j G1_j G2_j.
ad::Var galerkin_product(const GalerkinPair& g);

/// mean over columns of (u(T, x) - g(x))^2.
ad::Var terminal_loss(const nn::BoundNetwork& net, const problems::ParabolicProblem& problem,
                      const Matrix& x);

struct StepReport {
  double galerkin = 0.0;   // G1 . G2 before the updates
  double terminal = 0.0;
};

/// One ascent step on the test net for G1 . G2 followed by one descent step on
/// the solution net for G1 . G2 + terminal_weight * terminal loss at the pilot
/// end states of the planned paths.
StepReport martnet_train_step(nn::NetworkState& net, nn::NetworkState& test_net,
                              const problems::ParabolicProblem& problem,
                              const sde::PathBatch& paths, const GalerkinBatchPlan& plan,
                              train::AdamState& net_opt, train::AdamState& test_opt,
                              double lr, double terminal_weight = 1.0);

/// Antithetic Monte-Carlo mean of M / h over `samples` pairs, and the
/// analytic residual at (t, x).
struct BridgeCheck {
  double mc_mean = 0.0;
  double mc_se = 0.0;
  double residual = 0.0;
};
BridgeCheck residual_bridge_check(const nn::NetworkState& net,
                                  const problems::ParabolicProblem& problem, double t,
                                  const Vector& x, double h, int samples,
                                  sde::NoiseSource& noise);

struct MartNetConfig {
  int pilot_paths = 256;
  int pilot_steps = 100;
  int refresh_every = 50;
  int paths_per_set = 32;
  int nodes_per_set = 20;
  int test_outputs = 1;
  std::vector<int> test_hidden = {32, 32};
  double terminal_weight = 1.0;
  /// Divide G1 . G2 by h^4 so it is on the scale of mean(rho R)^2.
  bool normalize_galerkin = true;
  bool antithetic_increments = true;
  /// When false the test net keeps its initial weights (fixed test functions).
  bool train_test_net = true;
  double test_lr_scale = 1.0;
  /// Pair the two path sets node by node (test functions localized in time).
  bool per_node = false;
  /// Adam steps fitting u(t_n, X_n) to g(X_n) on the first pilot batch
  /// before training starts.
  int warm_start_steps = 0;
  double warm_start_lr = 1e-3;
  /// Pilot end states used for the terminal loss per step.
  int terminal_points = 128;

  void validate() const;
};

/// Group 0 is the test net (ascent), group 1 the solution net.
class MartNetSolver : public train::Solver {
 public:
  MartNetSolver(problems::ParabolicProblem problem, const nn::MlpSpec& spec, std::uint64_t seed,
                MartNetConfig cfg);

  std::string name() const override { return "martnet"; }
  int group_count() const override { return 2; }
  bool is_ascent(int group) const override { return group == 0; }
  double lr_scale(int group) const override { return group == 0 ? cfg_.test_lr_scale : 1.0; }
  std::vector<Matrix*> parameters(int group) override;
  void begin_epoch(int epoch, const sde::NoiseSource& noise) override;
  train::StepOutput compute(int group, int epoch, const sde::NoiseSource& noise) override;
  RowVector predict(const Matrix& z) const override;
  std::vector<nn::NetworkState> snapshot() const override { return {net_, test_net_}; }
  void restore(const std::vector<nn::NetworkState>& states) override;

  const nn::NetworkState& network() const { return net_; }
  const sde::PathBatch& pilot() const { return pilot_; }

 private:
  void refresh(int epoch, const sde::NoiseSource& noise);
  void warm_start(const sde::NoiseSource& noise);

  problems::ParabolicProblem problem_;
  nn::NetworkState net_;
  nn::NetworkState test_net_;
  MartNetConfig cfg_;
  sde::PathBatch pilot_;
  bool has_pilot_ = false;
};

}  // namespace hdpde::martnet
