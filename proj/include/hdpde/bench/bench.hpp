#pragma once

#include "hdpde/bsde/bsde.hpp"
#include "hdpde/martnet/martnet.hpp"
#include "hdpde/pinn/solver.hpp"
#include "hdpde/problems/problem.hpp"
#include "hdpde/shotgun/shotgun.hpp"
#include "hdpde/trainer/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdpde::bench {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using nlohmann::json;

/// Collected validation failures of a run configuration.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::vector<std::string>& problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Reference values are missing from the cache and may not be computed.
class ReferenceCacheMiss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& solver_names();
const std::vector<std::string>& problem_names();

struct RunConfig {
  std::string problem = "heat";
  int dim = 3;
  double horizon = 1.0;
  std::string solver = "pinn_sdgd";

  int width = 64;
  int depth = 4;
  std::string activation = "tanh";

  pinn::PinnSolverConfig pinn;
  bsde::BsdeSolverConfig bsde;
  martnet::MartNetConfig martnet;
  shotgun::ShotgunConfig shotgun;
  train::TrainSchedule schedule;

  std::uint64_t train_seed = 1;
  std::uint64_t coefficient_seed = 0;
  std::uint64_t eval_seed = 7;

  int test_points = 200;
  std::uint64_t reference_samples = 100000;
  /// Held-out points used to pick the best checkpoint; 0 selects on the
  /// training loss trajectory only (last or averaged state).
  int validation_points = 100;
  std::uint64_t validation_samples = 10000;

  /// Black-Scholes internal coordinate scale K.
  double bs_scale = 100.0;

  std::string output = "results";
  std::string cache_dir = "results/refs";

  /// Throws ConfigError listing every violated precondition.
  void validate() const;
};

json to_json(const RunConfig& cfg);
RunConfig config_from_json(const json& j);

/// FNV-1a over every field that changes the numbers (output paths excluded).
std::string config_hash(const RunConfig& cfg);

const std::vector<std::string>& preset_names();
/// Named settings for a problem and solver.
RunConfig preset(const std::string& name, const std::string& problem, const std::string& solver);

problems::ParabolicProblem build_problem(const RunConfig& cfg);
nn::MlpSpec build_network(const RunConfig& cfg, const problems::ParabolicProblem& problem);
std::unique_ptr<train::Solver> build_solver(const RunConfig& cfg);

/// Points in original coordinates with reference values at t = 0.
struct ReferenceSet {
  Matrix points;
  RowVector values;
  RowVector se;
  bool exact = false;

  /// ||se||_2 / ||values||_2, the relative error the references alone carry.
  double noise_floor() const;
};

enum class PointRole { Test, Validation };

/// Draws the points of `role` from the eval seed and evaluates the reference.
/// Results are cached in `cache_dir` keyed by problem identity, counts and seed;
/// a miss at d > 100 without `allow_compute` raises ReferenceCacheMiss.
ReferenceSet compute_references(const problems::ParabolicProblem& problem, int points,
                                std::uint64_t samples, std::uint64_t seed, PointRole role,
                                const std::filesystem::path& cache_dir, bool allow_compute);

/// Solver prediction in original units at the given points.
RowVector predict_original(const train::Solver& solver, const problems::ParabolicProblem& problem,
                           const Matrix& points);

double relative_l2(const RowVector& prediction, const RowVector& reference);

struct RunResult {
  std::string config_hash;
  std::string problem;
  std::string solver;
  int dim = 0;
  double rel_l2 = 0.0;
  int n_test = 0;
  std::vector<double> abs_errors;
  double reference_noise_floor = 0.0;
  bool inconclusive = false;
  std::optional<double> validation_rel_l2;
  int best_epoch = -1;
  bool aborted = false;
  std::string abort_reason;
  double wall_seconds = 0.0;
  std::uint64_t train_seed = 0;
  std::uint64_t coefficient_seed = 0;
  std::uint64_t eval_seed = 0;
  std::string history_csv;
  std::string version;
};

json to_json(const RunResult& r);
RunResult result_from_json(const json& j);

/// True when the error is within 3x the reference noise floor.
bool is_inconclusive(double rel_l2, double noise_floor);

struct RunOptions {
  bool compute_refs = false;
  /// Re-run even when a result with the same config hash exists.
  bool force = false;
  /// Called with each validation error as training proceeds.
  std::function<void(double)> progress;
};

/// Trains, evaluates and persists <output>/<solver>-<problem>-d<d>-<hash>/.
RunResult run(const RunConfig& cfg, const RunOptions& options = {});

std::filesystem::path run_directory(const RunConfig& cfg);

/// Markdown table keyed by (problem, d, solver) over result.json files below
/// `root`; also writes table.csv and curves.csv there when `write_files`.
std::string report(const std::filesystem::path& root, bool write_files = true);

std::string version();

}  // namespace hdpde::bench
