#include "hdpde/bench/bench.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace hdpde;
using bench::Matrix;
using bench::RowVector;
namespace fs = std::filesystem;

namespace {

// Wraps a prediction function u(0, z) in internal coordinates as a solver.
class FunctionSolver : public train::Solver {
 public:
  explicit FunctionSolver(std::function<RowVector(const Matrix&)> f) : f_(std::move(f)) {}
  std::string name() const override { return "function"; }
  std::vector<Matrix*> parameters(int) override { return {}; }
  train::StepOutput compute(int, int, const sde::NoiseSource&) override { return {}; }
  RowVector predict(const Matrix& z) const override { return f_(z); }
  std::vector<nn::NetworkState> snapshot() const override { return {}; }
  void restore(const std::vector<nn::NetworkState>&) override {}

 private:
  std::function<RowVector(const Matrix&)> f_;
};

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hdpde_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bench::RunConfig tiny_config(const fs::path& out) {
  bench::RunConfig c;
  c.problem = "heat";
  c.dim = 2;
  c.solver = "pinn_full";
  c.pinn.estimator.kind = pinn::EstimatorKind::Full;
  c.width = 8;
  c.depth = 2;
  c.pinn.points = 16;
  c.schedule.epochs = 20;
  c.schedule.eval_every = 5;
  c.test_points = 20;
  c.validation_points = 10;
  c.output = out.string();
  c.cache_dir = (out / "refs").string();
  return c;
}

}  // namespace

TEST(Config, PresetsRoundTripThroughJson) {
  for (const auto& name : bench::preset_names())
    for (const auto& problem : bench::problem_names())
      for (const auto& solver : bench::solver_names()) {
        const auto cfg = bench::preset(name, problem, solver);
        const auto back = bench::config_from_json(bench::to_json(cfg));
        EXPECT_EQ(bench::to_json(back), bench::to_json(cfg)) << name << ' ' << problem << ' ' << solver;
        EXPECT_EQ(bench::config_hash(back), bench::config_hash(cfg));
      }
  const auto large = bench::preset("large-d100", "hjb", "pinn_sdgd");
  EXPECT_EQ(large.dim, 100);
  EXPECT_EQ(large.width, 1024);
  EXPECT_EQ(large.depth, 4);
  EXPECT_EQ(large.reference_samples, 1000000u);
  EXPECT_EQ(large.pinn.estimator.kind, pinn::EstimatorKind::SdgdBiased);
  const auto shot = bench::preset("large-d1000", "bs", "shotgun");
  EXPECT_EQ(shot.shotgun.difference.pairs, 32);
  EXPECT_EQ(shot.shotgun.embedding.schedule, shotgun::WeightSchedule::Cubic);
  EXPECT_EQ(bench::preset("large-d100", "bs", "shotgun").shotgun.difference.pairs, 8);
  EXPECT_THROW(bench::preset("huge", "hjb", "pinn_sdgd"), std::invalid_argument);
}

TEST(Config, HashCoversNumericsOnly) {
  auto cfg = bench::preset("desk-d10", "hjb", "deepbsde");
  const auto h = bench::config_hash(cfg);
  auto moved = cfg;
  moved.output = "elsewhere";
  moved.cache_dir = "other";
  EXPECT_EQ(bench::config_hash(moved), h);
  auto seeded = cfg;
  seeded.eval_seed += 1;
  EXPECT_NE(bench::config_hash(seeded), h);
  auto lr = cfg;
  lr.schedule.adam.lr *= 2;
  EXPECT_NE(bench::config_hash(lr), h);
  EXPECT_EQ(h.size(), 16u);
}

TEST(Config, ValidationReportsEveryProblem) {
  bench::RunConfig c;
  c.problem = "wave";
  c.solver = "magic";
  c.dim = 0;
  c.test_points = 0;
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const bench::ConfigError& e) {
    EXPECT_GE(e.problems().size(), 4u);
  }
  bench::RunConfig mismatch;
  mismatch.solver = "pinn_hte";
  mismatch.pinn.estimator.kind = pinn::EstimatorKind::SdgdBiased;
  EXPECT_THROW(mismatch.validate(), bench::ConfigError);

  bench::json j = bench::to_json(bench::RunConfig{});
  j["schedule"]["epoch"] = 5;
  EXPECT_THROW(bench::config_from_json(j), bench::ConfigError);
  j = bench::to_json(bench::RunConfig{});
  j["dim"] = "ten";
  EXPECT_THROW(bench::config_from_json(j), bench::ConfigError);
}

TEST(Config, SolverDefaultsFollowName) {
  bench::json j = {{"solver", "pinn_hte"}, {"problem", "heat"}, {"dim", 3}};
  EXPECT_EQ(bench::config_from_json(j).pinn.estimator.kind, pinn::EstimatorKind::HteBiased);
  j["pinn"] = {{"estimator", {{"kind", "hte_unbiased"}}}};
  EXPECT_EQ(bench::config_from_json(j).pinn.estimator.kind, pinn::EstimatorKind::HteUnbiased);
}

TEST(References, HeatIsExact) {
  const auto p = problems::make_problem(problems::HeatSanityInstance{4, 1.0});
  const auto dir = temp_dir("heat_refs");
  const auto refs = bench::compute_references(p, 30, 10, 3, bench::PointRole::Test, dir, false);
  ASSERT_TRUE(refs.exact);
  for (int i = 0; i < 30; ++i)
    EXPECT_NEAR(refs.values(i), problems::heat_exact(refs.points.col(i), 0.0, {4, 1.0}), 1e-12);
  EXPECT_EQ(refs.noise_floor(), 0.0);
  const auto val = bench::compute_references(p, 30, 10, 3, bench::PointRole::Validation, dir, false);
  EXPECT_NE(val.points, refs.points);
}

TEST(References, CacheReloadIsBitIdentical) {
  const auto p = problems::make_problem(problems::make_hjb_instance(5, 2));
  const auto dir = temp_dir("hjb_refs");
  const auto a = bench::compute_references(p, 8, 2000, 4, bench::PointRole::Test, dir, false);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file();
  EXPECT_EQ(files, 1u);
  const auto b = bench::compute_references(p, 8, 2000, 4, bench::PointRole::Test, dir, false);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.se, b.se);
  EXPECT_EQ(a.points, b.points);
}

TEST(References, StandardErrorScaling) {
  const auto p = problems::make_problem(problems::make_hjb_instance(5, 2));
  const auto dir = temp_dir("se_refs");
  auto mean_var = [&](std::uint64_t n) {
    const auto r = bench::compute_references(p, 20, n, 6, bench::PointRole::Test, dir, false);
    return r.se.array().square().mean();
  };
  const double v1 = mean_var(4000), v2 = mean_var(8000), v4 = mean_var(16000);
  // Doubling the samples halves the variance; four times the samples halves the SE.
  EXPECT_NEAR(v1 / v2, 2.0, 0.2);
  EXPECT_NEAR(std::sqrt(v1 / v4), 2.0, 0.2);
}

TEST(References, HighDimensionalMissNeedsComputeFlag) {
  const auto p = problems::make_problem(problems::make_hjb_instance(101, 0));
  const auto dir = temp_dir("miss_refs");
  EXPECT_THROW(bench::compute_references(p, 2, 100, 1, bench::PointRole::Test, dir, false),
               bench::ReferenceCacheMiss);
  const auto r = bench::compute_references(p, 2, 100, 1, bench::PointRole::Test, dir, true);
  EXPECT_EQ(r.values.size(), 2);
  EXPECT_NO_THROW(bench::compute_references(p, 2, 100, 1, bench::PointRole::Test, dir, false));
}

TEST(Evaluation, ExactSolutionScoresWithinReferenceNoise) {
  const auto heat = problems::make_problem(problems::HeatSanityInstance{3, 1.0});
  const auto dir = temp_dir("exact_eval");
  const auto hr = bench::compute_references(heat, 50, 1, 1, bench::PointRole::Test, dir, false);
  FunctionSolver exact([](const Matrix& z) {
    RowVector out(z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) out(i) = problems::heat_exact(z.col(i), 0.0, {3, 1.0});
    return out;
  });
  EXPECT_LE(bench::relative_l2(bench::predict_original(exact, heat, hr.points), hr.values), 1e-14);

  const auto hjb = problems::make_problem(problems::make_hjb_instance(4, 1));
  const auto refs = bench::compute_references(hjb, 40, 4000, 2, bench::PointRole::Test, dir, false);
  FunctionSolver oracle([&](const Matrix& z) {
    RowVector out(z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
      sde::NoiseSource n(99, static_cast<std::uint64_t>(i));
      out(i) = hjb.reference(z.col(i), 0.0, 64000, n).value;
    }
    return out;
  });
  const double rel = bench::relative_l2(bench::predict_original(oracle, hjb, refs.points), refs.values);
  EXPECT_LE(rel, 2.0 * refs.noise_floor());
  EXPECT_TRUE(bench::is_inconclusive(rel, refs.noise_floor()));
  EXPECT_FALSE(bench::is_inconclusive(10.0 * refs.noise_floor(), refs.noise_floor()));
}

TEST(Evaluation, BlackScholesReportedInOriginalUnits) {
  bench::RunConfig c;
  c.problem = "bs";
  c.dim = 3;
  const auto p = bench::build_problem(c);
  EXPECT_EQ(p.coordinate_scale, 100.0);
  EXPECT_EQ(p.value_scale, 100.0);
  const auto dir = temp_dir("bs_eval");
  const auto refs = bench::compute_references(p, 10, 4000, 1, bench::PointRole::Test, dir, false);
  EXPECT_GE(refs.points.minCoeff(), 90.0);
  EXPECT_LE(refs.points.maxCoeff(), 110.0);
  // A solver that returns the reference in scaled units v = u / K at z = x / K.
  FunctionSolver scaled([&](const Matrix& z) {
    RowVector out(z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
      Eigen::Index match = 0;
      (refs.points.colwise() - 100.0 * z.col(i)).colwise().norm().minCoeff(&match);
      out(i) = refs.values(match) / 100.0;
    }
    return out;
  });
  EXPECT_LE(bench::relative_l2(bench::predict_original(scaled, p, refs.points), refs.values), 1e-14);
  const auto spec = bench::build_network(c, p);
  EXPECT_EQ(spec.input_center, 1.0);
  EXPECT_EQ(spec.input_scale, 0.1);
}

TEST(Evaluation, RelativeL2Checks) {
  RowVector a(2), b(2);
  a << 1.0, 2.0;
  b << 1.0, 1.0;
  EXPECT_NEAR(bench::relative_l2(a, b), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(bench::relative_l2(a, RowVector::Zero(2)), std::invalid_argument);
  EXPECT_THROW(bench::relative_l2(a, RowVector::Ones(3)), std::invalid_argument);
}

TEST(Solvers, EveryNameBuilds) {
  for (const auto& s : bench::solver_names()) {
    auto cfg = bench::preset("heat-d3", "heat", s);
    auto solver = bench::build_solver(cfg);
    EXPECT_FALSE(solver->name().empty());
    const RowVector u = solver->predict(Matrix::Zero(3, 2));
    EXPECT_EQ(u.size(), 2);
  }
}

TEST(Run, PersistsAndIsIdempotentAndDeterministic) {
  const auto out1 = temp_dir("run1"), out2 = temp_dir("run2");
  const auto c1 = tiny_config(out1), c2 = tiny_config(out2);
  EXPECT_EQ(bench::config_hash(c1), bench::config_hash(c2));
  const auto a = bench::run(c1);
  const fs::path dir = bench::run_directory(c1);
  EXPECT_TRUE(fs::exists(dir / "result.json"));
  EXPECT_TRUE(fs::exists(dir / "history.csv"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_EQ(a.n_test, 20);
  EXPECT_EQ(a.abs_errors.size(), 20u);
  EXPECT_TRUE(a.validation_rel_l2.has_value());

  const auto again = bench::run(c1);
  EXPECT_EQ(again.wall_seconds, a.wall_seconds);

  const auto b = bench::run(c2);
  EXPECT_EQ(a.rel_l2, b.rel_l2);
  EXPECT_EQ(a.abs_errors, b.abs_errors);
  EXPECT_EQ(a.config_hash, b.config_hash);

  std::ifstream in(dir / "config.json");
  const auto reread = bench::config_from_json(bench::json::parse(in));
  EXPECT_EQ(bench::config_hash(reread), a.config_hash);
}

TEST(Report, RowsFollowResults) {
  const auto empty = temp_dir("report_empty");
  const std::string none = bench::report(empty);
  EXPECT_EQ(std::count(none.begin(), none.end(), '\n'), 2);

  const auto root = temp_dir("report");
  auto c1 = tiny_config(root / "a");
  bench::run(c1);
  const std::string one = bench::report(root);
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 3);
  EXPECT_NE(one.find("| heat | 2 | pinn_full |"), std::string::npos);
  EXPECT_TRUE(fs::exists(root / "table.csv"));
  EXPECT_TRUE(fs::exists(root / "curves.csv"));

  auto c2 = tiny_config(root / "b");
  bench::run(c2);
  const std::string two = bench::report(root);
  const auto first = two.find("| heat");
  const auto second = two.find("| heat", first + 1);
  ASSERT_NE(second, std::string::npos);
  const std::string row1 = two.substr(first, two.find('\n', first) - first);
  const std::string row2 = two.substr(second, two.find('\n', second) - second);
  // Rows agree in every cell except wall time.
  auto cells = [](const std::string& row) {
    std::vector<std::string> out;
    std::stringstream ss(row);
    std::string cell;
    while (std::getline(ss, cell, '|')) out.push_back(cell);
    out.erase(out.begin() + 5);
    return out;
  };
  EXPECT_EQ(cells(row1), cells(row2));
  EXPECT_EQ(cells(row1).size(), 6u);
}
