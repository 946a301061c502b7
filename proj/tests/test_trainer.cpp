#include "hdpde/trainer/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

using namespace hdpde;
using train::Matrix;
using train::RowVector;

namespace {

nn::NetworkState scalar_state(double v) {
  nn::NetworkState s;
  s.params = {Matrix::Constant(1, 1, v)};
  return s;
}

// Loss (theta - target)^2 with optional gradient noise from the step stream.
class QuadraticSolver : public train::Solver {
 public:
  explicit QuadraticSolver(double theta0, double noise_scale = 0.0)
      : state_(scalar_state(theta0)), noise_scale_(noise_scale) {}

  std::string name() const override { return "quadratic"; }
  std::vector<Matrix*> parameters(int) override { return {&state_.params[0]}; }
  train::StepOutput compute(int, int epoch, const sde::NoiseSource& noise) override {
    seen.push_back(theta());
    if (epoch == nan_epoch) return {std::numeric_limits<double>::quiet_NaN(), 0.0, {Matrix::Zero(1, 1)}};
    sde::NoiseSource n = noise;
    const double g = 2.0 * theta() + noise_scale_ * n.next_gaussian();
    return {theta() * theta(), theta(), {Matrix::Constant(1, 1, g)}};
  }
  RowVector predict(const Matrix& z) const override {
    return RowVector::Constant(z.cols(), theta());
  }
  std::vector<nn::NetworkState> snapshot() const override { return {state_}; }
  void restore(const std::vector<nn::NetworkState>& s) override { state_ = s.at(0); }

  double theta() const { return state_.params[0](0, 0); }

  std::vector<double> seen;
  int nan_epoch = -1;

 private:
  nn::NetworkState state_;
  double noise_scale_;
};

// Two groups: 0 ascent, 1 descent. Records the call order.
class MinimaxSolver : public train::Solver {
 public:
  MinimaxSolver() : a_(scalar_state(0.5)), b_(scalar_state(0.5)) {}
  std::string name() const override { return "minimax"; }
  int group_count() const override { return 2; }
  bool is_ascent(int g) const override { return g == 0; }
  std::vector<Matrix*> parameters(int g) override {
    return {g == 0 ? &a_.params[0] : &b_.params[0]};
  }
  train::StepOutput compute(int g, int, const sde::NoiseSource&) override {
    calls.push_back(g);
    const double a = a_.params[0](0, 0), b = b_.params[0](0, 0);
    // f(a, b) = -a^2 + b^2: ascent on a and descent on b both shrink toward 0.
    if (g == 0) return {-a * a, 0.0, {Matrix::Constant(1, 1, -2.0 * a)}};
    return {b * b, 0.0, {Matrix::Constant(1, 1, 2.0 * b)}};
  }
  RowVector predict(const Matrix& z) const override { return RowVector::Zero(z.cols()); }
  std::vector<nn::NetworkState> snapshot() const override { return {a_, b_}; }
  void restore(const std::vector<nn::NetworkState>& s) override {
    a_ = s.at(0);
    b_ = s.at(1);
  }
  double a() const { return a_.params[0](0, 0); }
  double b() const { return b_.params[0](0, 0); }

  std::vector<int> calls;

 private:
  nn::NetworkState a_, b_;
};

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  Matrix p = Matrix::Constant(2, 3, 1.5);
  auto state = train::make_adam({&p});
  train::adam_step(state, {&p}, {Matrix::Zero(2, 3)}, 0.1);
  EXPECT_EQ(p, Matrix::Constant(2, 3, 1.5));
  EXPECT_EQ(state.step, 1);
  EXPECT_EQ(state.m[0].rows(), 2);
  EXPECT_EQ(state.v[0].cols(), 3);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  Matrix p(1, 3);
  p << 1.0, 1.0, 1.0;
  Matrix g(1, 3);
  g << 4.0, -0.5, 2e-3;
  auto state = train::make_adam({&p});
  train::adam_step(state, {&p}, {g}, 0.01);
  // m_hat = g and v_hat = g^2, so the step is lr g / (|g| + eps).
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(p(k), 1.0 - 0.01 * g(k) / (std::abs(g(k)) + 1e-8), 1e-15);
    EXPECT_NEAR(p(k), 1.0 - 0.01 * (g(k) > 0 ? 1 : -1), 1e-7);
  }

  Matrix q = Matrix::Ones(1, 1);
  auto up = train::make_adam({&q});
  train::adam_step(up, {&q}, {Matrix::Constant(1, 1, 3.0)}, 0.01, +1.0);
  EXPECT_NEAR(q(0, 0), 1.01, 1e-10);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  Matrix theta = Matrix::Ones(1, 1);
  auto state = train::make_adam({&theta});
  for (int k = 0; k < 100; ++k)
    train::adam_step(state, {&theta}, {2.0 * theta}, 0.1);
  EXPECT_LT(std::abs(theta(0, 0)), 1e-2);
}

TEST(Adam, RejectsMismatchedShapes) {
  Matrix p = Matrix::Ones(2, 2);
  auto state = train::make_adam({&p});
  EXPECT_THROW(train::adam_step(state, {&p}, {Matrix::Ones(2, 1)}, 0.1), std::invalid_argument);
  EXPECT_THROW(train::adam_step(state, {&p}, {}, 0.1), std::invalid_argument);
}

TEST(Clip, GlobalNormBoundedExactly) {
  sde::NoiseSource n(3);
  for (double scale : {0.1, 1.0, 37.0, 1e6}) {
    std::vector<Matrix> g = {scale * n.next_gaussian_matrix(3, 4), scale * n.next_gaussian_matrix(1, 5)};
    const std::vector<Matrix> before = g;
    const double norm = train::clip_global_norm(g, 1.0);
    double after = 0.0;
    for (const auto& m : g) after += m.squaredNorm();
    after = std::sqrt(after);
    EXPECT_LE(after, 1.0 + 4 * std::numeric_limits<double>::epsilon());
    if (norm <= 1.0) {
      EXPECT_EQ(g[0], before[0]);
    } else {
      EXPECT_NEAR(after, 1.0, 1e-12);
      // Direction preserved.
      EXPECT_NEAR((g[0] - before[0] / norm).norm(), 0.0, 1e-12);
    }
  }
  std::vector<Matrix> g = {Matrix::Constant(2, 2, 10.0)};
  train::clip_global_norm(g, 0.0);
  EXPECT_EQ(g[0](0, 0), 10.0);
}

TEST(Schedule, StaircaseIsMonotone) {
  train::TrainSchedule s;
  s.adam.lr = 1e-2;
  s.lr_decay = 0.5;
  s.decay_every = 10;
  EXPECT_DOUBLE_EQ(s.lr_at(0), 1e-2);
  EXPECT_DOUBLE_EQ(s.lr_at(9), 1e-2);
  EXPECT_DOUBLE_EQ(s.lr_at(10), 5e-3);
  EXPECT_DOUBLE_EQ(s.lr_at(35), 1.25e-3);
  for (int e = 1; e < 100; ++e) EXPECT_LE(s.lr_at(e), s.lr_at(e - 1));
}

TEST(Schedule, ValidationRejectsBadValues) {
  train::TrainSchedule s;
  s.epochs = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.lr_decay = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.ema_decay = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.adversarial_ratio = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Train, ZeroEpochsReturnsInitialState) {
  QuadraticSolver solver(0.7);
  train::TrainSchedule s;
  s.epochs = 0;
  const auto r = train::train(solver, s, sde::NoiseSource(1));
  EXPECT_TRUE(r.history.empty());
  EXPECT_FALSE(r.aborted);
  EXPECT_EQ(solver.theta(), 0.7);
}

TEST(Train, SameSeedSameHistory) {
  train::TrainSchedule s;
  s.epochs = 50;
  s.adam.lr = 0.05;
  QuadraticSolver a(1.0, 0.5), b(1.0, 0.5), c(1.0, 0.5);
  const auto ra = train::train(a, s, sde::NoiseSource(9));
  const auto rb = train::train(b, s, sde::NoiseSource(9));
  const auto rc = train::train(c, s, sde::NoiseSource(10));
  ASSERT_EQ(ra.history.size(), 50u);
  for (std::size_t k = 0; k < ra.history.size(); ++k)
    EXPECT_EQ(ra.history[k].loss, rb.history[k].loss);
  EXPECT_EQ(a.theta(), b.theta());
  EXPECT_NE(a.theta(), c.theta());
}

TEST(Train, EvaluationDoesNotPerturbTraining) {
  train::TrainSchedule s;
  s.epochs = 30;
  s.eval_every = 3;
  s.keep_best = false;
  QuadraticSolver a(1.0, 0.5), b(1.0, 0.5);
  const auto ra = train::train(a, s, sde::NoiseSource(2));
  const auto rb = train::train(b, s, sde::NoiseSource(2), [](const train::Solver& sv) {
    return std::abs(sv.predict(Matrix::Zero(1, 1))(0));
  });
  for (std::size_t k = 0; k < ra.history.size(); ++k) EXPECT_EQ(ra.history[k].loss, rb.history[k].loss);
  EXPECT_EQ(rb.history[2].rel_l2.has_value(), true);
  EXPECT_EQ(rb.history[1].rel_l2.has_value(), false);
  EXPECT_TRUE(rb.history.back().rel_l2.has_value());
}

TEST(Train, NanLossRestoresLastGoodState) {
  QuadraticSolver solver(1.0);
  solver.nan_epoch = 5;
  train::TrainSchedule s;
  s.epochs = 20;
  s.adam.lr = 0.1;
  const auto r = train::train(solver, s, sde::NoiseSource(4));
  EXPECT_TRUE(r.aborted);
  EXPECT_NE(r.abort_reason.find("epoch 5"), std::string::npos);
  EXPECT_EQ(r.history.size(), 5u);
  // State after epoch 4 is what epoch 5 saw.
  EXPECT_EQ(solver.theta(), solver.seen.back());
}

TEST(Train, KeepsBestEvaluatedState) {
  QuadraticSolver solver(1.0);
  train::TrainSchedule s;
  s.epochs = 10;
  s.eval_every = 1;
  s.adam.lr = 0.1;
  int calls = 0;
  std::vector<double> at_eval;
  const auto r = train::train(solver, s, sde::NoiseSource(4), [&](const train::Solver& sv) {
    at_eval.push_back(sv.predict(Matrix::Zero(1, 1))(0));
    const double errs[] = {5, 4, 3, 1, 2, 6, 7, 8, 9, 10};
    return errs[calls++];
  });
  EXPECT_EQ(r.best_epoch, 3);
  EXPECT_EQ(*r.best_rel_l2, 1.0);
  EXPECT_EQ(solver.theta(), at_eval[3]);
}

TEST(Train, MinimaxAlternatesAscentFirst) {
  MinimaxSolver solver;
  train::TrainSchedule s;
  s.epochs = 3;
  s.adversarial_ratio = 2;
  s.adam.lr = 0.01;
  train::train(solver, s, sde::NoiseSource(1));
  const std::vector<int> expect = {0, 0, 1, 0, 0, 1, 0, 0, 1};
  EXPECT_EQ(solver.calls, expect);
  // Ascent on -a^2 drives a toward 0 as well as descent on b^2.
  EXPECT_LT(std::abs(solver.a()), 0.5);
  EXPECT_LT(std::abs(solver.b()), 0.5);
}

TEST(Train, EmaMatchesManualAverage) {
  train::TrainSchedule s;
  s.epochs = 40;
  s.adam.lr = 0.05;
  s.keep_best = false;
  QuadraticSolver raw(1.0, 0.3);
  train::train(raw, s, sde::NoiseSource(6));
  std::vector<double> trajectory(raw.seen.begin() + 1, raw.seen.end());
  trajectory.push_back(raw.theta());

  s.ema_decay = 0.9;
  QuadraticSolver averaged(1.0, 0.3);
  train::train(averaged, s, sde::NoiseSource(6));
  EXPECT_EQ(averaged.seen, raw.seen);
  double ema = 1.0;
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const double n = static_cast<double>(k + 1);
    const double beta = std::min(0.9, (1.0 + n) / (10.0 + n));
    ema = beta * ema + (1.0 - beta) * trajectory[k];
  }
  EXPECT_NEAR(averaged.theta(), ema, 1e-14);
}

TEST(Train, HistoryCsvHeader) {
  std::vector<train::HistoryRow> rows(2);
  rows[1].epoch = 1;
  rows[1].rel_l2 = 0.25;
  const auto path = std::filesystem::temp_directory_path() / "hdpde_history_test.csv";
  train::write_history_csv(rows, path);
  std::ifstream in(path);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "epoch,loss,residual_mean,rel_l2,wall_seconds");
  EXPECT_EQ(first.substr(0, 6), "0,0,0,");
  EXPECT_NE(second.find("0.25"), std::string::npos);
  std::filesystem::remove(path);
}
