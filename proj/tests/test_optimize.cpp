#include <polysem/optimize.hpp>

#include <gtest/gtest.h>

using polysem::minimize_bfgs;
using polysem::OptimizerOptions;
using polysem::StopReason;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

double rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
  g(0) = -2.0 * a - 400.0 * x(0) * b;
  g(1) = 200.0 * b;
  return a * a + 100.0 * b * b;
}

}  // namespace

TEST(Bfgs, OneDimensionalQuadratic) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g(0) = 2.0 * (x(0) - 3.0);
    return (x(0) - 3.0) * (x(0) - 3.0);
  };
  const auto r = minimize_bfgs(f, Eigen::VectorXd::Constant(1, -4.0), Eigen::VectorXd::Constant(1, -kInf));
  EXPECT_TRUE(r.converged());
  EXPECT_NEAR(r.x(0), 3.0, 1e-10);
}

TEST(Bfgs, Rosenbrock) {
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  const auto r = minimize_bfgs(rosenbrock, x0, Eigen::VectorXd::Constant(2, -kInf));
  EXPECT_TRUE(r.converged()) << to_string(r.reason);
  EXPECT_NEAR(r.x(0), 1.0, 1e-6);
  EXPECT_NEAR(r.x(1), 1.0, 1e-6);
  EXPECT_LT(r.gradient_norm, 1e-8);
}

TEST(Bfgs, ActiveLowerBound) {
  // min (x+1)² + (y-2)² subject to x >= 0.5: the solution sits on the bound.
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g(0) = 2.0 * (x(0) + 1.0);
    g(1) = 2.0 * (x(1) - 2.0);
    return (x(0) + 1.0) * (x(0) + 1.0) + (x(1) - 2.0) * (x(1) - 2.0);
  };
  Eigen::VectorXd lower(2);
  lower << 0.5, -kInf;
  Eigen::VectorXd x0(2);
  x0 << 3.0, -1.0;
  const auto r = minimize_bfgs(f, x0, lower);
  EXPECT_TRUE(r.converged());
  EXPECT_EQ(r.x(0), 0.5);
  EXPECT_NEAR(r.x(1), 2.0, 1e-9);
}

TEST(Bfgs, InitialPointMustRespectBounds) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 2.0 * x;
    return x.squaredNorm();
  };
  EXPECT_THROW(minimize_bfgs(f, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 0.0)),
               std::invalid_argument);
}

TEST(Bfgs, NonFiniteStartIsAnError) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = x;
    return std::log(x(0));
  };
  EXPECT_THROW(minimize_bfgs(f, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, -kInf)),
               std::invalid_argument);
}

TEST(Bfgs, IterationCapIsNotConvergence) {
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  OptimizerOptions o;
  o.max_iterations = 3;
  const auto r = minimize_bfgs(rosenbrock, x0, Eigen::VectorXd::Constant(2, -kInf), o);
  EXPECT_EQ(r.reason, StopReason::max_iterations);
  EXPECT_FALSE(r.converged());
  EXPECT_EQ(r.iterations, 3);
}

TEST(Bfgs, AcceptedStepsNeverIncreaseTheObjective) {
  // The run is deterministic, so capping the iterations exposes the value
  // after each accepted step.
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  double previous = kInf;
  for (int cap = 0; cap <= 60; ++cap) {
    OptimizerOptions o;
    o.max_iterations = cap;
    const double v = minimize_bfgs(rosenbrock, x0, Eigen::VectorXd::Constant(2, -kInf), o).value;
    ASSERT_LE(v, previous) << "cap " << cap;
    previous = v;
  }
}

TEST(Bfgs, EmptyProblemConvergesImmediately) {
  auto f = [](const Eigen::VectorXd&, Eigen::VectorXd&) { return 1.5; };
  const auto r = minimize_bfgs(f, Eigen::VectorXd(0), Eigen::VectorXd(0));
  EXPECT_TRUE(r.converged());
  EXPECT_EQ(r.value, 1.5);
}
