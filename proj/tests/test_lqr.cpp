// Copyright 2026 The asynclqr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "asynclqr/lqr.hpp"
#include "asynclqr/nominal.hpp"

namespace asynclqr {
namespace {

PlantModel scalar(double a, double b, double q, double r) {
  PlantModel m;
  m.A = Mat::Constant(1, 1, a);
  m.B = Mat::Constant(1, 1, b);
  m.Q = Mat::Constant(1, 1, q);
  m.R = Mat::Constant(1, 1, r);
  return m;
}

// trace(sum_t x_t' (Q + K'RK) x_t) over E[x0 x0'] = Sigma0 by propagating
// the state covariance forward.
double rollout_cost(const PlantModel& m, const Mat& K, const Mat& Sigma0, int T) {
  const Mat F = m.A - m.B * K;
  const Mat W = m.Q + K.transpose() * m.R * K;
  Mat S = Sigma0;
  double J = 0.0;
  for (int t = 0; t <= T; ++t) {
    J += (W * S).trace();
    S = F * S * F.transpose();
  }
  return J;
}

Mat central_difference(const PlantModel& m, const Mat& K, const InitialStateSpec& init,
                       double h) {
  Mat g(K.rows(), K.cols());
  for (Eigen::Index k = 0; k < K.size(); ++k) {
    Mat Kp = K, Km = K;
    Kp.data()[k] += h;
    Km.data()[k] -= h;
    g.data()[k] = (lqr_cost(m, Kp, init) - lqr_cost(m, Km, init)) / (2.0 * h);
  }
  return g;
}

TEST(LqrCost, ZeroSystemCostsTraceQ) {
  PlantModel m;
  m.A = Mat::Zero(4, 4);
  m.B = Mat::Zero(4, 2);
  m.Q = Mat::Identity(4, 4);
  m.R = Mat::Identity(2, 2);
  EXPECT_DOUBLE_EQ(lqr_cost(m, Mat::Zero(2, 4), InitialStateSpec::identity(4)), 4.0);
}

TEST(LqrCost, ScalarDeadbeat) {
  const PlantModel m = scalar(0.5, 1.0, 1.0, 1.0);
  const InitialStateSpec init = InitialStateSpec::identity(1);
  const Mat K = Mat::Constant(1, 1, 0.5);
  EXPECT_NEAR(lqr_cost(m, K, init), 1.25, 1e-14);
  EXPECT_NEAR(analytic_gradient(m, K, init)(0, 0), 1.0, 1e-14);
}

TEST(LqrCost, NominalMatchesTruncatedRollout) {
  const PlantModel m = paper_nominal_model();
  const Mat K = builtin_initial_gain();
  const double J = lqr_cost(m, K, InitialStateSpec::identity(4));
  const double oracle = rollout_cost(m, K, Mat::Identity(4, 4), 1000);
  EXPECT_LE(std::abs(J - oracle) / oracle, 1e-8);
}

TEST(LqrCost, UnstableGainThrows) {
  const PlantModel m = paper_nominal_model();
  EXPECT_THROW(lqr_cost(m, paper_printed_initial_gain(), InitialStateSpec::identity(4)),
               Unstable);
  EXPECT_THROW(analytic_gradient(m, paper_printed_initial_gain(),
                                 InitialStateSpec::identity(4)),
               Unstable);
}

TEST(LqrCost, ShapeMismatchThrows) {
  const PlantModel m = paper_nominal_model();
  EXPECT_THROW(lqr_cost(m, Mat::Zero(4, 2), InitialStateSpec::identity(4)),
               DimensionMismatch);
}

TEST(AnalyticGradient, VanishesAtOptimum) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  const OptimalSolution opt = optimal_controller(m, init);
  EXPECT_LE(analytic_gradient(m, opt.K, init).norm(), 1e-8);
  EXPECT_NEAR(opt.cost, lqr_cost(m, opt.K, init), 1e-9 * opt.cost);
}

TEST(AnalyticGradient, MatchesFiniteDifferencesNearInitialGain) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  Engine rng = tagged(21, StreamTag::kTest).engine();
  int checked = 0;
  while (checked < 50) {
    const Mat K = sample_in_ball(builtin_initial_gain(), 0.1, rng);
    if (!is_contractive(m.A - m.B * K)) continue;
    const Mat g = analytic_gradient(m, K, init);
    const Mat fd = central_difference(m, K, init, 1e-6);
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      const double denom = std::max(std::abs(g.data()[k]), 1e-3 * g.norm());
      EXPECT_LE(std::abs(g.data()[k] - fd.data()[k]) / denom, 1e-5);
    }
    ++checked;
  }
}

TEST(AnalyticGradient, CostAndGradientShareOneFactorization) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  const Mat K = builtin_initial_gain();
  const CostAndGradient cg = cost_and_gradient(m, K, init);
  EXPECT_EQ(cg.cost, lqr_cost(m, K, init));
  EXPECT_TRUE((cg.gradient.array() == analytic_gradient(m, K, init).array()).all());
}

TEST(CheckSublevel, Membership) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  const OptimalSolution opt = optimal_controller(m, init);
  TheoryConstants tc;
  tc.optimal_costs = {opt.cost};
  tc.delta0 = {lqr_cost(m, builtin_initial_gain(), init) - opt.cost};
  tc.gamma = 1.0;
  EXPECT_TRUE(check_sublevel(m, builtin_initial_gain(), tc, init));
  EXPECT_TRUE(check_sublevel(m, opt.K, tc, init));
  EXPECT_FALSE(check_sublevel(m, paper_printed_initial_gain(), tc, init));
  PlantModel other = m;
  other.id = 3;
  EXPECT_THROW(check_sublevel(other, opt.K, tc, init), Error);
}

TEST(GradientDominance, ScalarLambdaIsFour) {
  const PlantModel m = scalar(0.0, 1.0, 1.0, 1.0);
  EXPECT_NEAR(gradient_dominance_lambda(m, InitialStateSpec::identity(1)), 4.0, 1e-12);
}

TEST(GradientDominance, IdenticalFleetEqualsSingleSystem) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  const std::vector<PlantModel> fleet(3, m);
  EXPECT_DOUBLE_EQ(gradient_dominance_lambda(fleet, init),
                   gradient_dominance_lambda(m, init));
}

TEST(GradientDominance, NominalGoldenValue) {
  const double lambda =
      gradient_dominance_lambda(paper_nominal_model(), InitialStateSpec::identity(4));
  EXPECT_NEAR(lambda, 0.0147560739752, 1e-11);
}

TEST(GradientDominance, InequalityHoldsOnSublevelSet) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  const OptimalSolution opt = optimal_controller(m, init);
  const double lambda = gradient_dominance_lambda(m, init);
  TheoryConstants tc;
  tc.optimal_costs = {opt.cost};
  tc.delta0 = {lqr_cost(m, builtin_initial_gain(), init) - opt.cost};
  Engine rng = tagged(22, StreamTag::kTest).engine();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int checked = 0;
  while (checked < 100) {
    const Mat center = opt.K + unif(rng) * (builtin_initial_gain() - opt.K);
    const Mat K = sample_in_ball(center, 0.2, rng);
    if (!check_sublevel(m, K, tc, init)) continue;
    const CostAndGradient cg = cost_and_gradient(m, K, init);
    EXPECT_GE(cg.gradient.squaredNorm(), lambda * (cg.cost - opt.cost) * (1.0 - 1e-9));
    ++checked;
  }
}

// Plain gradient descent with step halving on any cost increase.
TEST(PolicyGradient, BacktrackingDescentReachesOptimum) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  const OptimalSolution opt = optimal_controller(m, init);
  Mat K = builtin_initial_gain();
  double eta = 1e-4;
  CostAndGradient cur = cost_and_gradient(m, K, init);
  int it = 0;
  for (; it < 400000 && (K - opt.K).norm() > 1e-6; ++it) {
    const Mat next = K - eta * cur.gradient;
    bool accept = is_contractive(m.A - m.B * next);
    CostAndGradient cand;
    if (accept) {
      cand = cost_and_gradient(m, next, init);
      accept = cand.cost <= cur.cost + 1e-13 * cur.cost;
    }
    if (!accept) {
      eta /= 2.0;
      continue;
    }
    K = next;
    cur = std::move(cand);
  }
  EXPECT_LE((K - opt.K).norm(), 1e-6) << "after " << it << " steps, eta " << eta;
}

TEST(ZoConstants, SecondMomentConstant) {
  EXPECT_EQ(zo_second_moment_constant(4), 128.0);
}

TEST(Lipschitz, FiniteAndReproducible) {
  const PlantModel m = paper_nominal_model();
  const InitialStateSpec init = InitialStateSpec::identity(4);
  const LipschitzEstimate a =
      estimate_gradient_lipschitz(m, builtin_initial_gain(), init, 5);
  const LipschitzEstimate b =
      estimate_gradient_lipschitz(m, builtin_initial_gain(), init, 5);
  EXPECT_TRUE(std::isfinite(a.h_grad));
  EXPECT_GT(a.h_grad, 0.0);
  EXPECT_EQ(a.h_grad, b.h_grad);
  EXPECT_EQ(a.pairs_used + a.pairs_skipped, 200);
}

TEST(PlantModel, ValidateRejectsBadCostMatrices) {
  PlantModel m = paper_nominal_model();
  m.R = -Mat::Identity(2, 2);
  EXPECT_THROW(m.validate(), Error);
  m = paper_nominal_model();
  m.B = Mat::Zero(3, 2);
  EXPECT_THROW(m.validate(), Error);
}

}  // namespace
}  // namespace asynclqr
