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

#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asynclqr/errors.hpp"
#include "asynclqr/matops.hpp"
#include "asynclqr/rng.hpp"

namespace asynclqr {

/// One linear time-invariant plant x+ = Ax + Bu with stage cost x'Qx + u'Ru.
struct PlantModel {
  Mat A;
  Mat B;
  Mat Q;
  Mat R;
  int id = 0;

  Eigen::Index n_x() const { return A.rows(); }
  Eigen::Index n_u() const { return B.cols(); }

  void validate() const {
    const auto n = A.rows();
    const auto m = B.cols();
    if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
        R.rows() != m || R.cols() != m) {
      throw DimensionMismatch("plant " + std::to_string(id) + ": A " +
                              shape_of(A) + ", B " + shape_of(B) + ", Q " +
                              shape_of(Q) + ", R " + shape_of(R));
    }
    if (!is_positive_semidefinite(Q)) {
      throw Error("plant " + std::to_string(id) + ": Q is not PSD");
    }
    if (!is_positive_definite(R)) {
      throw Error("plant " + std::to_string(id) + ": R is not PD");
    }
  }
};

/// Zero-mean initial state with covariance Sigma0 >= mu_lower * I.
struct InitialStateSpec {
  Mat Sigma0;
  double mu_lower = 1.0;

  static InitialStateSpec identity(Eigen::Index n) {
    return {Mat::Identity(n, n), 1.0};
  }
};

/// A feedback gain u = -Kx, stamped with the server iteration that issued it.
struct Controller {
  Mat K;
  std::int64_t stamp = 0;
};

struct CostAndGradient {
  double cost = 0.0;
  Mat gradient;
};

namespace detail {

inline void check_gain_shape(const PlantModel& model, const Mat& K) {
  if (K.rows() != model.n_u() || K.cols() != model.n_x()) {
    throw DimensionMismatch("gain is " + shape_of(K) + ", plant expects " +
                            std::to_string(model.n_u()) + "x" +
                            std::to_string(model.n_x()));
  }
}

inline Mat stage_weight(const PlantModel& model, const Mat& K) {
  return symmetrized(model.Q + K.transpose() * model.R * K);
}

inline Unstable unstable_error(const PlantModel& model) {
  return Unstable("A - BK is not contractive for plant " +
                  std::to_string(model.id));
}

/// Factored closed-loop Stein operator together with the cost-to-go P_K.
/// Throws Unstable unless A - BK is contractive. When the stage weight W is
/// positive definite, P_K >= W > 0 already certifies contractivity; otherwise
/// the certificate is the solution of X = F'XF + I.
struct ClosedLoop {
  SteinOperator op;
  Mat P;
};

inline ClosedLoop closed_loop(const PlantModel& model, const Mat& K) {
  check_gain_shape(model, K);
  SteinOperator op(model.A - model.B * K);
  if (!op.ok()) throw unstable_error(model);
  const Mat W = stage_weight(model, K);
  try {
    Mat P = op.solve(W).X;
    bool stable = false;
    if (is_positive_definite(W)) {
      stable = is_positive_definite(P);
    } else {
      stable = is_positive_definite(
          op.solve(Mat::Identity(model.n_x(), model.n_x())).X);
    }
    if (!stable) throw unstable_error(model);
    return {std::move(op), std::move(P)};
  } catch (const NotContractive&) {
    throw unstable_error(model);
  }
}

}  // namespace detail

/// Cost-to-go matrix P_K solving P = (A-BK)'P(A-BK) + Q + K'RK.
inline Mat cost_to_go(const PlantModel& model, const Mat& K) {
  return detail::closed_loop(model, K).P;
}

/// Infinite-horizon cost trace(P_K Sigma0).
inline double lqr_cost(const PlantModel& model, const Mat& K,
                       const InitialStateSpec& init) {
  return (detail::closed_loop(model, K).P * init.Sigma0).trace();
}

/// Cost together with its exact gradient
///   2 ((R + B'P_K B) K - B'P_K A) Sigma_K,
/// where Sigma_K = (A-BK) Sigma_K (A-BK)' + Sigma0. Both Lyapunov equations
/// share one factorization.
inline CostAndGradient cost_and_gradient(const PlantModel& model, const Mat& K,
                                         const InitialStateSpec& init) {
  const detail::ClosedLoop cl = detail::closed_loop(model, K);
  const Mat& P = cl.P;
  const Mat Sigma = cl.op.solve_transposed(symmetrized(init.Sigma0)).X;
  const Mat E = (model.R + model.B.transpose() * P * model.B) * K -
                model.B.transpose() * P * model.A;
  return {(P * init.Sigma0).trace(), 2.0 * E * Sigma};
}

inline Mat analytic_gradient(const PlantModel& model, const Mat& K,
                             const InitialStateSpec& init) {
  return cost_and_gradient(model, K, init).gradient;
}

/// State covariance sum_t E[x_t x_t'] under gain K.
inline Mat state_covariance(const PlantModel& model, const Mat& K,
                            const InitialStateSpec& init) {
  return detail::closed_loop(model, K).op.solve_transposed(
      symmetrized(init.Sigma0)).X;
}

struct OptimalSolution {
  Mat P;
  Mat K;
  double cost = 0.0;
};

inline OptimalSolution optimal_controller(const PlantModel& model,
                                          const InitialStateSpec& init) {
  DareSolution dare = solve_dare(model.A, model.B, model.Q, model.R);
  const double cost = (dare.P * init.Sigma0).trace();
  return {std::move(dare.P), std::move(dare.K), cost};
}

/// Run-level constants used by stability bookkeeping and diagnostics.
struct TheoryConstants {
  double lambda_gd = 0.0;
  double c_zo = 0.0;
  double h_grad_est = 0.0;
  double gamma = 1.0;
  std::vector<double> delta0;         // initial gap per system id
  std::vector<double> optimal_costs;  // J(K*) per system id
};

/// Variance constant of the two-point estimator's second-moment bound.
inline double zo_second_moment_constant(Eigen::Index n_x) {
  return 8.0 * static_cast<double>(n_x * n_x);
}

/// Membership in the stabilizing sublevel set: A - BK contractive and
/// J(K) - J(K*) <= gamma * Delta_0 for this plant.
inline bool check_sublevel(const PlantModel& model, const Mat& K,
                           const TheoryConstants& consts,
                           const InitialStateSpec& init) {
  const auto idx = static_cast<std::size_t>(model.id);
  if (idx >= consts.delta0.size() || idx >= consts.optimal_costs.size()) {
    throw Error("check_sublevel: no initial gap recorded for plant " +
                std::to_string(model.id));
  }
  try {
    const double gap = lqr_cost(model, K, init) - consts.optimal_costs[idx];
    return gap <= consts.gamma * consts.delta0[idx];
  } catch (const Unstable&) {
    return false;
  }
}

inline double min_eigenvalue(const Mat& symmetric) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(symmetric),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Mat& symmetric) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(symmetric),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// Gradient-dominance constant
///   lambda = 4 mu^2 max_i sigma_min(R_i) / ||Sigma_{K*_i}||
/// with Sigma_{K*_i} the state covariance under each plant's optimal gain.
inline double gradient_dominance_lambda(std::span<const PlantModel> models,
                                        const InitialStateSpec& init) {
  if (models.empty()) throw Error("gradient_dominance_lambda: no plants");
  double best = 0.0;
  for (const PlantModel& model : models) {
    const OptimalSolution opt = optimal_controller(model, init);
    const Mat Sigma = state_covariance(model, opt.K, init);
    best = std::max(best, min_eigenvalue(model.R) / max_eigenvalue(Sigma));
  }
  return 4.0 * init.mu_lower * init.mu_lower * best;
}

inline double gradient_dominance_lambda(const PlantModel& model,
                                        const InitialStateSpec& init) {
  return gradient_dominance_lambda(std::span<const PlantModel>(&model, 1),
                                   init);
}

/// Uniform sample from the Frobenius ball of the given radius around center.
inline Mat sample_in_ball(const Mat& center, double radius, Engine& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat dir(center.rows(), center.cols());
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = normal(rng);
  const double d = static_cast<double>(center.size());
  const double rho = radius * std::pow(unif(rng), 1.0 / d);
  return center + (rho / dir.norm()) * dir;
}

struct LipschitzEstimate {
  double h_grad = 0.0;
  int pairs_used = 0;
  int pairs_skipped = 0;
};

/// Empirical local Lipschitz constant of the gradient: the largest ratio
/// ||grad(K1) - grad(K2)|| / ||K1 - K2|| over seeded pairs drawn uniformly
/// in a Frobenius ball around center. Pairs touching an unstable gain are
/// skipped.
inline LipschitzEstimate estimate_gradient_lipschitz(
    const PlantModel& model, const Mat& center, const InitialStateSpec& init,
    std::uint64_t seed, double radius = 0.1, int pairs = 200) {
  Engine rng = tagged(seed, StreamTag::kLipschitz).engine();
  LipschitzEstimate out;
  for (int p = 0; p < pairs; ++p) {
    const Mat K1 = sample_in_ball(center, radius, rng);
    const Mat K2 = sample_in_ball(center, radius, rng);
    try {
      const Mat g1 = analytic_gradient(model, K1, init);
      const Mat g2 = analytic_gradient(model, K2, init);
      const double dk = (K1 - K2).norm();
      if (dk > 0.0) out.h_grad = std::max(out.h_grad, (g1 - g2).norm() / dk);
      ++out.pairs_used;
    } catch (const Unstable&) {
      ++out.pairs_skipped;
    }
  }
  return out;
}

}  // namespace asynclqr
