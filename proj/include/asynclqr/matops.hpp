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

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <string>

#include "asynclqr/errors.hpp"

namespace asynclqr {

using Mat = Eigen::MatrixXd;

inline constexpr double kLyapunovTolerance = 1e-10;
inline constexpr double kDareTolerance = 1e-10;
inline constexpr int kDareMaxIter = 10000;
/// Smallest-to-largest LU pivot ratio below which I - F'(.)F is treated as
/// singular.
inline constexpr double kMinPivotRatio = 1e-13;

inline std::string shape_of(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Cholesky succeeds, i.e. m is numerically positive definite.
inline bool is_positive_definite(const Mat& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  Eigen::LLT<Mat> llt(symmetrized(m));
  return llt.info() == Eigen::Success;
}

/// Positive semidefinite up to a small relative shift.
inline bool is_positive_semidefinite(const Mat& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  const double shift = rel_tol * std::max(1.0, m.norm());
  Mat shifted = symmetrized(m);
  shifted.diagonal().array() += shift;
  Eigen::LLT<Mat> llt(shifted);
  return llt.info() == Eigen::Success;
}

struct LyapunovSolution {
  Mat X;
  double residual_norm = 0.0;
};

/// Factorization of the vectorized Stein operator vec(X) -> vec(X - F'XF).
///
/// With column-major vec, vec(F'XF) = (F' (x) F') vec(X), so the operator is
/// I - F'(x)F'. Its transpose I - F(x)F is the operator of X - FXF', which
/// lets one factorization serve both the cost-to-go and the state-covariance
/// equations.
class SteinOperator {
 public:
  explicit SteinOperator(const Mat& F) : n_(F.rows()), F_(F) {
    if (F.rows() != F.cols()) {
      throw DimensionMismatch("Stein operator needs a square matrix, got " +
                              shape_of(F));
    }
    if (!F.allFinite()) {
      ok_ = false;
      return;
    }
    const Eigen::Index nn = n_ * n_;
    Mat L = Mat::Identity(nn, nn);
    // Row (i,p) of F'XF is sum_{j,q} F(j,i) X(j,q) F(q,p).
    for (Eigen::Index p = 0; p < n_; ++p) {
      for (Eigen::Index i = 0; i < n_; ++i) {
        const Eigen::Index row = i + p * n_;
        for (Eigen::Index q = 0; q < n_; ++q) {
          for (Eigen::Index j = 0; j < n_; ++j) {
            L(row, j + q * n_) -= F(j, i) * F(q, p);
          }
        }
      }
    }
    lu_.compute(L);
    const auto pivots = lu_.matrixLU().diagonal().cwiseAbs();
    pivot_ratio_ = pivots.minCoeff() / pivots.maxCoeff();
    ok_ = std::isfinite(pivot_ratio_) && pivot_ratio_ >= kMinPivotRatio;
  }

  bool ok() const { return ok_; }
  double pivot_ratio() const { return pivot_ratio_; }
  Eigen::Index dim() const { return n_; }

  /// Solves X = F'XF + W.
  LyapunovSolution solve(const Mat& W) const { return solve_impl(W, false); }

  /// Solves X = FXF' + W.
  LyapunovSolution solve_transposed(const Mat& W) const {
    return solve_impl(W, true);
  }

 private:
  Mat apply(const Mat& X, bool transposed) const {
    return transposed ? Mat(X - F_ * X * F_.transpose())
                      : Mat(X - F_.transpose() * X * F_);
  }

  Eigen::VectorXd raw_solve(const Eigen::VectorXd& rhs, bool transposed) const {
    return transposed ? Eigen::VectorXd(lu_.transpose().solve(rhs))
                      : Eigen::VectorXd(lu_.solve(rhs));
  }

  LyapunovSolution solve_impl(const Mat& W, bool transposed) const {
    if (W.rows() != n_ || W.cols() != n_) {
      throw DimensionMismatch("Lyapunov right-hand side is " + shape_of(W) +
                              ", operator is " + std::to_string(n_) + "x" +
                              std::to_string(n_));
    }
    if (!ok_) {
      throw NotContractive(
          "Lyapunov operator is singular (spectral radius >= 1), pivot ratio " +
          std::to_string(pivot_ratio_));
    }
    const Eigen::Map<const Eigen::VectorXd> w(W.data(), W.size());
    Eigen::VectorXd x = raw_solve(w, transposed);
    Mat X = Eigen::Map<Mat>(x.data(), n_, n_);
    X = symmetrized(X);
    Mat R = W - apply(X, transposed);
    double res = R.norm();
    const double scale = std::max(1.0, X.norm());
    if (res > 0.1 * kLyapunovTolerance * scale) {
      // One step of iterative refinement.
      const Eigen::Map<const Eigen::VectorXd> r(R.data(), R.size());
      Eigen::VectorXd dx = raw_solve(r, transposed);
      X += Eigen::Map<Mat>(dx.data(), n_, n_);
      X = symmetrized(X);
      R = W - apply(X, transposed);
      res = R.norm();
    }
    if (!X.allFinite() || res > kLyapunovTolerance * scale) {
      throw NotContractive("Lyapunov solve is ill-conditioned, residual " +
                           std::to_string(res));
    }
    return {std::move(X), res};
  }

  Eigen::Index n_;
  Mat F_;
  Eigen::PartialPivLU<Mat> lu_;
  double pivot_ratio_ = 0.0;
  bool ok_ = false;
};

/// Solves X = F'XF + W for symmetric W by a dense solve of the vectorized
/// system. Throws NotContractive when rho(F) >= 1 makes the system singular.
inline LyapunovSolution solve_dlyap(const Mat& F, const Mat& W) {
  if (F.rows() != F.cols() || W.rows() != W.cols() || F.rows() != W.rows()) {
    throw DimensionMismatch("solve_dlyap: F is " + shape_of(F) + ", W is " +
                            shape_of(W));
  }
  if ((W - W.transpose()).norm() > 1e-9 * std::max(1.0, W.norm())) {
    throw Error("solve_dlyap: W must be symmetric");
  }
  return SteinOperator(F).solve(W);
}

/// Spectral radius from Gelfand's formula rho = lim ||F^k||^(1/k), evaluated
/// by repeated normalized squaring (k = 2^squarings). Diagnostics only.
inline double spectral_radius_estimate(const Mat& F, int squarings = 40) {
  if (F.rows() != F.cols()) {
    throw DimensionMismatch("spectral_radius_estimate: F is " + shape_of(F));
  }
  double log_norm = 0.0;  // log ||F^(2^j)|| accumulated with normalization
  Mat H = F;
  double norm = H.norm();
  if (norm == 0.0) return 0.0;
  log_norm = std::log(norm);
  H /= norm;
  double power = 1.0;
  for (int j = 0; j < squarings; ++j) {
    H = H * H;
    norm = H.norm();
    if (norm == 0.0) return 0.0;  // nilpotent
    log_norm = 2.0 * log_norm + std::log(norm);
    H /= norm;
    power *= 2.0;
  }
  return std::exp(log_norm / power);
}

struct Contractivity {
  bool contractive = false;
  double spectral_radius_estimate = 0.0;
};

/// rho(F) < 1 exactly when X = F'XF + I has a positive definite solution.
inline bool is_contractive(const Mat& F) {
  if (F.rows() != F.cols()) {
    throw DimensionMismatch("is_contractive: F is " + shape_of(F));
  }
  try {
    SteinOperator op(F);
    if (!op.ok()) return false;
    return is_positive_definite(op.solve(Mat::Identity(F.rows(), F.cols())).X);
  } catch (const NotContractive&) {
    return false;
  }
}

inline Contractivity contractivity(const Mat& F) {
  return {is_contractive(F), spectral_radius_estimate(F)};
}

struct DareSolution {
  Mat P;
  Mat K;
  int iterations = 0;
};

/// Right-hand side of the Riccati map evaluated at P.
inline Mat riccati_map(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                       const Mat& P) {
  const Mat PA = P * A;
  const Mat G = R + B.transpose() * P * B;
  const Mat BtPA = B.transpose() * PA;
  return Q + A.transpose() * PA - BtPA.transpose() * G.llt().solve(BtPA);
}

inline double dare_residual(const Mat& A, const Mat& B, const Mat& Q,
                            const Mat& R, const Mat& P) {
  return (riccati_map(A, B, Q, R, P) - P).norm();
}

/// Stabilizing solution of the discrete algebraic Riccati equation by
/// fixed-point (value) iteration from P = Q, plus the optimal gain.
inline DareSolution solve_dare(const Mat& A, const Mat& B, const Mat& Q,
                               const Mat& R, int max_iter = kDareMaxIter,
                               double tol = kDareTolerance) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m) {
    throw DimensionMismatch("solve_dare: A " + shape_of(A) + ", B " +
                            shape_of(B) + ", Q " + shape_of(Q) + ", R " +
                            shape_of(R));
  }
  if (!is_positive_definite(R)) {
    throw Error("solve_dare: R must be symmetric positive definite");
  }
  Mat P = symmetrized(Q);
  for (int it = 1; it <= max_iter; ++it) {
    Mat next = symmetrized(riccati_map(A, B, Q, R, P));
    if (!next.allFinite()) break;
    const double step = (next - P).norm();
    P = std::move(next);
    if (step <= tol) {
      const Mat G = R + B.transpose() * P * B;
      Mat K = G.llt().solve(B.transpose() * P * A);
      if (!is_contractive(A - B * K)) break;
      return {std::move(P), std::move(K), it};
    }
  }
  throw NoConvergence("solve_dare: no stabilizing fixed point after " +
                      std::to_string(max_iter) + " iterations");
}

}  // namespace asynclqr
