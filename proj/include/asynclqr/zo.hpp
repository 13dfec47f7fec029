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

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asynclqr/errors.hpp"
#include "asynclqr/lqr.hpp"
#include "asynclqr/rng.hpp"

namespace asynclqr {

struct ZoConfig {
  double radius = 1e-3;  // Frobenius norm of every perturbation
  int samples = 20;
  bool redraw = false;   // redraw destabilizing perturbations instead of failing
  int max_redraws = 10;  // per sample, when redraw is on

  void validate() const {
    if (!(radius > 0.0)) throw ConfigError("zo radius must be positive");
    if (samples < 1) throw ConfigError("zo samples must be at least 1");
    if (max_redraws < 0) throw ConfigError("zo max_redraws must be nonnegative");
  }
};

struct ZoEstimate {
  Mat grad_hat;
  int samples_used = 0;
  int rejected = 0;
};

/// K + U or K - U left the stabilizing set: the smoothing radius is too large
/// for the current iterate.
class PerturbationUnstable : public Error {
 public:
  PerturbationUnstable(const std::string& what, Mat perturbation, int sample)
      : Error(what), perturbation_(std::move(perturbation)), sample_(sample) {}

  const Mat& perturbation() const { return perturbation_; }
  int sample() const { return sample_; }

 private:
  Mat perturbation_;
  int sample_;
};

/// Gaussian matrix rescaled to Frobenius norm r: uniform on the sphere.
inline Mat draw_sphere_perturbation(Eigen::Index n_u, Eigen::Index n_x,
                                    double r, Engine& stream) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat U(n_u, n_x);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < U.size(); ++i) U.data()[i] = normal(stream);
    norm = U.norm();
  } while (norm == 0.0);
  return (r / norm) * U;
}

namespace detail {

inline double zo_scale(const PlantModel& model, double r, int m) {
  return static_cast<double>(model.n_x() * model.n_u()) /
         (2.0 * r * r * static_cast<double>(m));
}

}  // namespace detail

/// Two-point estimate (n_x n_u / (2 r^2 m)) sum_l (J(K+U_l) - J(K-U_l)) U_l
/// for caller-supplied perturbations, all of norm r. Throws
/// PerturbationUnstable on the first sample that leaves the stable set.
inline ZoEstimate zo_estimate_with(const PlantModel& model, const Mat& K,
                                   std::span<const Mat> perturbations,
                                   double r, const InitialStateSpec& init) {
  if (perturbations.empty()) throw ConfigError("zo: no perturbations");
  Mat sum = Mat::Zero(K.rows(), K.cols());
  int l = 0;
  for (const Mat& U : perturbations) {
    try {
      const double jp = lqr_cost(model, K + U, init);
      const double jm = lqr_cost(model, K - U, init);
      sum += (jp - jm) * U;
    } catch (const Unstable&) {
      throw PerturbationUnstable(
          "zo sample " + std::to_string(l) + " destabilizes plant " +
              std::to_string(model.id),
          U, l);
    }
    ++l;
  }
  const int m = static_cast<int>(perturbations.size());
  return {detail::zo_scale(model, r, m) * sum, m, 0};
}

/// Algorithm-level estimator. The m base perturbations are drawn up front
/// from the engine of key; a redraw of sample l uses substream key/l/attempt.
/// The estimate is therefore a pure function of (model, K, cfg, key) and does
/// not depend on the order in which samples are evaluated.
inline ZoEstimate zo_estimate(const PlantModel& model, const Mat& K,
                              const ZoConfig& cfg, const InitialStateSpec& init,
                              const StreamKey& key) {
  cfg.validate();
  detail::check_gain_shape(model, K);
  std::vector<Mat> base;
  base.reserve(static_cast<std::size_t>(cfg.samples));
  {
    Engine rng = key.engine();
    for (int l = 0; l < cfg.samples; ++l) {
      base.push_back(
          draw_sphere_perturbation(model.n_u(), model.n_x(), cfg.radius, rng));
    }
  }
  Mat sum = Mat::Zero(K.rows(), K.cols());
  int rejected = 0;
  for (int l = 0; l < cfg.samples; ++l) {
    Mat U = base[static_cast<std::size_t>(l)];
    for (int attempt = 0;; ++attempt) {
      if (attempt > 0) {
        Engine rng = key.child({static_cast<std::uint64_t>(l),
                                static_cast<std::uint64_t>(attempt)})
                         .engine();
        U = draw_sphere_perturbation(model.n_u(), model.n_x(), cfg.radius, rng);
      }
      try {
        const double jp = lqr_cost(model, K + U, init);
        const double jm = lqr_cost(model, K - U, init);
        sum += (jp - jm) * U;
        break;
      } catch (const Unstable&) {
        if (!cfg.redraw || attempt >= cfg.max_redraws) {
          throw PerturbationUnstable(
              "zo sample " + std::to_string(l) + " destabilizes plant " +
                  std::to_string(model.id) + " (radius " +
                  std::to_string(cfg.radius) + ")",
              std::move(U), l);
        }
        ++rejected;
      }
    }
  }
  return {detail::zo_scale(model, cfg.radius, cfg.samples) * sum, cfg.samples,
          rejected};
}

}  // namespace asynclqr
