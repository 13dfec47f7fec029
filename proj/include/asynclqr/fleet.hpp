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

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>  // nlohmann/json, vendored

#include "asynclqr/errors.hpp"
#include "asynclqr/lqr.hpp"
#include "asynclqr/rng.hpp"

namespace asynclqr {

/// Scale parameters of the half-normal perturbation magnitudes.
struct HeterogeneityRadii {
  double eps_A = 0.0;
  double eps_B = 0.0;
  double eps_Q = 0.0;
  double eps_R = 0.0;

  HeterogeneityRadii scaled(double s) const {
    return {eps_A * s, eps_B * s, eps_Q * s, eps_R * s};
  }
  bool all_zero() const {
    return eps_A == 0.0 && eps_B == 0.0 && eps_Q == 0.0 && eps_R == 0.0;
  }
  void validate() const {
    if (!(eps_A >= 0.0 && eps_B >= 0.0 && eps_Q >= 0.0 && eps_R >= 0.0)) {
      throw ConfigError("heterogeneity radii must be nonnegative");
    }
  }
};

/// Radii used for the straggler and staleness experiments.
inline HeterogeneityRadii paper_fig2_radii() {
  return {5.46e-2, 2.74e-2, 3.96e-2, 2.82e-2};
}

/// Smaller radii used for the batch-size experiment.
inline HeterogeneityRadii paper_fig3b_radii() {
  return {5.25e-3, 2.80e-3, 4.00e-3, 2.82e-3};
}

/// Scalars applied to the modification masks for one plant.
struct Perturbation {
  double a = 0.0;
  double b = 0.0;
  double q = 0.0;
  double r = 0.0;
  int attempts = 1;
};

struct FleetMasks {
  Mat A;
  Mat B;
  Mat Q;
  Mat R;
};

/// A~ = diag(1..n_x), B~ = ones(n_x, n_u), Q~ = 2I, R~ = 2I.
inline FleetMasks fleet_masks(Eigen::Index n_x, Eigen::Index n_u) {
  FleetMasks m;
  m.A = Mat::Zero(n_x, n_x);
  for (Eigen::Index i = 0; i < n_x; ++i) m.A(i, i) = static_cast<double>(i + 1);
  m.B = Mat::Ones(n_x, n_u);
  m.Q = 2.0 * Mat::Identity(n_x, n_x);
  m.R = 2.0 * Mat::Identity(n_u, n_u);
  return m;
}

struct Fleet {
  std::vector<PlantModel> models;
  InitialStateSpec init;
  HeterogeneityRadii radii;
  std::uint64_t seed = 0;
  std::vector<Perturbation> perturbations;  // one per model; zero for model 0
  int total_retries = 0;

  std::size_t size() const { return models.size(); }
};

inline constexpr int kFleetMaxRetries = 100;

inline PlantModel perturbed_model(const PlantModel& nominal,
                                  const FleetMasks& masks,
                                  const Perturbation& p, int id) {
  PlantModel m;
  m.A = nominal.A + p.a * masks.A;
  m.B = nominal.B + p.b * masks.B;
  m.Q = nominal.Q + p.q * masks.Q;
  m.R = nominal.R + p.r * masks.R;
  m.id = id;
  return m;
}

/// Builds M plants: model 0 is the nominal one, every other model adds
/// half-normal multiples of the fixed masks. A plant that the stabilizer does
/// not stabilize, or whose cost matrices lose definiteness, is redrawn from a
/// fresh substream; GenerationFailed after kFleetMaxRetries redraws.
inline Fleet generate_fleet(const PlantModel& nominal,
                            const HeterogeneityRadii& radii, std::size_t M,
                            std::uint64_t seed, const Mat& stabilizer,
                            InitialStateSpec init = {}) {
  if (M < 1) throw ConfigError("fleet size must be at least 1");
  radii.validate();
  nominal.validate();
  if (init.Sigma0.size() == 0) init = InitialStateSpec::identity(nominal.n_x());
  if (!is_contractive(nominal.A - nominal.B * stabilizer)) {
    throw GenerationFailed("initial controller does not stabilize the nominal plant");
  }

  Fleet fleet;
  fleet.init = init;
  fleet.radii = radii;
  fleet.seed = seed;
  fleet.models.push_back(nominal);
  fleet.models.back().id = 0;
  fleet.perturbations.push_back({});

  const FleetMasks masks = fleet_masks(nominal.n_x(), nominal.n_u());
  const StreamKey root = tagged(seed, StreamTag::kFleet);
  const double eps[4] = {radii.eps_A, radii.eps_B, radii.eps_Q, radii.eps_R};

  for (std::size_t i = 1; i < M; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt <= kFleetMaxRetries; ++attempt) {
      double draw[4];
      for (int k = 0; k < 4; ++k) {
        Engine rng = root.child({i, static_cast<std::uint64_t>(attempt),
                                 static_cast<std::uint64_t>(k)})
                         .engine();
        std::normal_distribution<double> normal(0.0, 1.0);
        draw[k] = std::abs(normal(rng)) * eps[k];
      }
      Perturbation p{draw[0], draw[1], draw[2], draw[3], attempt + 1};
      PlantModel candidate =
          perturbed_model(nominal, masks, p, static_cast<int>(i));
      const bool admissible =
          is_positive_semidefinite(candidate.Q) &&
          is_positive_definite(candidate.R) &&
          is_contractive(candidate.A - candidate.B * stabilizer);
      if (admissible) {
        fleet.models.push_back(std::move(candidate));
        fleet.perturbations.push_back(p);
        accepted = true;
        break;
      }
      ++fleet.total_retries;
    }
    if (!accepted) {
      throw GenerationFailed("plant " + std::to_string(i) + " not admissible after " +
                             std::to_string(kFleetMaxRetries) +
                             " redraws; radii too large for a common stabilizer");
    }
  }
  return fleet;
}

inline double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

struct PairGap {
  std::size_t i = 0;
  std::size_t j = 0;
  double dA = 0.0;
  double dB = 0.0;
  double dQ = 0.0;
  double dR = 0.0;
  double grad_dist_sq = 0.0;
};

struct FleetStats {
  double eps_het_hat = 0.0;
  std::vector<PairGap> pairwise_norm_gaps;
  double max_dA = 0.0;
  double max_dB = 0.0;
  double max_dQ = 0.0;
  double max_dR = 0.0;
};

/// Largest pairwise squared distance between exact gradients at the probe,
/// plus spectral-norm distances between every pair of plant matrices.
inline FleetStats measure_heterogeneity(const Fleet& fleet,
                                        const Controller& probe) {
  std::vector<Mat> grads;
  grads.reserve(fleet.size());
  for (const PlantModel& m : fleet.models) {
    grads.push_back(analytic_gradient(m, probe.K, fleet.init));
  }
  FleetStats stats;
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    for (std::size_t j = i + 1; j < fleet.size(); ++j) {
      const PlantModel& a = fleet.models[i];
      const PlantModel& b = fleet.models[j];
      PairGap g{i,
                j,
                spectral_norm(a.A - b.A),
                spectral_norm(a.B - b.B),
                spectral_norm(a.Q - b.Q),
                spectral_norm(a.R - b.R),
                (grads[i] - grads[j]).squaredNorm()};
      stats.eps_het_hat = std::max(stats.eps_het_hat, g.grad_dist_sq);
      stats.max_dA = std::max(stats.max_dA, g.dA);
      stats.max_dB = std::max(stats.max_dB, g.dB);
      stats.max_dQ = std::max(stats.max_dQ, g.dQ);
      stats.max_dR = std::max(stats.max_dR, g.dR);
      stats.pairwise_norm_gaps.push_back(g);
    }
  }
  return stats;
}

// JSON: matrices are nested row-major arrays.

inline nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("matrix JSON must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw DimensionMismatch("ragged matrix JSON");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  return m;
}

inline nlohmann::json model_to_json(const PlantModel& m) {
  return {{"id", m.id},
          {"A", matrix_to_json(m.A)},
          {"B", matrix_to_json(m.B)},
          {"Q", matrix_to_json(m.Q)},
          {"R", matrix_to_json(m.R)}};
}

inline PlantModel model_from_json(const nlohmann::json& j) {
  PlantModel m;
  m.id = j.value("id", 0);
  m.A = matrix_from_json(j.at("A"));
  m.B = matrix_from_json(j.at("B"));
  m.Q = matrix_from_json(j.at("Q"));
  m.R = matrix_from_json(j.at("R"));
  m.validate();
  return m;
}

inline nlohmann::json radii_to_json(const HeterogeneityRadii& r) {
  return {{"eps_A", r.eps_A}, {"eps_B", r.eps_B}, {"eps_Q", r.eps_Q},
          {"eps_R", r.eps_R}};
}

inline HeterogeneityRadii radii_from_json(const nlohmann::json& j) {
  return {j.at("eps_A").get<double>(), j.at("eps_B").get<double>(),
          j.at("eps_Q").get<double>(), j.at("eps_R").get<double>()};
}

inline nlohmann::json fleet_to_json(const Fleet& fleet) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : fleet.models) models.push_back(model_to_json(m));
  nlohmann::json perts = nlohmann::json::array();
  for (const auto& p : fleet.perturbations) {
    perts.push_back(
        {{"a", p.a}, {"b", p.b}, {"q", p.q}, {"r", p.r}, {"attempts", p.attempts}});
  }
  return {{"seed", fleet.seed},
          {"radii", radii_to_json(fleet.radii)},
          {"Sigma0", matrix_to_json(fleet.init.Sigma0)},
          {"mu_lower", fleet.init.mu_lower},
          {"total_retries", fleet.total_retries},
          {"perturbations", std::move(perts)},
          {"models", std::move(models)}};
}

inline Fleet fleet_from_json(const nlohmann::json& j) {
  Fleet f;
  f.seed = j.at("seed").get<std::uint64_t>();
  f.radii = radii_from_json(j.at("radii"));
  f.init.Sigma0 = matrix_from_json(j.at("Sigma0"));
  f.init.mu_lower = j.at("mu_lower").get<double>();
  f.total_retries = j.value("total_retries", 0);
  for (const auto& m : j.at("models")) f.models.push_back(model_from_json(m));
  if (j.contains("perturbations")) {
    for (const auto& p : j.at("perturbations")) {
      f.perturbations.push_back({p.at("a").get<double>(), p.at("b").get<double>(),
                                 p.at("q").get<double>(), p.at("r").get<double>(),
                                 p.value("attempts", 1)});
    }
  }
  if (f.models.empty()) throw Error("fleet JSON has no models");
  for (const auto& m : f.models) {
    if (m.n_x() != f.models[0].n_x() || m.n_u() != f.models[0].n_u()) {
      throw DimensionMismatch("fleet plants must share dimensions");
    }
  }
  return f;
}

}  // namespace asynclqr
