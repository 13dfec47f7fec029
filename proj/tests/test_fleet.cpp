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

#include "asynclqr/fleet.hpp"
#include "asynclqr/nominal.hpp"

namespace asynclqr {
namespace {

HeterogeneityRadii desk_radii() { return paper_fig2_radii().scaled(0.025); }

TEST(Fleet, ZeroRadiiGivesIdenticalPlants) {
  const PlantModel nominal = paper_nominal_model();
  const Fleet f = generate_fleet(nominal, {}, 5, 7, builtin_initial_gain());
  ASSERT_EQ(f.size(), 5u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(f.models[i].id, static_cast<int>(i));
    EXPECT_TRUE((f.models[i].A.array() == nominal.A.array()).all());
    EXPECT_TRUE((f.models[i].B.array() == nominal.B.array()).all());
    EXPECT_TRUE((f.models[i].Q.array() == nominal.Q.array()).all());
    EXPECT_TRUE((f.models[i].R.array() == nominal.R.array()).all());
  }
  EXPECT_EQ(f.total_retries, 0);
  const FleetStats s = measure_heterogeneity(f, {builtin_initial_gain(), 0});
  EXPECT_EQ(s.eps_het_hat, 0.0);
  EXPECT_EQ(s.pairwise_norm_gaps.size(), 10u);
}

TEST(Fleet, Masks) {
  const FleetMasks m = fleet_masks(4, 2);
  Mat A = Mat::Zero(4, 4);
  A.diagonal() << 1, 2, 3, 4;
  EXPECT_TRUE((m.A.array() == A.array()).all());
  EXPECT_TRUE((m.B.array() == 1.0).all());
  EXPECT_TRUE((m.Q.array() == (2.0 * Mat::Identity(4, 4)).array()).all());
  EXPECT_TRUE((m.R.array() == (2.0 * Mat::Identity(2, 2)).array()).all());
}

TEST(Fleet, PerturbationsFollowMasks) {
  const PlantModel nominal = paper_nominal_model();
  const Fleet f = generate_fleet(nominal, desk_radii(), 6, 11, builtin_initial_gain());
  const FleetMasks masks = fleet_masks(4, 2);
  EXPECT_EQ(f.models[0].A, nominal.A);
  for (std::size_t i = 1; i < f.size(); ++i) {
    const Perturbation& p = f.perturbations[i];
    EXPECT_GE(p.a, 0.0);
    EXPECT_GE(p.b, 0.0);
    EXPECT_GE(p.q, 0.0);
    EXPECT_GE(p.r, 0.0);
    EXPECT_EQ(f.models[i].A, nominal.A + p.a * masks.A);
    EXPECT_EQ(f.models[i].B, nominal.B + p.b * masks.B);
    EXPECT_EQ(f.models[i].Q, nominal.Q + p.q * masks.Q);
    EXPECT_EQ(f.models[i].R, nominal.R + p.r * masks.R);
    EXPECT_TRUE(is_contractive(f.models[i].A - f.models[i].B * builtin_initial_gain()));
  }
}

// Frozen regression values for seed 7; any change to the stream layout
// changes these bits.
TEST(Fleet, SeedSevenIsBitExact) {
  const Fleet f =
      generate_fleet(paper_nominal_model(), paper_fig2_radii(), 10, 7, builtin_initial_gain());
  ASSERT_EQ(f.size(), 10u);
  const Perturbation& p1 = f.perturbations[1];
  const Perturbation& p9 = f.perturbations[9];
  EXPECT_EQ(p1.a, 0.18172317305264094);
  EXPECT_EQ(p1.b, 0.023651950416692553);
  EXPECT_EQ(p1.q, 0.018662168931867864);
  EXPECT_EQ(p1.r, 0.010629842189693475);
  EXPECT_EQ(p9.a, 0.029188598331681529);
  EXPECT_EQ(p9.r, 0.015876169728459823);
  EXPECT_EQ(f.total_retries, 0);
  const Fleet again =
      generate_fleet(paper_nominal_model(), paper_fig2_radii(), 10, 7, builtin_initial_gain());
  EXPECT_EQ(fleet_to_json(f).dump(), fleet_to_json(again).dump());
}

TEST(Fleet, DifferentSeedsDiffer) {
  const Fleet a = generate_fleet(paper_nominal_model(), desk_radii(), 4, 7, builtin_initial_gain());
  const Fleet b = generate_fleet(paper_nominal_model(), desk_radii(), 4, 8, builtin_initial_gain());
  EXPECT_NE(a.perturbations[1].a, b.perturbations[1].a);
}

TEST(Fleet, PrefixStable) {
  // Plant i depends only on (seed, i), so a larger fleet extends a smaller one.
  const Fleet small = generate_fleet(paper_nominal_model(), desk_radii(), 3, 7, builtin_initial_gain());
  const Fleet large = generate_fleet(paper_nominal_model(), desk_radii(), 8, 7, builtin_initial_gain());
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(small.models[i].A, large.models[i].A);
}

TEST(Fleet, HeterogeneityGrowsWithRadius) {
  const PlantModel nominal = paper_nominal_model();
  const Controller probe{builtin_initial_gain(), 0};
  double prev = 0.0;
  std::vector<double> het;
  for (double s : {0.0625, 0.125, 0.25}) {
    const Fleet f = generate_fleet(nominal, desk_radii().scaled(s), 10, 7, builtin_initial_gain());
    ASSERT_EQ(f.total_retries, 0);
    const double h = measure_heterogeneity(f, probe).eps_het_hat;
    EXPECT_GT(h, prev);
    prev = h;
    het.push_back(h);
  }
  // Gradient gaps are first order in the radii, so their squares scale
  // quadratically while the radii stay small.
  const double slope = std::log(het[2] / het[0]) / std::log(4.0);
  EXPECT_GE(slope, 1.5);
  EXPECT_LE(slope, 2.5);
}

TEST(Fleet, MatrixGapsScaleLinearly) {
  const Controller probe{builtin_initial_gain(), 0};
  const Fleet f1 = generate_fleet(paper_nominal_model(), desk_radii(), 5, 3, builtin_initial_gain());
  const Fleet f2 =
      generate_fleet(paper_nominal_model(), desk_radii().scaled(2.0), 5, 3, builtin_initial_gain());
  const FleetStats s1 = measure_heterogeneity(f1, probe);
  const FleetStats s2 = measure_heterogeneity(f2, probe);
  EXPECT_NEAR(s2.max_dA, 2.0 * s1.max_dA, 1e-12);
  EXPECT_NEAR(s2.max_dR, 2.0 * s1.max_dR, 1e-12);
}

TEST(Fleet, JsonRoundTrip) {
  const Fleet f = generate_fleet(paper_nominal_model(), desk_radii(), 4, 7, builtin_initial_gain());
  const nlohmann::json j = fleet_to_json(f);
  const Fleet g = fleet_from_json(nlohmann::json::parse(j.dump()));
  ASSERT_EQ(g.size(), f.size());
  EXPECT_EQ(g.seed, f.seed);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(g.models[i].A, f.models[i].A);
    EXPECT_EQ(g.models[i].B, f.models[i].B);
    EXPECT_EQ(g.models[i].Q, f.models[i].Q);
    EXPECT_EQ(g.models[i].R, f.models[i].R);
    EXPECT_EQ(g.perturbations[i].a, f.perturbations[i].a);
  }
  EXPECT_EQ(fleet_to_json(g).dump(), j.dump());
}

TEST(Fleet, RaggedJsonRejected) {
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse("[[1,2],[3]]")), DimensionMismatch);
}

TEST(Fleet, GenerationFailsForHugeRadii) {
  HeterogeneityRadii huge{1e4, 0.0, 0.0, 0.0};
  EXPECT_THROW(generate_fleet(paper_nominal_model(), huge, 3, 7, builtin_initial_gain()),
               GenerationFailed);
}

TEST(Fleet, RejectsUnstabilizingController) {
  EXPECT_THROW(
      generate_fleet(paper_nominal_model(), {}, 3, 7, paper_printed_initial_gain()),
      GenerationFailed);
}

TEST(Fleet, RejectsBadConfig) {
  EXPECT_THROW(generate_fleet(paper_nominal_model(), {}, 0, 7, builtin_initial_gain()),
               ConfigError);
  EXPECT_THROW(generate_fleet(paper_nominal_model(), {-1.0, 0, 0, 0}, 3, 7,
                              builtin_initial_gain()),
               ConfigError);
}

}  // namespace
}  // namespace asynclqr
