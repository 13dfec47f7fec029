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

#include "asynclqr/engine.hpp"
#include "asynclqr/nominal.hpp"

namespace asynclqr {
namespace {

HeterogeneityRadii desk_radii() { return paper_fig2_radii().scaled(0.025); }

Fleet make_fleet(std::size_t M, const HeterogeneityRadii& radii = desk_radii(),
                 std::uint64_t seed = 7) {
  return generate_fleet(paper_nominal_model(), radii, M, seed, builtin_initial_gain());
}

Controller initial() { return {builtin_initial_gain(), 0}; }

EngineConfig exact_config(std::size_t M, std::size_t bs, std::int64_t N) {
  EngineConfig cfg;
  cfg.eta = 1e-5;
  cfg.batch_size = bs;
  cfg.iterations = N;
  cfg.mode = GradientMode::kExact;
  cfg.delays = DelayModel::uniform(M);
  cfg.seed = 7;
  return cfg;
}

// Three agents with compute times 1, 1, 5 and batches of two. Agents 0 and 1
// drive five fresh updates; agent 2 returns at t = 5 with a gradient taken at
// K_0 and joins agent 0's next report in the sixth update.
TEST(AsyncEngine, HandComputedSchedule) {
  const Fleet fleet = make_fleet(3);
  EngineConfig cfg = exact_config(3, 2, 6);
  cfg.delays.per_agent_scale = {1.0, 1.0, 5.0};
  const RunResult r = run_async(fleet, initial(), cfg);

  ASSERT_EQ(r.trace.size(), 7u);
  for (int n = 1; n <= 5; ++n) {
    EXPECT_EQ(r.trace[n].n, n);
    EXPECT_EQ(r.trace[n].clock, static_cast<double>(n));
    EXPECT_EQ(r.trace[n].staleness, (std::vector<std::int64_t>{0, 0}));
  }
  EXPECT_EQ(r.trace[6].clock, 6.0);
  EXPECT_EQ(r.trace[6].staleness, (std::vector<std::int64_t>{5, 0}));

  const StalenessSummary s = staleness_stats(r.trace);
  EXPECT_EQ(s.max, 5);
  EXPECT_EQ(s.total, 12u);
  EXPECT_EQ(s.histogram.at(0), 11u);
  EXPECT_EQ(s.histogram.at(5), 1u);

  // Replay the iterates from exact gradients.
  auto g = [&](std::size_t i, const Mat& K) {
    return analytic_gradient(fleet.models[i], K, fleet.init);
  };
  auto step = [&](const Mat& K, const Mat& a, const Mat& b) {
    Mat acc = Mat::Zero(K.rows(), K.cols());
    acc += a;
    acc += b;
    return Mat(K - (cfg.eta / 2.0) * acc);
  };
  std::vector<Mat> K{builtin_initial_gain()};
  for (int n = 0; n < 5; ++n) K.push_back(step(K[n], g(0, K[n]), g(1, K[n])));
  K.push_back(step(K[5], g(2, K[0]), g(0, K[5])));
  ASSERT_EQ(r.iterates.size(), 7u);
  for (int n = 0; n <= 6; ++n) EXPECT_EQ(r.iterates[n], K[n]) << "iterate " << n;

  EXPECT_TRUE(r.audit.conserved());
  EXPECT_EQ(r.audit.aggregated, 12u);
  EXPECT_EQ(r.audit.duplicates, 0u);
}

TEST(AsyncEngine, FullBatchEqualDelaysMatchesSync) {
  const std::size_t M = 4;
  const Fleet fleet = make_fleet(M);
  EngineConfig cfg = exact_config(M, M, 50);
  const RunResult a = run_async(fleet, initial(), cfg);
  const RunResult s = run_sync(fleet, initial(), cfg);
  ASSERT_EQ(a.iterates.size(), s.iterates.size());
  for (std::size_t n = 0; n < a.iterates.size(); ++n) {
    EXPECT_EQ(a.iterates[n], s.iterates[n]) << "iterate " << n;
    EXPECT_EQ(a.trace[n].clock, s.trace[n].clock);
  }
  EXPECT_EQ(staleness_stats(a.trace).max, 0);
}

TEST(AsyncEngine, Deterministic) {
  const std::size_t M = 5;
  const Fleet fleet = make_fleet(M);
  EngineConfig cfg;
  cfg.eta = 1e-5;
  cfg.batch_size = 2;
  cfg.iterations = 40;
  cfg.delays = DelayModel::uniform(M, 1.0, DelayKind::kExponential);
  cfg.seed = 11;
  const RunResult a = run_async(fleet, initial(), cfg);
  const RunResult b = run_async(fleet, initial(), cfg);
  for (std::size_t n = 0; n < a.iterates.size(); ++n) {
    EXPECT_EQ(a.iterates[n], b.iterates[n]);
    EXPECT_EQ(a.trace[n].clock, b.trace[n].clock);
    EXPECT_EQ(a.trace[n].staleness, b.trace[n].staleness);
  }
  cfg.seed = 12;
  const RunResult c = run_async(fleet, initial(), cfg);
  EXPECT_NE(a.iterates.back(), c.iterates.back());
}

TEST(AsyncEngine, StalenessCapIsEnforced) {
  const std::size_t M = 8;
  const Fleet fleet = make_fleet(M);
  for (std::int64_t cap : {1, 2, 4}) {
    EngineConfig cfg = exact_config(M, 1, 400);
    cfg.delays = DelayModel::uniform(M, 1.0, DelayKind::kExponential);
    cfg.delays.straggler_ids = {7};
    cfg.delays.straggler_factor = 10.0;
    cfg.tau_cap = cap;
    const RunResult r = run_async(fleet, initial(), cfg);
    EXPECT_EQ(r.trace.back().n, 400);
    EXPECT_LE(staleness_stats(r.trace).max, cap);
    EXPECT_TRUE(r.audit.conserved());
    EXPECT_GT(r.audit.deferred_updates, 0u) << "cap " << cap;
  }
}

TEST(AsyncEngine, UncappedStragglerIsStale) {
  const std::size_t M = 4;
  const Fleet fleet = make_fleet(M);
  EngineConfig cfg = exact_config(M, 1, 200);
  cfg.delays.straggler_ids = {3};
  cfg.delays.straggler_factor = 20.0;
  const RunResult r = run_async(fleet, initial(), cfg);
  // Three fast agents deliver one report each per time unit while the
  // straggler computes for 20 units.
  EXPECT_EQ(staleness_stats(r.trace).max, 60);
  EXPECT_TRUE(r.audit.conserved());
}

TEST(AsyncEngine, RecordsHaveMonotoneClockAndIndex) {
  const std::size_t M = 6;
  const Fleet fleet = make_fleet(M);
  EngineConfig cfg;
  cfg.eta = 1e-5;
  cfg.batch_size = 3;
  cfg.iterations = 60;
  cfg.delays = DelayModel::uniform(M, 1.0, DelayKind::kExponential);
  const RunResult r = run_async(fleet, initial(), cfg);
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    EXPECT_EQ(r.trace[k].n, static_cast<std::int64_t>(k));
    EXPECT_EQ(r.trace[k].gaps.size(), M);
    if (k > 0) {
      EXPECT_GE(r.trace[k].clock, r.trace[k - 1].clock);
      EXPECT_EQ(r.trace[k].staleness.size(), 3u);
    }
  }
  EXPECT_TRUE(r.trace[0].staleness.empty());
  EXPECT_EQ(r.trace[0].clock, 0.0);
}

TEST(SyncEngine, StragglerSetsTheClock) {
  const std::size_t M = 4;
  const Fleet fleet = make_fleet(M);
  EngineConfig cfg = exact_config(M, 1, 10);
  cfg.delays.straggler_ids = {3};
  cfg.delays.straggler_factor = 20.0;
  const RunResult r = run_sync(fleet, initial(), cfg);
  for (std::size_t k = 1; k < r.trace.size(); ++k) {
    EXPECT_EQ(r.trace[k].clock - r.trace[k - 1].clock, 20.0);
    EXPECT_EQ(r.trace[k].max_staleness(), 0);
    EXPECT_EQ(r.trace[k].staleness.size(), M);
  }
}

TEST(Engine, IdenticalFleetDescendsMonotonically) {
  const std::size_t M = 3;
  const Fleet fleet = make_fleet(M, {});
  // Fresh gradients and eta below 2/L: plain gradient descent.
  const EngineConfig cfg = exact_config(M, M, 300);
  const RunResult r = run_async(fleet, initial(), cfg);
  EXPECT_EQ(staleness_stats(r.trace).max, 0);
  for (std::size_t k = 1; k < r.trace.size(); ++k) {
    EXPECT_LE(r.trace[k].gaps[0], r.trace[k - 1].gaps[0]) << "record " << k;
    EXPECT_EQ(r.trace[k].gaps[0], r.trace[k].gaps[2]);
  }
  EXPECT_LT(r.trace.back().gaps[0], 0.5 * r.trace.front().gaps[0]);
}

TEST(Engine, HugeStepDiverges) {
  const std::size_t M = 3;
  const Fleet fleet = make_fleet(M);
  EngineConfig cfg = exact_config(M, 1, 100);
  cfg.eta = 1.0;
  try {
    run_async(fleet, initial(), cfg);
    FAIL() << "expected DivergenceDetected";
  } catch (const DivergenceDetected& e) {
    const RunResult& p = e.partial();
    ASSERT_FALSE(p.trace.empty());
    EXPECT_EQ(p.trace.size(), p.iterates.size());
    const TraceRecord& last = p.trace.back();
    bool bad = !last.all_stable;
    for (double g : last.gaps) bad = bad || !(g <= cfg.divergence_threshold);
    EXPECT_TRUE(bad);
  }
  EXPECT_THROW(run_sync(fleet, initial(), cfg), DivergenceDetected);
}

TEST(Engine, RejectsUnstableInitialGain) {
  const Fleet fleet = make_fleet(3);
  const EngineConfig cfg = exact_config(3, 1, 10);
  EXPECT_THROW(run_async(fleet, {paper_printed_initial_gain(), 0}, cfg), Unstable);
  EXPECT_THROW(run_sync(fleet, {paper_printed_initial_gain(), 0}, cfg), Unstable);
}

TEST(Engine, RejectsBadConfig) {
  const Fleet fleet = make_fleet(3);
  EngineConfig cfg = exact_config(3, 4, 10);
  EXPECT_THROW(run_async(fleet, initial(), cfg), ConfigError);
  cfg = exact_config(3, 1, 10);
  cfg.tau_cap = 0;
  EXPECT_THROW(run_async(fleet, initial(), cfg), ConfigError);
  cfg = exact_config(3, 1, 10);
  cfg.delays = DelayModel::uniform(2);
  EXPECT_THROW(run_async(fleet, initial(), cfg), ConfigError);
  cfg = exact_config(3, 1, 10);
  cfg.eta = -1.0;
  EXPECT_THROW(run_sync(fleet, initial(), cfg), ConfigError);
}

TEST(Engine, ZeroIterationsRecordsOnlyTheStart) {
  const Fleet fleet = make_fleet(3);
  const RunResult r = run_async(fleet, initial(), exact_config(3, 1, 0));
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.audit.started, 0u);
}

TEST(FleetEvaluator, GapsAreZeroAtEachOptimum) {
  const Fleet fleet = make_fleet(1, {});
  const FleetEvaluator ev(fleet);
  const OptimalSolution opt = optimal_controller(fleet.models[0], fleet.init);
  const TraceRecord rec = ev.evaluate(0, 0.0, opt.K);
  EXPECT_NEAR(rec.gaps[0], 0.0, 1e-8 * opt.cost);
  EXPECT_LE(rec.avg_grad_norm_sq, 1e-14);
  const TraceRecord bad = ev.evaluate(1, 0.0, paper_printed_initial_gain());
  EXPECT_FALSE(bad.all_stable);
  EXPECT_TRUE(std::isinf(bad.gaps[0]));
}

}  // namespace
}  // namespace asynclqr
