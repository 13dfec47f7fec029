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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "asynclqr/errors.hpp"
#include "asynclqr/fleet.hpp"
#include "asynclqr/lqr.hpp"
#include "asynclqr/rng.hpp"
#include "asynclqr/zo.hpp"

namespace asynclqr {

enum class DelayKind { kDeterministic, kExponential };

/// Virtual compute time of one gradient estimate per agent. Exponential
/// delays draw from the substream (seed, delay, agent, report index).
struct DelayModel {
  DelayKind kind = DelayKind::kDeterministic;
  std::vector<double> per_agent_scale;
  std::set<std::size_t> straggler_ids;
  double straggler_factor = 1.0;

  static DelayModel uniform(std::size_t agents, double scale = 1.0,
                            DelayKind kind = DelayKind::kDeterministic) {
    DelayModel d;
    d.kind = kind;
    d.per_agent_scale.assign(agents, scale);
    return d;
  }

  void validate(std::size_t agents) const {
    if (per_agent_scale.size() != agents) {
      throw ConfigError("delay model has " + std::to_string(per_agent_scale.size()) +
                        " scales for " + std::to_string(agents) + " agents");
    }
    for (double s : per_agent_scale) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw ConfigError("delay scales must be positive and finite");
      }
    }
    if (!(straggler_factor >= 1.0)) {
      throw ConfigError("straggler factor must be >= 1");
    }
    for (std::size_t id : straggler_ids) {
      if (id >= agents) throw ConfigError("straggler id out of range");
    }
  }

  double base(std::size_t agent) const {
    const double scale = per_agent_scale.at(agent);
    return straggler_ids.contains(agent) ? scale * straggler_factor : scale;
  }

  double duration(std::size_t agent, std::uint64_t report_index,
                  std::uint64_t seed) const {
    const double b = base(agent);
    if (kind == DelayKind::kDeterministic) return b;
    Engine rng = tagged(seed, StreamTag::kDelay).child({agent, report_index}).engine();
    std::exponential_distribution<double> expo(1.0);
    return b * expo(rng);
  }
};

enum class GradientMode { kZo, kExact };

struct EngineConfig {
  double eta = 1e-4;
  std::size_t batch_size = 1;
  std::int64_t iterations = 100;
  ZoConfig zo;
  GradientMode mode = GradientMode::kZo;
  DelayModel delays;
  std::optional<std::int64_t> tau_cap;
  std::uint64_t seed = 0;
  double divergence_threshold = 1e6;

  void validate(std::size_t agents) const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive");
    if (batch_size < 1 || batch_size > agents) {
      throw ConfigError("batch size must lie in [1, M]");
    }
    if (iterations < 0) throw ConfigError("iterations must be nonnegative");
    if (tau_cap && *tau_cap < 1) throw ConfigError("tau_cap must be at least 1");
    if (mode == GradientMode::kZo) zo.validate();
    delays.validate(agents);
  }
};

struct GradientReport {
  std::size_t agent_id = 0;
  Mat grad;
  std::int64_t based_on_stamp = 0;
  double ready_at = 0.0;
  std::uint64_t sequence = 0;
};

struct TraceRecord {
  std::int64_t n = 0;
  double clock = 0.0;
  std::vector<double> gaps;  // J_i(K_n) - J_i(K*_i); +inf when unstable
  double avg_grad_norm_sq = 0.0;
  std::vector<std::int64_t> staleness;  // tau of each report aggregated into K_n
  bool all_stable = true;

  std::int64_t max_staleness() const {
    return staleness.empty() ? 0 : *std::max_element(staleness.begin(), staleness.end());
  }
};

/// Report bookkeeping: every completed computation is aggregated exactly once
/// or still pending when the run stops.
struct RunAudit {
  std::uint64_t started = 0;
  std::uint64_t completed = 0;
  std::uint64_t aggregated = 0;
  std::uint64_t pending_at_end = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t oversized_batches = 0;
  std::uint64_t deferred_updates = 0;

  bool conserved() const {
    return duplicates == 0 && completed == aggregated + pending_at_end;
  }
};

struct RunResult {
  std::vector<TraceRecord> trace;
  std::vector<Mat> iterates;  // K_0 .. K_N
  RunAudit audit;
};

/// Some iterate destabilized a plant or a gap exceeded the divergence
/// threshold. Carries the trace up to and including the offending iterate.
class DivergenceDetected : public Error {
 public:
  DivergenceDetected(const std::string& what, RunResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const RunResult& partial() const { return partial_; }

 private:
  RunResult partial_;
};

/// Exact per-plant optimality gaps and the average-cost gradient of an iterate.
class FleetEvaluator {
 public:
  explicit FleetEvaluator(const Fleet& fleet) : fleet_(&fleet) {
    optimal_costs_.reserve(fleet.size());
    for (const PlantModel& m : fleet.models) {
      optimal_costs_.push_back(optimal_controller(m, fleet.init).cost);
    }
  }

  const std::vector<double>& optimal_costs() const { return optimal_costs_; }

  TraceRecord evaluate(std::int64_t n, double clock, const Mat& K) const {
    TraceRecord rec;
    rec.n = n;
    rec.clock = clock;
    rec.gaps.reserve(fleet_->size());
    Mat grad_sum = Mat::Zero(K.rows(), K.cols());
    for (std::size_t i = 0; i < fleet_->size(); ++i) {
      try {
        const CostAndGradient cg =
            cost_and_gradient(fleet_->models[i], K, fleet_->init);
        rec.gaps.push_back(cg.cost - optimal_costs_[i]);
        grad_sum += cg.gradient;
      } catch (const Unstable&) {
        rec.gaps.push_back(std::numeric_limits<double>::infinity());
        rec.all_stable = false;
      }
    }
    if (rec.all_stable) {
      rec.avg_grad_norm_sq =
          (grad_sum / static_cast<double>(fleet_->size())).squaredNorm();
    } else {
      rec.avg_grad_norm_sq = std::numeric_limits<double>::infinity();
    }
    return rec;
  }

 private:
  const Fleet* fleet_;
  std::vector<double> optimal_costs_;
};

namespace detail {

inline Mat agent_gradient(const Fleet& fleet, const EngineConfig& cfg,
                          std::size_t agent, std::uint64_t report_index,
                          const Mat& K) {
  const PlantModel& model = fleet.models[agent];
  if (cfg.mode == GradientMode::kExact) {
    return analytic_gradient(model, K, fleet.init);
  }
  const StreamKey key = tagged(cfg.seed, StreamTag::kZo).child({agent, report_index});
  return zo_estimate(model, K, cfg.zo, fleet.init, key).grad_hat;
}

inline void check_record(const TraceRecord& rec, const EngineConfig& cfg,
                         RunResult& result) {
  bool diverged = !rec.all_stable;
  for (double g : rec.gaps) diverged = diverged || !(g <= cfg.divergence_threshold);
  if (diverged) {
    throw DivergenceDetected("iterate " + std::to_string(rec.n) +
                                 (rec.all_stable ? " exceeds the divergence threshold"
                                                 : " destabilizes a plant"),
                             std::move(result));
  }
}

inline void check_initial(const Fleet& fleet, const Controller& K0,
                          const EngineConfig& cfg) {
  if (fleet.models.empty()) throw ConfigError("empty fleet");
  cfg.validate(fleet.size());
  for (const PlantModel& m : fleet.models) {
    if (!is_contractive(m.A - m.B * K0.K)) {
      throw Unstable("initial controller does not stabilize plant " +
                     std::to_string(m.id));
    }
  }
}

}  // namespace detail

/// Asynchronous server: agents compute estimates on the controller they last
/// received; the server applies K <- K - (eta/b) sum(batch) whenever b reports
/// are pending, then hands the new controller to the idle agents only. Events
/// are ordered by (ready_at, agent id). With tau_cap set, an update waits
/// while any in-flight computation would end up staler than the cap, and
/// pending reports at the cap are forced into the batch (which then may
/// exceed b, averaged over its actual size).
inline RunResult run_async(const Fleet& fleet, const Controller& K0,
                           const EngineConfig& cfg) {
  detail::check_initial(fleet, K0, cfg);
  const FleetEvaluator evaluator(fleet);
  const std::size_t M = fleet.size();

  struct Event {
    double ready_at;
    std::size_t agent;
    std::uint64_t sequence;
    bool operator>(const Event& o) const {
      if (ready_at != o.ready_at) return ready_at > o.ready_at;
      return agent > o.agent;
    }
  };
  struct AgentState {
    bool busy = false;
    std::int64_t stamp = 0;
    std::uint64_t reports_started = 0;
    GradientReport in_flight;
  };

  RunResult result;
  std::vector<AgentState> agents(M);
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  std::vector<GradientReport> pending;
  std::set<std::uint64_t> aggregated_ids;
  std::uint64_t next_sequence = 0;

  Mat K = K0.K;
  std::int64_t n = 0;
  double clock = 0.0;

  auto start = [&](std::size_t a) {
    AgentState& st = agents[a];
    const std::uint64_t idx = st.reports_started++;
    st.busy = true;
    st.stamp = n;
    st.in_flight = {a, detail::agent_gradient(fleet, cfg, a, idx, K), n,
                    clock + cfg.delays.duration(a, idx, cfg.seed), next_sequence++};
    events.push({st.in_flight.ready_at, a, st.in_flight.sequence});
    ++result.audit.started;
  };

  auto cap_allows_update = [&]() {
    if (!cfg.tau_cap) return true;
    for (const AgentState& st : agents) {
      if (st.busy && (n + 1) - st.stamp > *cfg.tau_cap) return false;
    }
    return true;
  };

  auto select_batch = [&]() {
    std::vector<bool> take(pending.size(), false);
    std::size_t count = 0;
    if (cfg.tau_cap) {
      for (std::size_t k = 0; k < pending.size(); ++k) {
        if (n - pending[k].based_on_stamp >= *cfg.tau_cap) {
          take[k] = true;
          ++count;
        }
      }
    }
    for (std::size_t k = 0; k < pending.size() && count < cfg.batch_size; ++k) {
      if (!take[k]) {
        take[k] = true;
        ++count;
      }
    }
    std::vector<GradientReport> batch;
    std::vector<GradientReport> rest;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      (take[k] ? batch : rest).push_back(std::move(pending[k]));
    }
    pending = std::move(rest);
    return batch;
  };

  result.trace.push_back(evaluator.evaluate(0, clock, K));
  result.iterates.push_back(K);
  detail::check_record(result.trace.back(), cfg, result);
  if (cfg.iterations == 0) return result;

  for (std::size_t a = 0; a < M; ++a) start(a);

  while (n < cfg.iterations) {
    if (events.empty()) {
      throw Error("run_async: scheduler stalled with " +
                  std::to_string(pending.size()) + " pending reports");
    }
    const Event ev = events.top();
    events.pop();
    AgentState& st = agents[ev.agent];
    clock = ev.ready_at;
    st.busy = false;
    pending.push_back(std::move(st.in_flight));
    ++result.audit.completed;

    while (n < cfg.iterations && pending.size() >= cfg.batch_size) {
      if (!cap_allows_update()) {
        ++result.audit.deferred_updates;
        break;
      }
      std::vector<GradientReport> batch = select_batch();
      if (batch.size() > cfg.batch_size) ++result.audit.oversized_batches;
      Mat acc = Mat::Zero(K.rows(), K.cols());
      std::vector<std::int64_t> staleness;
      staleness.reserve(batch.size());
      for (const GradientReport& r : batch) {
        acc += r.grad;
        staleness.push_back(n - r.based_on_stamp);
        if (!aggregated_ids.insert(r.sequence).second) ++result.audit.duplicates;
      }
      result.audit.aggregated += batch.size();
      K = K - (cfg.eta / static_cast<double>(batch.size())) * acc;
      ++n;
      TraceRecord rec = evaluator.evaluate(n, clock, K);
      rec.staleness = std::move(staleness);
      result.trace.push_back(std::move(rec));
      result.iterates.push_back(K);
      result.audit.pending_at_end = pending.size();
      detail::check_record(result.trace.back(), cfg, result);
      if (n < cfg.iterations) {
        for (std::size_t a = 0; a < M; ++a) {
          if (!agents[a].busy) start(a);
        }
      }
    }
  }
  result.audit.pending_at_end = pending.size();
  return result;
}

/// Synchronous baseline: every iteration waits for all M estimates at the
/// current controller; the virtual clock advances by the slowest agent.
inline RunResult run_sync(const Fleet& fleet, const Controller& K0,
                          const EngineConfig& cfg) {
  EngineConfig sync_cfg = cfg;
  sync_cfg.batch_size = fleet.size();
  detail::check_initial(fleet, K0, sync_cfg);
  const FleetEvaluator evaluator(fleet);
  const std::size_t M = fleet.size();

  RunResult result;
  Mat K = K0.K;
  double clock = 0.0;
  result.trace.push_back(evaluator.evaluate(0, clock, K));
  result.iterates.push_back(K);
  detail::check_record(result.trace.back(), cfg, result);

  for (std::int64_t n = 0; n < cfg.iterations; ++n) {
    Mat acc = Mat::Zero(K.rows(), K.cols());
    double slowest = 0.0;
    const auto idx = static_cast<std::uint64_t>(n);
    for (std::size_t a = 0; a < M; ++a) {
      acc += detail::agent_gradient(fleet, cfg, a, idx, K);
      slowest = std::max(slowest, cfg.delays.duration(a, idx, cfg.seed));
    }
    result.audit.started += M;
    result.audit.completed += M;
    result.audit.aggregated += M;
    clock = clock + slowest;
    K = K - (cfg.eta / static_cast<double>(M)) * acc;
    TraceRecord rec = evaluator.evaluate(n + 1, clock, K);
    rec.staleness.assign(M, 0);
    result.trace.push_back(std::move(rec));
    result.iterates.push_back(K);
    detail::check_record(result.trace.back(), cfg, result);
  }
  return result;
}

struct StalenessSummary {
  std::int64_t max = 0;
  double mean = 0.0;
  std::map<std::int64_t, std::uint64_t> histogram;
  std::uint64_t total = 0;
};

inline StalenessSummary staleness_stats(const std::vector<TraceRecord>& trace) {
  if (trace.empty()) throw Error("staleness_stats: empty trace");
  StalenessSummary s;
  double sum = 0.0;
  for (const TraceRecord& rec : trace) {
    for (std::int64_t tau : rec.staleness) {
      ++s.histogram[tau];
      ++s.total;
      sum += static_cast<double>(tau);
      s.max = std::max(s.max, tau);
    }
  }
  s.mean = s.total == 0 ? 0.0 : sum / static_cast<double>(s.total);
  return s;
}

}  // namespace asynclqr
