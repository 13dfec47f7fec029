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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asynclqr/engine.hpp"
#include "asynclqr/errors.hpp"
#include "asynclqr/fleet.hpp"
#include "asynclqr/nominal.hpp"
#include "asynclqr/trace_io.hpp"

namespace asynclqr {

inline constexpr const char* kTraceSchema = "asynclqr-trace/1";
inline constexpr const char* kReportSchema = "asynclqr-report/1";
inline constexpr double kGapThreshold = 0.3;
inline constexpr std::size_t kPlateauWindow = 100;
/// Desk presets shrink the published radii by this factor so that the
/// built-in initial gain stabilizes every plant with room to spare and the
/// bias plateau at x1 sits well below the gap threshold.
inline constexpr double kDeskRadiusFactor = 0.025;
inline constexpr std::uint64_t kDefaultSeed = 7;

enum class Algorithm { kAsync, kSync };

struct DelaySpec {
  DelayKind kind = DelayKind::kExponential;
  double mean = 1.0;            // virtual seconds per estimate, regular agent
  std::size_t stragglers = 0;   // the last `stragglers` agents are slow
  double straggler_factor = 20.0;

  DelayModel build(std::size_t M) const {
    DelayModel d = DelayModel::uniform(M, mean, kind);
    d.straggler_factor = straggler_factor;
    for (std::size_t k = 0; k < stragglers && k < M; ++k) {
      d.straggler_ids.insert(M - 1 - k);
    }
    return d;
  }
};

struct ExperimentConfig {
  std::string preset = "custom";
  std::string run = "run";
  std::string nominal = "paper-nominal";  // or a path to a model JSON
  HeterogeneityRadii radii = paper_fig2_radii().scaled(kDeskRadiusFactor);
  double radius_scale = 1.0;
  std::size_t M = 20;
  double eta = 1e-5;
  std::size_t batch_size = 5;
  std::int64_t iterations = 2000;
  double zo_radius = 1e-3;
  int zo_samples = 20;
  bool zo_redraw = false;
  std::optional<std::int64_t> tau_cap;
  DelaySpec delays;
  std::uint64_t seed = kDefaultSeed;
  GradientMode mode = GradientMode::kZo;
  Algorithm algorithm = Algorithm::kAsync;
  double threshold = kGapThreshold;

  HeterogeneityRadii effective_radii() const { return radii.scaled(radius_scale); }

  /// Throws ConfigError naming the offending field.
  void validate() const {
    auto bad = [](const std::string& field, const std::string& msg) {
      throw ConfigError(field + ": " + msg);
    };
    if (preset.empty()) bad("preset", "must not be empty");
    if (run.empty() || run.find_first_of("/\\") != std::string::npos) {
      bad("run", "must be a nonempty file-name-safe label");
    }
    if (nominal.empty()) bad("nominal", "must be 'paper-nominal' or a JSON path");
    try {
      radii.validate();
    } catch (const ConfigError& e) {
      bad("radii", e.what());
    }
    if (!(radius_scale >= 0.0) || !std::isfinite(radius_scale)) {
      bad("radius_scale", "must be finite and >= 0");
    }
    if (M < 1) bad("M", "must be at least 1");
    if (!(eta > 0.0) || !std::isfinite(eta)) bad("eta", "must be positive");
    if (batch_size < 1 || batch_size > M) {
      bad("batch_size", "must lie in [1, M] (M = " + std::to_string(M) + ")");
    }
    if (iterations < 0) bad("iterations", "must be nonnegative");
    if (!(zo_radius > 0.0) || !std::isfinite(zo_radius)) bad("zo_radius", "must be positive");
    if (zo_samples < 1) bad("zo_samples", "must be at least 1");
    if (tau_cap && *tau_cap < 1) bad("tau_cap", "must be at least 1");
    if (!(delays.mean > 0.0) || !std::isfinite(delays.mean)) {
      bad("delays.mean", "must be positive");
    }
    if (delays.stragglers > M) bad("delays.stragglers", "exceeds M");
    if (!(delays.straggler_factor >= 1.0)) bad("delays.straggler_factor", "must be >= 1");
    if (!(threshold > 0.0)) bad("threshold", "must be positive");
  }

  EngineConfig engine_config() const {
    EngineConfig c;
    c.eta = eta;
    c.batch_size = batch_size;
    c.iterations = iterations;
    c.zo.radius = zo_radius;
    c.zo.samples = zo_samples;
    c.zo.redraw = zo_redraw;
    c.mode = mode;
    c.delays = delays.build(M);
    c.tau_cap = tau_cap;
    c.seed = seed;
    return c;
  }

  std::string stem() const { return preset + "-" + run; }
};

inline std::string to_string(GradientMode m) {
  return m == GradientMode::kZo ? "zo" : "exact-grad";
}
inline std::string to_string(Algorithm a) {
  return a == Algorithm::kAsync ? "async" : "sync";
}
inline std::string to_string(DelayKind k) {
  return k == DelayKind::kExponential ? "exponential" : "deterministic";
}

inline GradientMode parse_mode(const std::string& s) {
  if (s == "zo") return GradientMode::kZo;
  if (s == "exact-grad" || s == "exact") return GradientMode::kExact;
  throw ConfigError("mode: expected 'zo' or 'exact-grad', got '" + s + "'");
}
inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "async") return Algorithm::kAsync;
  if (s == "sync") return Algorithm::kSync;
  throw ConfigError("algorithm: expected 'async' or 'sync', got '" + s + "'");
}
inline DelayKind parse_delay_kind(const std::string& s) {
  if (s == "exponential") return DelayKind::kExponential;
  if (s == "deterministic") return DelayKind::kDeterministic;
  throw ConfigError("delays.kind: expected 'exponential' or 'deterministic', got '" +
                    s + "'");
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["run"] = c.run;
  j["nominal"] = c.nominal;
  j["radii"] = radii_to_json(c.radii);
  j["radius_scale"] = c.radius_scale;
  j["M"] = c.M;
  j["eta"] = c.eta;
  j["batch_size"] = c.batch_size;
  j["iterations"] = c.iterations;
  j["zo_radius"] = c.zo_radius;
  j["zo_samples"] = c.zo_samples;
  j["zo_redraw"] = c.zo_redraw;
  j["tau_cap"] = c.tau_cap ? nlohmann::json(*c.tau_cap) : nlohmann::json(nullptr);
  j["delays"] = {{"kind", to_string(c.delays.kind)},
                 {"mean", c.delays.mean},
                 {"stragglers", c.delays.stragglers},
                 {"straggler_factor", c.delays.straggler_factor}};
  j["seed"] = c.seed;
  j["mode"] = to_string(c.mode);
  j["algorithm"] = to_string(c.algorithm);
  j["threshold"] = c.threshold;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    c.preset = j.at("preset").get<std::string>();
    c.run = j.at("run").get<std::string>();
    c.nominal = j.at("nominal").get<std::string>();
    c.radii = radii_from_json(j.at("radii"));
    c.radius_scale = j.at("radius_scale").get<double>();
    c.M = j.at("M").get<std::size_t>();
    c.eta = j.at("eta").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.iterations = j.at("iterations").get<std::int64_t>();
    c.zo_radius = j.at("zo_radius").get<double>();
    c.zo_samples = j.at("zo_samples").get<int>();
    c.zo_redraw = j.at("zo_redraw").get<bool>();
    if (!j.at("tau_cap").is_null()) c.tau_cap = j.at("tau_cap").get<std::int64_t>();
    const nlohmann::json& d = j.at("delays");
    c.delays.kind = parse_delay_kind(d.at("kind").get<std::string>());
    c.delays.mean = d.at("mean").get<double>();
    c.delays.stragglers = d.at("stragglers").get<std::size_t>();
    c.delays.straggler_factor = d.at("straggler_factor").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    c.threshold = j.at("threshold").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
}

/// CLI-level adjustments applied to every run of a preset.
struct PresetOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<GradientMode> mode;
  std::optional<std::size_t> M;
  std::optional<std::size_t> batch_size;
  std::optional<double> eta;
  std::optional<double> radius_scale;
  std::optional<std::int64_t> tau_cap;
  std::optional<std::int64_t> iterations;
  std::optional<std::string> nominal;
  bool zo_redraw = false;
  bool full_scale = false;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fig2", "fig3a", "fig3b", "fig3c",
                                                 "custom"};
  return names;
}

namespace detail {

inline ExperimentConfig desk_base(const std::string& preset, bool full_scale) {
  ExperimentConfig c;
  c.preset = preset;
  c.M = full_scale ? 100 : 20;
  c.batch_size = full_scale ? 20 : 5;
  return c;
}

}  // namespace detail

/// Runs that make up a preset, with overrides applied. At desk scale M = 20
/// and the base batch is 5; the full-scale flag uses M = 100 and multiplies
/// every batch size by 4.
inline std::vector<ExperimentConfig> make_preset(const std::string& name,
                                                 const PresetOverrides& o = {}) {
  const bool full = o.full_scale;
  const std::size_t bmul = full ? 4 : 1;
  std::vector<ExperimentConfig> runs;

  if (name == "fig2") {
    ExperimentConfig c = detail::desk_base(name, full);
    c.iterations = 6000;
    c.tau_cap = 20;
    c.delays.stragglers = 1;
    c.delays.straggler_factor = 20.0;
    c.run = "async";
    runs.push_back(c);
    c.run = "sync";
    c.algorithm = Algorithm::kSync;
    runs.push_back(c);
  } else if (name == "fig3a") {
    for (std::int64_t cap : {1, 3, 10}) {
      ExperimentConfig c = detail::desk_base(name, full);
      c.iterations = 6000;
      c.tau_cap = cap;
      c.run = "tau" + std::to_string(cap);
      runs.push_back(c);
    }
  } else if (name == "fig3b") {
    // Step size grows with sqrt(b_s), the schedule under which larger
    // batches buy faster convergence.
    for (std::size_t b : {5, 10, 20}) {
      ExperimentConfig c = detail::desk_base(name, full);
      c.radii = paper_fig3b_radii().scaled(kDeskRadiusFactor);
      c.batch_size = b * bmul;
      c.eta = 1e-5 * std::sqrt(static_cast<double>(b) / 5.0);
      c.iterations = 6000;
      c.tau_cap = 1;
      c.run = "bs" + std::to_string(c.batch_size);
      runs.push_back(c);
    }
  } else if (name == "fig3c") {
    for (int s : {0, 1, 2}) {
      ExperimentConfig c = detail::desk_base(name, full);
      c.mode = GradientMode::kExact;
      c.radius_scale = s;
      c.eta = 2e-5;
      c.iterations = 70000;
      c.run = "het" + std::to_string(s);
      runs.push_back(c);
    }
  } else if (name == "custom") {
    ExperimentConfig c = detail::desk_base(name, full);
    runs.push_back(c);
  } else {
    throw ConfigError("preset: unknown preset '" + name +
                      "' (expected fig2, fig3a, fig3b, fig3c or custom)");
  }

  for (ExperimentConfig& c : runs) {
    if (o.seed) c.seed = *o.seed;
    if (o.mode) c.mode = *o.mode;
    if (o.M) {
      c.M = *o.M;
      c.batch_size = std::min(c.batch_size, c.M);
    }
    if (o.batch_size) c.batch_size = *o.batch_size;
    if (o.eta) c.eta = *o.eta;
    if (o.radius_scale) c.radius_scale = *o.radius_scale;
    if (o.tau_cap) c.tau_cap = *o.tau_cap;
    if (o.iterations) c.iterations = *o.iterations;
    if (o.nominal) c.nominal = *o.nominal;
    c.zo_redraw = c.zo_redraw || o.zo_redraw;
    c.validate();
  }
  return runs;
}

/// Seed from ASYNCLQR_SEED when set, else `fallback`.
inline std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* s = std::getenv("ASYNCLQR_SEED");
  if (s == nullptr || *s == '\0') return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError("ASYNCLQR_SEED: not an unsigned integer: " +
                                      std::string(s));
  return v;
}

struct NominalSource {
  PlantModel model;
  Mat initial_gain;
};

/// "paper-nominal" or a JSON file holding a model (A, B, Q, R) and an
/// optional initial gain "K0".
inline NominalSource load_nominal(const std::string& source) {
  if (source == "paper-nominal") return {paper_nominal_model(), builtin_initial_gain()};
  std::ifstream is(source);
  if (!is) throw ConfigError("nominal: cannot open '" + source + "'");
  nlohmann::json j;
  try {
    is >> j;
    NominalSource ns{model_from_json(j), Mat()};
    ns.initial_gain = j.contains("K0") ? matrix_from_json(j.at("K0"))
                                       : builtin_initial_gain();
    ns.model.validate();
    if (ns.initial_gain.rows() != ns.model.n_u() ||
        ns.initial_gain.cols() != ns.model.n_x()) {
      throw ConfigError("nominal: initial gain K0 is " + shape_of(ns.initial_gain) +
                        ", expected " + std::to_string(ns.model.n_u()) + "x" +
                        std::to_string(ns.model.n_x()));
    }
    return ns;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("nominal: " + source + ": " + e.what());
  }
}

struct RunArtifacts {
  ExperimentConfig config;
  Fleet fleet;
  RunResult result;
  std::string status = "ok";  // ok | diverged | perturbation_unstable
  std::string message;
  std::filesystem::path trace_path;
  std::filesystem::path metadata_path;
  std::filesystem::path fleet_path;
};

inline nlohmann::json audit_to_json(const RunAudit& a) {
  return {{"started", a.started},
          {"completed", a.completed},
          {"aggregated", a.aggregated},
          {"pending_at_end", a.pending_at_end},
          {"duplicates", a.duplicates},
          {"oversized_batches", a.oversized_batches},
          {"deferred_updates", a.deferred_updates},
          {"conserved", a.conserved()}};
}

inline nlohmann::json staleness_to_json(const std::vector<TraceRecord>& trace) {
  const StalenessSummary s = staleness_stats(trace);
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [tau, count] : s.histogram) hist[std::to_string(tau)] = count;
  return {{"max", s.max}, {"mean", s.mean}, {"total", s.total}, {"histogram", hist}};
}

/// Generates the fleet, runs the engine, and writes `<preset>-<run>.csv`,
/// `.json` (metadata) and `.fleet.json` into `out_dir`. A diverged run still
/// writes its partial trace before the error propagates.
inline RunArtifacts run_experiment(const ExperimentConfig& cfg,
                                   const std::filesystem::path& out_dir) {
  cfg.validate();
  const NominalSource ns = load_nominal(cfg.nominal);
  RunArtifacts art;
  art.config = cfg;
  art.fleet = generate_fleet(ns.model, cfg.effective_radii(), cfg.M, cfg.seed,
                             ns.initial_gain);
  const EngineConfig ec = cfg.engine_config();
  const Controller K0{ns.initial_gain, 0};

  std::exception_ptr failure;
  try {
    art.result = cfg.algorithm == Algorithm::kAsync ? run_async(art.fleet, K0, ec)
                                                    : run_sync(art.fleet, K0, ec);
  } catch (const DivergenceDetected& e) {
    art.status = "diverged";
    art.message = e.what();
    art.result = e.partial();
    failure = std::current_exception();
  } catch (const PerturbationUnstable& e) {
    art.status = "perturbation_unstable";
    art.message = e.what();
    failure = std::current_exception();
  }

  std::filesystem::create_directories(out_dir);
  art.trace_path = out_dir / (cfg.stem() + ".csv");
  art.metadata_path = out_dir / (cfg.stem() + ".json");
  art.fleet_path = out_dir / (cfg.stem() + ".fleet.json");

  write_trace_csv(art.trace_path.string(), art.result.trace);
  {
    std::ofstream os(art.fleet_path);
    if (!os) throw Error("cannot write " + art.fleet_path.string());
    os << fleet_to_json(art.fleet).dump(2) << '\n';
  }
  nlohmann::json meta;
  meta["schema"] = kTraceSchema;
  meta["config"] = config_to_json(cfg);
  meta["seed"] = cfg.seed;
  meta["status"] = art.status;
  if (!art.message.empty()) meta["message"] = art.message;
  meta["trace_file"] = art.trace_path.filename().string();
  meta["fleet_file"] = art.fleet_path.filename().string();
  meta["initial_gain"] = matrix_to_json(ns.initial_gain);
  meta["fleet_retries"] = art.fleet.total_retries;
  meta["audit"] = audit_to_json(art.result.audit);
  if (!art.result.trace.empty()) meta["staleness"] = staleness_to_json(art.result.trace);
  {
    std::ofstream os(art.metadata_path);
    if (!os) throw Error("cannot write " + art.metadata_path.string());
    os << meta.dump(2) << '\n';
  }
  if (failure) std::rethrow_exception(failure);
  return art;
}

// ---------------------------------------------------------------------------
// Summaries and verdicts

struct RunSummary {
  ExperimentConfig config;
  std::string status = "ok";
  std::size_t records = 0;
  std::optional<std::int64_t> iterations_to_threshold;
  std::optional<double> clock_to_threshold;
  double plateau = 0.0;  // mean gap of system 1 over the last records
  double final_gap = 0.0;
  double final_clock = 0.0;
  std::int64_t max_staleness = 0;
  bool all_stable = true;
};

struct Verdict {
  std::string id;
  std::string preset;
  std::string name;
  bool pass = false;
  std::string detail;
};

inline RunSummary summarize_table(const ExperimentConfig& cfg, const TraceTable& t,
                                  const std::string& status = "ok") {
  RunSummary s;
  s.config = cfg;
  s.status = status;
  s.records = t.rows.size();
  if (t.rows.empty()) {
    s.all_stable = false;
    return s;
  }
  for (const TraceRow& r : t.rows) {
    if (r.gaps.empty()) throw IncompatibleTraces(t.source + ": trace without gaps");
    if (!s.iterations_to_threshold && r.gaps[0] <= cfg.threshold) {
      s.iterations_to_threshold = r.n;
      s.clock_to_threshold = r.clock;
    }
    s.max_staleness = std::max(s.max_staleness, r.max_staleness);
    s.all_stable = s.all_stable && r.all_stable;
  }
  const std::size_t w = std::min(kPlateauWindow, t.rows.size());
  double sum = 0.0;
  for (std::size_t k = t.rows.size() - w; k < t.rows.size(); ++k) sum += t.rows[k].gaps[0];
  s.plateau = sum / static_cast<double>(w);
  s.final_gap = t.rows.back().gaps[0];
  s.final_clock = t.rows.back().clock;
  return s;
}

inline std::string fmt_opt(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : std::string("never");
}
inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string("never");
}

inline bool all_ok(const std::vector<RunSummary>& runs, std::string& why) {
  for (const RunSummary& r : runs) {
    if (r.status != "ok") {
      why = r.config.run + " " + r.status;
      return false;
    }
  }
  return true;
}

/// Plateau is at most 1e-6 with zero radii and strictly increases with the
/// radius scale.
inline Verdict verdict_heterogeneity(std::vector<RunSummary> runs) {
  Verdict v{"A5", runs.empty() ? "" : runs[0].config.preset, "heterogeneity bias", false, ""};
  std::sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    return a.config.radius_scale < b.config.radius_scale;
  });
  if (runs.size() < 2) {
    v.detail = "needs at least two radius scales";
    return v;
  }
  std::string why;
  bool pass = all_ok(runs, why);
  std::string d;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    d += (k ? ", " : "") + std::string("x") + format_real(runs[k].config.radius_scale) +
         " plateau " + format_real(runs[k].plateau);
    if (runs[k].config.radius_scale == 0.0 && !(runs[k].plateau <= 1e-6)) pass = false;
    if (k > 0 && !(runs[k].plateau > runs[k - 1].plateau)) pass = false;
  }
  v.pass = pass;
  v.detail = d + (why.empty() ? "" : " (" + why + ")");
  return v;
}

/// Iterations to threshold nondecreasing in the staleness cap; plateaus
/// within 10% of each other.
inline Verdict verdict_staleness(std::vector<RunSummary> runs) {
  Verdict v{"A6", runs.empty() ? "" : runs[0].config.preset,
            "staleness slows but does not bias", false, ""};
  std::sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    return a.config.tau_cap.value_or(INT64_MAX) < b.config.tau_cap.value_or(INT64_MAX);
  });
  if (runs.size() < 2) {
    v.detail = "needs at least two staleness caps";
    return v;
  }
  std::string why;
  bool pass = all_ok(runs, why);
  double lo = runs[0].plateau, hi = runs[0].plateau;
  std::string d;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const RunSummary& r = runs[k];
    d += (k ? ", " : "") + std::string("tau_max ") +
         (r.config.tau_cap ? std::to_string(*r.config.tau_cap) : std::string("none")) +
         ": n(0.3) " + fmt_opt(r.iterations_to_threshold) + " plateau " +
         format_real(r.plateau);
    if (!r.iterations_to_threshold) pass = false;
    if (k > 0 && r.iterations_to_threshold && runs[k - 1].iterations_to_threshold &&
        *r.iterations_to_threshold < *runs[k - 1].iterations_to_threshold) {
      pass = false;
    }
    lo = std::min(lo, r.plateau);
    hi = std::max(hi, r.plateau);
  }
  const double spread = lo > 0.0 ? hi / lo - 1.0 : (hi == lo ? 0.0 : INFINITY);
  if (!(spread <= 0.1)) pass = false;
  v.pass = pass;
  v.detail = d + "; plateau spread " + format_real(spread) +
             (why.empty() ? "" : " (" + why + ")");
  return v;
}

/// Iterations to threshold nonincreasing in the batch size.
inline Verdict verdict_batch(std::vector<RunSummary> runs) {
  Verdict v{"A7", runs.empty() ? "" : runs[0].config.preset, "batch-size speedup", false,
            ""};
  std::sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    return a.config.batch_size < b.config.batch_size;
  });
  if (runs.size() < 2) {
    v.detail = "needs at least two batch sizes";
    return v;
  }
  std::string why;
  bool pass = all_ok(runs, why);
  std::string d;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const RunSummary& r = runs[k];
    d += (k ? ", " : "") + std::string("b_s ") + std::to_string(r.config.batch_size) +
         ": n(0.3) " + fmt_opt(r.iterations_to_threshold);
    if (!r.iterations_to_threshold) pass = false;
    if (k > 0 && r.iterations_to_threshold && runs[k - 1].iterations_to_threshold &&
        *r.iterations_to_threshold > *runs[k - 1].iterations_to_threshold) {
      pass = false;
    }
  }
  v.pass = pass;
  v.detail = d + (why.empty() ? "" : " (" + why + ")");
  return v;
}

/// Async reaches the threshold in at most half the virtual time of sync.
inline Verdict verdict_straggler(const std::vector<RunSummary>& runs) {
  Verdict v{"A8", runs.empty() ? "" : runs[0].config.preset, "async beats sync", false,
            ""};
  const RunSummary* a = nullptr;
  const RunSummary* s = nullptr;
  for (const RunSummary& r : runs) {
    (r.config.algorithm == Algorithm::kAsync ? a : s) = &r;
  }
  if (a == nullptr || s == nullptr) {
    v.detail = "needs one async and one sync trace";
    return v;
  }
  v.detail = "clock(0.3) async " + fmt_opt(a->clock_to_threshold) + ", sync " +
             fmt_opt(s->clock_to_threshold);
  if (a->status != "ok" || s->status != "ok" || !a->clock_to_threshold ||
      !s->clock_to_threshold) {
    return v;
  }
  const double ratio = *a->clock_to_threshold / *s->clock_to_threshold;
  v.detail += ", ratio " + format_real(ratio);
  v.pass = ratio <= 0.5;
  return v;
}

inline Verdict verdict_stability(const std::vector<RunSummary>& runs) {
  Verdict v{"A9", "", "per-iteration stability", true, ""};
  std::size_t records = 0;
  for (const RunSummary& r : runs) {
    records += r.records;
    if (!r.all_stable || r.status != "ok") {
      v.pass = false;
      v.detail += (v.detail.empty() ? "" : ", ") + r.config.stem() + " " + r.status;
    }
  }
  if (v.pass) {
    v.detail = std::to_string(runs.size()) + " runs, " + std::to_string(records) +
               " iterates, all stabilizing";
  }
  return v;
}

/// Verdicts for every preset group present in `runs`.
inline std::vector<Verdict> preset_verdicts(const std::vector<RunSummary>& runs) {
  std::map<std::string, std::vector<RunSummary>> groups;
  for (const RunSummary& r : runs) groups[r.config.preset].push_back(r);
  std::vector<Verdict> out;
  for (const auto& [preset, group] : groups) {
    if (preset == "fig2") out.push_back(verdict_straggler(group));
    if (preset == "fig3a") out.push_back(verdict_staleness(group));
    if (preset == "fig3b") out.push_back(verdict_batch(group));
    if (preset == "fig3c") out.push_back(verdict_heterogeneity(group));
  }
  if (!runs.empty()) out.push_back(verdict_stability(runs));
  return out;
}

inline void check_compatible(const std::vector<RunSummary>& runs) {
  std::map<std::string, const RunSummary*> first;
  std::map<std::string, int> stems;
  for (const RunSummary& r : runs) {
    if (++stems[r.config.stem()] > 1) {
      throw IncompatibleTraces("duplicate run " + r.config.stem());
    }
    auto [it, inserted] = first.emplace(r.config.preset, &r);
    if (inserted) continue;
    const ExperimentConfig& a = it->second->config;
    const ExperimentConfig& b = r.config;
    if (a.M != b.M || a.seed != b.seed || a.threshold != b.threshold ||
        a.nominal != b.nominal) {
      throw IncompatibleTraces("runs " + a.stem() + " and " + b.stem() +
                               " differ in M, seed, threshold or nominal model");
    }
  }
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  auto opt_i = [](const std::optional<std::int64_t>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  auto opt_d = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"preset", s.config.preset},
          {"run", s.config.run},
          {"status", s.status},
          {"records", s.records},
          {"iterations_to_threshold", opt_i(s.iterations_to_threshold)},
          {"clock_to_threshold", opt_d(s.clock_to_threshold)},
          {"plateau_gap", s.plateau},
          {"final_gap", s.final_gap},
          {"final_clock", s.final_clock},
          {"max_staleness", s.max_staleness},
          {"all_stable", s.all_stable}};
}

inline nlohmann::json verdict_to_json(const Verdict& v) {
  return {{"id", v.id}, {"preset", v.preset}, {"name", v.name}, {"pass", v.pass},
          {"detail", v.detail}};
}

struct Report {
  std::vector<RunSummary> runs;
  std::vector<Verdict> verdicts;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema"] = kReportSchema;
    j["threshold"] = runs.empty() ? kGapThreshold : runs[0].config.threshold;
    j["plateau_window"] = kPlateauWindow;
    j["runs"] = nlohmann::json::array();
    for (const RunSummary& r : runs) j["runs"].push_back(summary_to_json(r));
    j["verdicts"] = nlohmann::json::array();
    for (const Verdict& v : verdicts) j["verdicts"].push_back(verdict_to_json(v));
    return j;
  }
};

inline Report build_report(std::vector<RunSummary> runs) {
  check_compatible(runs);
  std::sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    return a.config.stem() < b.config.stem();
  });
  Report r;
  r.verdicts = preset_verdicts(runs);
  r.runs = std::move(runs);
  return r;
}

/// Reads every run metadata file in `dir` with its trace and builds the report.
inline Report summarize(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("summarize: not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> metas;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".json" || name.ends_with(".fleet.json")) continue;
    metas.push_back(entry.path());
  }
  std::sort(metas.begin(), metas.end());
  std::vector<RunSummary> runs;
  for (const auto& path : metas) {
    nlohmann::json meta;
    {
      std::ifstream is(path);
      try {
        is >> meta;
      } catch (const nlohmann::json::exception& e) {
        throw IncompatibleTraces(path.string() + ": " + e.what());
      }
    }
    if (!meta.is_object() || !meta.contains("schema")) continue;  // not run metadata
    if (meta.at("schema") != kTraceSchema) {
      throw IncompatibleTraces(path.string() + ": schema " + meta.at("schema").dump() +
                               ", expected " + kTraceSchema);
    }
    ExperimentConfig cfg;
    try {
      cfg = config_from_json(meta.at("config"));
    } catch (const std::exception& e) {
      throw IncompatibleTraces(path.string() + ": " + e.what());
    }
    const TraceTable t =
        read_trace_csv((dir / meta.at("trace_file").get<std::string>()).string());
    if (t.fleet_size() != cfg.M && !t.rows.empty()) {
      throw IncompatibleTraces(t.source + ": " + std::to_string(t.fleet_size()) +
                               " gap columns, config says M = " + std::to_string(cfg.M));
    }
    runs.push_back(summarize_table(cfg, t, meta.value("status", std::string("ok"))));
  }
  if (runs.empty()) throw IncompatibleTraces("summarize: no traces in " + dir.string());
  return build_report(std::move(runs));
}

}  // namespace asynclqr
