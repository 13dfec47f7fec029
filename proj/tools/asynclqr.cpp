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

// asynclqr: run experiment presets, verify the acceptance suites, summarize
// trace directories.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "asynclqr/acceptance.hpp"
#include "asynclqr/harness.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kDiverged = 3, kPerturbation = 4, kFailure = 5 };

int cmd_run(const std::string& preset, const std::string& out,
            asynclqr::PresetOverrides ov, const std::optional<std::string>& mode) {
  using namespace asynclqr;
  if (mode) ov.mode = parse_mode(*mode);
  const std::uint64_t seed = seed_from_env(ov.seed.value_or(kDefaultSeed));
  ov.seed = seed;
  const std::vector<ExperimentConfig> runs = make_preset(preset, ov);
  for (const ExperimentConfig& c : runs) {
    const RunArtifacts a = run_experiment(c, out);
    const RunSummary s = summarize_table(c, to_table(a.result.trace));
    std::printf("%s: %zu iterates, final gap_1 %.6g, n(%.2g) %s, clock(%.2g) %s\n",
                c.stem().c_str(), s.records, s.final_gap, c.threshold,
                fmt_opt(s.iterations_to_threshold).c_str(), c.threshold,
                fmt_opt(s.clock_to_threshold).c_str());
  }
  return kOk;
}

int cmd_verify(const std::string& suite, const std::string& out,
               std::optional<std::uint64_t> seed) {
  using namespace asynclqr::acceptance;
  Options o;
  o.artifacts = out;
  o.seed = asynclqr::seed_from_env(seed.value_or(asynclqr::kDefaultSeed));
  std::vector<Result> results;
  if (suite == "oracles") {
    results = oracles_suite(o);
  } else if (suite == "properties") {
    results = properties_suite(o);
  } else if (suite == "figures") {
    results = figures_suite(o);
  } else {
    results = oracles_suite(o);
    for (auto& r : properties_suite(o)) results.push_back(r);
    for (auto& r : figures_suite(o)) results.push_back(r);
  }
  bool all = true;
  for (const Result& r : results) {
    std::cout << format_result(r) << '\n';
    all = all && r.pass;
  }
  return all ? kOk : 1;
}

int cmd_summarize(const std::string& dir, const std::optional<std::string>& out) {
  const asynclqr::Report report = asynclqr::summarize(dir);
  const std::string text = report.to_json().dump(2);
  if (out) {
    std::ofstream os(*out);
    if (!os) throw asynclqr::Error("cannot write " + *out);
    os << text << '\n';
  } else {
    std::cout << text << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous heterogeneous model-free LQR policy gradient simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment preset");
  std::string preset;
  std::string out;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> M, bs;
  std::optional<double> eta, radius_scale;
  std::optional<std::int64_t> tau_cap, iterations;
  std::optional<std::string> nominal;
  bool zo_redraw = false, full_scale = false;
  run->add_option("--preset", preset, "fig2 | fig3a | fig3b | fig3c | custom")
      ->required()
      ->check(CLI::IsMember(asynclqr::preset_names()));
  run->add_option("--seed", seed, "Base seed (ASYNCLQR_SEED takes precedence)");
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--mode", mode, "zo | exact-grad")
      ->check(CLI::IsMember({"zo", "exact-grad"}));
  run->add_option("--M", M, "Number of systems");
  run->add_option("--bs", bs, "Batch size b_s");
  run->add_option("--eta", eta, "Step size");
  run->add_option("--radius-scale", radius_scale, "Multiplier on the preset radii");
  run->add_option("--tau-cap", tau_cap, "Staleness cap tau_max");
  run->add_option("--iterations,-N", iterations, "Server iterations");
  run->add_option("--nominal", nominal, "Model JSON replacing the built-in nominal");
  run->add_flag("--zo-redraw", zo_redraw, "Redraw destabilizing ZO perturbations");
  run->add_flag("--full-scale", full_scale, "M = 100 and 4x batch sizes");

  auto* verify = app.add_subcommand("verify", "Run acceptance suites");
  std::string suite = "all";
  std::string verify_out = "verify-artifacts";
  std::optional<std::uint64_t> verify_seed;
  verify->add_option("--suite", suite, "oracles | properties | figures | all")
      ->check(CLI::IsMember({"oracles", "properties", "figures", "all"}));
  verify->add_option("--out", verify_out, "Directory for figure-suite artifacts");
  verify->add_option("--seed", verify_seed, "Base seed");

  auto* summ = app.add_subcommand("summarize", "Emit the report JSON for a trace directory");
  std::string dir;
  std::optional<std::string> report_out;
  summ->add_option("dir", dir, "Directory of traces")->required();
  summ->add_option("--out", report_out, "Write the report here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      asynclqr::PresetOverrides ov;
      ov.seed = seed;
      ov.M = M;
      ov.batch_size = bs;
      ov.eta = eta;
      ov.radius_scale = radius_scale;
      ov.tau_cap = tau_cap;
      ov.iterations = iterations;
      ov.nominal = nominal;
      ov.zo_redraw = zo_redraw;
      ov.full_scale = full_scale;
      return cmd_run(preset, out, ov, mode);
    }
    if (*verify) return cmd_verify(suite, verify_out, verify_seed);
    if (*summ) return cmd_summarize(dir, report_out);
  } catch (const asynclqr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const asynclqr::DivergenceDetected& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const asynclqr::PerturbationUnstable& e) {
    std::cerr << "perturbation unstable: " << e.what()
              << " (reduce the smoothing radius or pass --zo-redraw)\n";
    return kPerturbation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
