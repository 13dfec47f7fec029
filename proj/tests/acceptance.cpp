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

// Acceptance criteria A1-A10: one PASS/FAIL line per criterion.

#include <cstring>
#include <iostream>
#include <string>

#include "asynclqr/acceptance.hpp"

int main(int argc, char** argv) {
  using namespace asynclqr::acceptance;
  Options o;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--out") == 0) o.artifacts = argv[++i];
  }
  o.seed = asynclqr::seed_from_env(asynclqr::kDefaultSeed);

  std::vector<Result> results = oracles_suite(o);
  for (Result& r : figures_suite(o)) results.push_back(std::move(r));
  for (Result& r : properties_suite(o)) results.push_back(std::move(r));

  int failed = 0;
  for (const Result& r : results) {
    std::cout << format_result(r) << '\n';
    if (!r.pass) ++failed;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) +
                                                          (failed == 1 ? " criterion failed"
                                                                       : " criteria failed"))
            << '\n';
  return failed == 0 ? 0 : 1;
}
