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

#include "asynclqr/lqr.hpp"

namespace asynclqr {

/// Nominal four-state, two-input benchmark plant with Q = I4 and R = I2.
inline PlantModel paper_nominal_model() {
  PlantModel m;
  m.A.resize(4, 4);
  m.A << 1.22, 0.03, -0.02, -0.32,  //
      0.01, 0.47, 4.70, 0.00,       //
      0.02, -0.06, 0.40, 0.00,      //
      0.01, -0.04, 0.72, 1.55;
  m.B.resize(4, 2);
  m.B << 0.01, 0.99,  //
      -3.44, 1.66,    //
      -0.83, 0.44,    //
      -0.47, 0.25;
  m.Q = Mat::Identity(4, 4);
  m.R = Mat::Identity(2, 2);
  m.id = 0;
  return m;
}

/// The initial gain as printed alongside the benchmark. It does NOT stabilize
/// the printed plant (rho(A - BK) is about 3.98); kept for reference only.
inline Mat paper_printed_initial_gain() {
  Mat K(2, 4);
  K << 0.3368, -1.7417, 0.1503, 0.2895,  //
      0.6846, 0.4203, -0.2842, -0.6532;
  return K;
}

/// Default stabilizing but sub-optimal initial gain for the nominal plant:
/// the LQR gain under the heavier input weight R = 10 I, rounded to four
/// decimals. rho(A - BK) is about 0.689 and the initial gap about 20.04.
inline Mat builtin_initial_gain() {
  Mat K(2, 4);
  K << 0.2528, 0.1011, -0.9695, -2.2689,  //
      0.4776, -0.0063, 0.2783, 0.4548;
  return K;
}

}  // namespace asynclqr
