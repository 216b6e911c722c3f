// Copyright 2026 The fvclab Authors
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
#include <string>

#include "fvc/parameters.hpp"

namespace fvc {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// Adam with bias correction. Moments are keyed by parameter name, so the state
/// can be written next to the parameters and restored for an exact resume.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every tensor that requires grad and holds a gradient.
  void step(ParameterSet& params);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

  /// Moments as "m/<name>" and "v/<name>".
  TensorMap state() const;
  /// Inverse of state(); `steps` is the bias-correction counter.
  void load_state(const TensorMap& state, std::uint64_t steps);

 private:
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  TensorMap m_;
  TensorMap v_;
};

}  // namespace fvc
