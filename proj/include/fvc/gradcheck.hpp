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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fvc/autodiff.hpp"
#include "fvc/parameters.hpp"

namespace fvc::gradcheck {

/// Builds the function under test on a fresh graph from leaf vars (one per input tensor).
using Builder = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

struct Options {
  double step = 1e-6;
  /// Analytic gradients are compared against expected_scale * numeric gradient
  /// (-lambda for a gradient reversal).
  double expected_scale = 1.0;
  bool training = false;
  std::uint64_t graph_seed = 0;
  /// Seed of the random projection that turns a non-scalar output into a loss.
  std::uint64_t projection_seed = 17;
};

/// Worst relative error over all inputs between the analytic gradient and
/// central finite differences of sum(output * R) for a fixed random R.
///
/// Per input tensor the error is max|a - n| / max(max|a|, max|n|); when both
/// gradients are below 1e-7 in magnitude the absolute difference is used.
double max_relative_error(const Builder& build, std::vector<Tensor> inputs, const Options& opt = {});
/// Same, additionally checking every tensor of `params` that requires grad.
double max_relative_error(const Builder& build, std::vector<Tensor> inputs, ParameterSet& params,
                          const Options& opt = {});

struct CheckResult {
  std::string name;
  double worst_error = 0.0;
  double tolerance = 0.0;
  int trials = 0;
  bool passed() const { return worst_error < tolerance; }
};

/// The full suite: every op in ad::differentiable_ops() plus the model-level
/// composites (prenet, FFN block, PostNet, speaker encoder, whole tiny model).
std::vector<CheckResult> run_suite(std::uint64_t seed, int trials_per_op = 100);

}  // namespace fvc::gradcheck
