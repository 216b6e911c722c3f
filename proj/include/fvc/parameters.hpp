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
#include <map>
#include <random>
#include <string>

#include "fvc/tensor.hpp"

namespace fvc {

/// Tensors keyed by name. std::map keeps iteration (and file) order stable.
using TensorMap = std::map<std::string, Tensor>;

/// Named learnable tensors of one network. Element addresses are stable, so
/// Graph::parameter() may hold pointers into the set for the life of a step.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Shape shape, double fill = 0.0);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  TensorMap& tensors() { return tensors_; }
  const TensorMap& tensors() const { return tensors_; }

  std::size_t parameter_count() const;
  std::uint64_t checksum() const;
  bool all_finite() const;

  void set_requires_grad(bool on);
  void zero_grad();

  /// Copies values (not gradients) of every tensor whose name is present in `src`
  /// with a matching shape; throws FormatError on a missing name or shape mismatch.
  void load_values(const TensorMap& src, const std::string& prefix = "");

 private:
  TensorMap tensors_;
};

/// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)), drawn in row-major order.
void init_uniform_fan_in(Tensor& t, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace fvc
