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

#include "fvc/parameters.hpp"

#include <cmath>

#include "fvc/errors.hpp"

namespace fvc {

Tensor& ParameterSet::add(const std::string& name, Shape shape, double fill) {
  auto [it, inserted] = tensors_.try_emplace(name, Tensor(std::move(shape), fill));
  if (!inserted) throw ConfigError("duplicate parameter name " + name);
  it->second.set_requires_grad(true);
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IndexError("unknown parameter " + name);
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IndexError("unknown parameter " + name);
  return it->second;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : tensors_) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h = fvc::checksum(t.values(), h);
  }
  return h;
}

bool ParameterSet::all_finite() const {
  for (const auto& [_, t] : tensors_) {
    if (!fvc::all_finite(t.values())) return false;
  }
  return true;
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& [_, t] : tensors_) t.set_requires_grad(on);
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : tensors_) {
    if (t.requires_grad()) t.zero_grad();
  }
}

void ParameterSet::load_values(const TensorMap& src, const std::string& prefix) {
  for (auto& [name, t] : tensors_) {
    auto it = src.find(prefix + name);
    if (it == src.end()) throw FormatError("checkpoint is missing tensor " + prefix + name);
    if (it->second.shape() != t.shape()) {
      throw FormatError("checkpoint tensor " + prefix + name + " has shape " +
                        shape_to_string(it->second.shape()) + ", expected " +
                        shape_to_string(t.shape()));
    }
    std::copy(it->second.values().begin(), it->second.values().end(), t.values().begin());
  }
}

void init_uniform_fan_in(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.values()) v = u(rng);
}

}  // namespace fvc
