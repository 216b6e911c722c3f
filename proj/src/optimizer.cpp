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

#include "fvc/optimizer.hpp"

#include <cmath>

#include "fvc/errors.hpp"

namespace fvc {

void Adam::step(ParameterSet& params) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& [name, p] : params.tensors()) {
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto [mit, m_new] = m_.try_emplace(name, p.shape());
    auto [vit, v_new] = v_.try_emplace(name, p.shape());
    if (mit->second.shape() != p.shape() || vit->second.shape() != p.shape()) {
      throw ShapeError("adam: moment shape mismatch for " + name);
    }
    auto g = p.grad();
    auto m = mit->second.values();
    auto v = vit->second.values();
    auto w = p.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

TensorMap Adam::state() const {
  TensorMap out;
  for (const auto& [name, t] : m_) out.emplace("m/" + name, t);
  for (const auto& [name, t] : v_) out.emplace("v/" + name, t);
  return out;
}

void Adam::load_state(const TensorMap& state, std::uint64_t steps) {
  m_.clear();
  v_.clear();
  for (const auto& [key, t] : state) {
    if (key.rfind("m/", 0) == 0) {
      m_.emplace(key.substr(2), t);
    } else if (key.rfind("v/", 0) == 0) {
      v_.emplace(key.substr(2), t);
    } else {
      throw FormatError("adam state: unexpected entry '" + key + "'");
    }
  }
  steps_ = steps;
}

}  // namespace fvc
