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

// Parallel kernels against their serial references. Thread count comes from
// FVCLAB_THREADS; with a single thread both sides run the same loops.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fvc/kernels.hpp"

namespace {

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      fvc::kernels::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    } else {
      fvc::kernels::reference::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Conv1d(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const std::size_t c = 64, taps = 9;
  const auto x = random_buffer(T * c, 3), w = random_buffer(taps * c * c, 4);
  std::vector<double> y(T * c);
  for (auto _ : state) {
    if constexpr (Parallel) {
      fvc::kernels::conv1d_forward(T, c, c, taps, x.data(), w.data(), y.data());
    } else {
      fvc::kernels::reference::conv1d_forward(T, c, c, taps, x.data(), w.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv1d<true>)->Name("conv1d/parallel")->Arg(64)->Arg(512);
BENCHMARK(BM_Conv1d<false>)->Name("conv1d/reference")->Arg(64)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
