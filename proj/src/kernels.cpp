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

#include "fvc/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

namespace fvc::kernels {

namespace {

int threads_from_env() {
  const char* env = std::getenv("FVCLAB_THREADS");
  if (!env) return 1;
  try {
    return std::max(1, std::stoi(env));
  } catch (...) {
    return 1;
  }
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{threads_from_env()};
  return cap;
}

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

inline std::ptrdiff_t signed_index(std::size_t t, std::size_t k, std::size_t half) {
  return static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(half);
}

}  // namespace

int num_threads() { return thread_cap().load(); }
void set_num_threads(int n) { thread_cap().store(std::max(1, n)); }

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  const int nt = num_threads();
  const bool par = nt > 1 && m * n * k >= kParallelWork;
#pragma omp parallel for schedule(static) num_threads(nt) if (par)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(m); ++si) {
    const auto i = static_cast<std::size_t>(si);
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    if (!trans_b) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* bcol = b + j * k;
        double s = crow[j];
        if (trans_a) {
          for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * bcol[p];
        } else {
          const double* arow = a + i * k;
          for (std::size_t p = 0; p < k; ++p) s += arow[p] * bcol[p];
        }
        crow[j] = s;
      }
    }
  }
}

void conv1d_forward(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                    const double* x, const double* w, double* y) {
  const std::size_t half = taps / 2;
  const int nt = num_threads();
  const bool par = nt > 1 && T * c_in * c_out * taps >= kParallelWork;
#pragma omp parallel for schedule(static) num_threads(nt) if (par)
  for (std::ptrdiff_t st = 0; st < static_cast<std::ptrdiff_t>(T); ++st) {
    const auto t = static_cast<std::size_t>(st);
    double* yrow = y + t * c_out;
    std::fill(yrow, yrow + c_out, 0.0);
    for (std::size_t kk = 0; kk < taps; ++kk) {
      const std::ptrdiff_t src = signed_index(t, kk, half);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const double* xrow = x + static_cast<std::size_t>(src) * c_in;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double xv = xrow[ci];
        const double* wrow = w + (kk * c_in + ci) * c_out;
        for (std::size_t o = 0; o < c_out; ++o) yrow[o] += xv * wrow[o];
      }
    }
  }
}

void conv1d_backward_input(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                           const double* dy, const double* w, double* dx) {
  const std::size_t half = taps / 2;
  const int nt = num_threads();
  const bool par = nt > 1 && T * c_in * c_out * taps >= kParallelWork;
#pragma omp parallel for schedule(static) num_threads(nt) if (par)
  for (std::ptrdiff_t ss = 0; ss < static_cast<std::ptrdiff_t>(T); ++ss) {
    const auto s = static_cast<std::size_t>(ss);
    double* dxrow = dx + s * c_in;
    for (std::size_t kk = 0; kk < taps; ++kk) {
      // input row s feeds output row t = s - kk + half
      const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(s + half) - static_cast<std::ptrdiff_t>(kk);
      if (t < 0 || t >= static_cast<std::ptrdiff_t>(T)) continue;
      const double* dyrow = dy + static_cast<std::size_t>(t) * c_out;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double* wrow = w + (kk * c_in + ci) * c_out;
        double v = dxrow[ci];
        for (std::size_t o = 0; o < c_out; ++o) v += dyrow[o] * wrow[o];
        dxrow[ci] = v;
      }
    }
  }
}

void conv1d_backward_weight(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                            const double* x, const double* dy, double* dw) {
  const std::size_t half = taps / 2;
  const int nt = num_threads();
  const bool par = nt > 1 && T * c_in * c_out * taps >= kParallelWork;
  const std::size_t rows = taps * c_in;
#pragma omp parallel for schedule(static) num_threads(nt) if (par)
  for (std::ptrdiff_t sr = 0; sr < static_cast<std::ptrdiff_t>(rows); ++sr) {
    const auto r = static_cast<std::size_t>(sr);
    const std::size_t kk = r / c_in;
    const std::size_t ci = r % c_in;
    double* dwrow = dw + r * c_out;
    for (std::size_t t = 0; t < T; ++t) {
      const std::ptrdiff_t src = signed_index(t, kk, half);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const double xv = x[static_cast<std::size_t>(src) * c_in + ci];
      const double* dyrow = dy + t * c_out;
      for (std::size_t o = 0; o < c_out; ++o) dwrow[o] += xv * dyrow[o];
    }
  }
}

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  }
}

void conv1d_forward(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                    const double* x, const double* w, double* y) {
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);
  const auto len = static_cast<std::ptrdiff_t>(T);
  for (std::ptrdiff_t t = 0; t < len; ++t) {
    for (std::size_t o = 0; o < c_out; ++o) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < taps; ++kk) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(kk) - half;
        if (src < 0 || src >= len) continue;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          s += x[static_cast<std::size_t>(src) * c_in + ci] * w[(kk * c_in + ci) * c_out + o];
        }
      }
      y[static_cast<std::size_t>(t) * c_out + o] = s;
    }
  }
}

void conv1d_backward_input(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                           const double* dy, const double* w, double* dx) {
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);
  const auto len = static_cast<std::ptrdiff_t>(T);
  for (std::ptrdiff_t s = 0; s < len; ++s) {
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      double v = dx[static_cast<std::size_t>(s) * c_in + ci];
      for (std::size_t kk = 0; kk < taps; ++kk) {
        const std::ptrdiff_t t = s + half - static_cast<std::ptrdiff_t>(kk);
        if (t < 0 || t >= len) continue;
        for (std::size_t o = 0; o < c_out; ++o) {
          v += dy[static_cast<std::size_t>(t) * c_out + o] * w[(kk * c_in + ci) * c_out + o];
        }
      }
      dx[static_cast<std::size_t>(s) * c_in + ci] = v;
    }
  }
}

void conv1d_backward_weight(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                            const double* x, const double* dy, double* dw) {
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);
  const auto len = static_cast<std::ptrdiff_t>(T);
  for (std::size_t kk = 0; kk < taps; ++kk) {
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      for (std::size_t o = 0; o < c_out; ++o) {
        double v = dw[(kk * c_in + ci) * c_out + o];
        for (std::ptrdiff_t t = 0; t < len; ++t) {
          const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(kk) - half;
          if (src < 0 || src >= len) continue;
          v += x[static_cast<std::size_t>(src) * c_in + ci] * dy[static_cast<std::size_t>(t) * c_out + o];
        }
        dw[(kk * c_in + ci) * c_out + o] = v;
      }
    }
  }
}

}  // namespace reference

}  // namespace fvc::kernels
