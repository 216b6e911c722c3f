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

#include <cstddef>

// Dense fp64 kernels behind the autodiff ops.
//
// Every kernel exists twice: an OpenMP version that splits work over output
// rows, and a plain serial reference in namespace `reference`. Each output
// element is accumulated in the same order by both, so results are bitwise
// identical for any thread count.

namespace fvc::kernels {

/// Thread cap for the parallel kernels. Defaults to FVCLAB_THREADS, else 1.
int num_threads();
void set_num_threads(int n);

/// C[m x n] (+)= op(A) * op(B), where op(A) is m x k and op(B) is k x n.
/// A is stored m x k (or k x m when trans_a), B is k x n (or n x k when trans_b).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);

/// Same-padded 1-D convolution over time.
/// x: T x c_in, w: taps x c_in x c_out, y: T x c_out (overwritten).
void conv1d_forward(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                    const double* x, const double* w, double* y);
/// dx (+)= conv1d^T(dy, w).
void conv1d_backward_input(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                           const double* dy, const double* w, double* dx);
/// dw (+)= sum_t x[t + k - taps/2]^T dy[t].
void conv1d_backward_weight(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                            const double* x, const double* dy, double* dw);

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);
void conv1d_forward(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                    const double* x, const double* w, double* y);
void conv1d_backward_input(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                           const double* dy, const double* w, double* dx);
void conv1d_backward_weight(std::size_t T, std::size_t c_in, std::size_t c_out, std::size_t taps,
                            const double* x, const double* dy, double* dw);

}  // namespace reference

}  // namespace fvc::kernels
