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

#include "fvc/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "fvc/errors.hpp"
#include "fvc/kernels.hpp"

namespace fvc::ad {

namespace {

std::string& corrupted_op_storage() {
  static std::string name;
  return name;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void require_same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

void require_same_shape(std::string_view op, Var a, Var b) {
  require_same_graph(a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void require_matrix(std::string_view op, Var x) {
  if (x.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(x.shape()));
  }
}

// Applies a unary elementwise op whose derivative is a function of (x, y).
template <typename Fwd, typename Deriv>
Var unary(std::string_view name, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t xi = x.id();
  return x.graph().record(name, std::move(out), {xi}, [xi, deriv](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const Tensor& xv = g.value_of(xi);
    const Tensor& yv = g.value_of(self);
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

const Tensor& Var::value() const { return graph_->value_of(id_); }

// --------------------------------------------------------------------------- Graph

const Tensor& Graph::value_of(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

std::vector<double>& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value_of(id).size(), 0.0);
  return n.grad;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor value) {
  Node n;
  n.op = "input";
  n.owned = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor& param) {
  if (auto it = param_index_.find(&param); it != param_index_.end()) return Var(this, it->second);
  Node n;
  n.op = "parameter";
  n.external = &param;
  n.param = &param;
  n.needs_grad = param.requires_grad();
  nodes_.push_back(std::move(n));
  param_index_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant_ref(const Tensor& value) {
  Node n;
  n.op = "constant";
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                  BackwardFn fn) {
  Node n;
  n.op = std::string(op);
  n.owned = std::move(value);
  for (auto i : inputs) {
    if (i >= nodes_.size()) throw ContractError("op input refers to a future node");
    n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  }
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::uint64_t Graph::next_op_seed() { return splitmix64(seed_ ^ splitmix64(++op_counter_)); }

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw ContractError("loss belongs to a different graph");
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(loss.id())[0] = 1.0;
  const std::string& corrupted = testing::corrupted_op();
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    if (!corrupted.empty() && n.op == corrupted) {
      for (auto& v : n.grad) v *= 1.01;
    }
    n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty() || !n.param->requires_grad()) continue;
    if (!n.param->has_grad()) n.param->zero_grad();
    auto dst = n.param->grad();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
  }
}

std::span<const double> Graph::grad(Var v) const { return nodes_[v.id()].grad; }

// --------------------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record("add", std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    for (std::size_t in : {ai, bi}) {
      if (!g.needs_grad(in)) continue;
      auto& gx = g.grad_buffer(in);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record("sub", std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    if (g.needs_grad(ai)) {
      auto& ga = g.grad_buffer(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    }
    if (g.needs_grad(bi)) {
      auto& gb = g.grad_buffer(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record("mul", std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    if (g.needs_grad(ai)) {
      const Tensor& bv = g.value_of(bi);
      auto& ga = g.grad_buffer(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.needs_grad(bi)) {
      const Tensor& av = g.value_of(ai);
      auto& gb = g.grad_buffer(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape("div", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record("div", std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    const Tensor& bv = g.value_of(bi);
    if (g.needs_grad(ai)) {
      auto& ga = g.grad_buffer(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] / bv[i];
    }
    if (g.needs_grad(bi)) {
      const Tensor& yv = g.value_of(self);
      auto& gb = g.grad_buffer(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i] * yv[i] / bv[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  require_same_graph(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols() || bv.rows() > 1) {
    throw ShapeError("add_bias: bias " + shape_to_string(bv.shape()) + " does not match rows of " +
                     shape_to_string(xv.shape()));
  }
  Tensor out(xv.shape());
  const std::size_t R = xv.rows(), C = xv.cols();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = xv[r * C + c] + bv[c];
  const std::size_t xi = x.id(), bi = bias.id();
  return x.graph().record("add_bias", std::move(out), {xi, bi},
                          [xi, bi, R, C](Graph& g, std::size_t self) {
                            const auto& gy = g.grad_buffer(self);
                            if (g.needs_grad(xi)) {
                              auto& gx = g.grad_buffer(xi);
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
                            }
                            if (g.needs_grad(bi)) {
                              auto& gb = g.grad_buffer(bi);
                              for (std::size_t r = 0; r < R; ++r)
                                for (std::size_t c = 0; c < C; ++c) gb[c] += gy[r * C + c];
                            }
                          });
}

Var scale(Var x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; },
               [](double, double) { return 1.0; });
}

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var x) {
  return unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return 0.5 / y; });
}

// --------------------------------------------------------------------------- reductions

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  const std::size_t xi = x.id();
  return x.graph().record("sum", Tensor::scalar(s), {xi}, [xi](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const double gy = g.grad_buffer(self)[0];
    for (auto& v : g.grad_buffer(xi)) v += gy;
  });
}

Var mean(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  const double n = static_cast<double>(xv.size());
  const std::size_t xi = x.id();
  return x.graph().record("mean", Tensor::scalar(s / n), {xi}, [xi, n](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const double gy = g.grad_buffer(self)[0] / n;
    for (auto& v : g.grad_buffer(xi)) v += gy;
  });
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  Tensor out({1, C});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c] += xv[r * C + c];
  for (std::size_t c = 0; c < C; ++c) out[c] /= static_cast<double>(R);
  const std::size_t xi = x.id();
  return x.graph().record("mean_rows", std::move(out), {xi}, [xi, R, C](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(xi);
    const double inv = 1.0 / static_cast<double>(R);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += gy[c] * inv;
  });
}

// --------------------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record("matmul", std::move(out), {ai, bi},
                          [ai, bi, m, n, k](Graph& g, std::size_t self) {
                            const auto& gy = g.grad_buffer(self);
                            if (g.needs_grad(ai)) {
                              // dA = G * B^T
                              kernels::gemm(false, true, m, k, n, gy.data(), g.value_of(bi).data(),
                                            g.grad_buffer(ai).data(), true);
                            }
                            if (g.needs_grad(bi)) {
                              // dB = A^T * G
                              kernels::gemm(true, false, k, n, m, g.value_of(ai).data(), gy.data(),
                                            g.grad_buffer(bi).data(), true);
                            }
                          });
}

Var transpose(Var x) {
  require_matrix("transpose", x);
  const std::size_t R = x.rows(), C = x.cols();
  const Tensor& xv = x.value();
  Tensor out({C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = xv[r * C + c];
  const std::size_t xi = x.id();
  return x.graph().record("transpose", std::move(out), {xi}, [xi, R, C](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(xi);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += gy[c * R + r];
  });
}

// --------------------------------------------------------------------------- softmax family

Var softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = xv.data() + r * C;
    double* y = out.data() + r * C;
    const double mx = *std::max_element(in, in + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += (y[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < C; ++c) y[c] /= z;
  }
  const std::size_t xi = x.id();
  return x.graph().record("softmax", std::move(out), {xi}, [xi, R, C](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const Tensor& yv = g.value_of(self);
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(xi);
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += gy[r * C + c] * yv[r * C + c];
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += yv[r * C + c] * (gy[r * C + c] - dot);
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = xv.data() + r * C;
    const double mx = *std::max_element(in, in + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(in[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = in[c] - lse;
  }
  const std::size_t xi = x.id();
  return x.graph().record("log_softmax", std::move(out), {xi}, [xi, R, C](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const Tensor& yv = g.value_of(self);
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(xi);
    for (std::size_t r = 0; r < R; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < C; ++c) total += gy[r * C + c];
      for (std::size_t c = 0; c < C; ++c)
        gx[r * C + c] += gy[r * C + c] - std::exp(yv[r * C + c]) * total;
    }
  });
}

// --------------------------------------------------------------------------- normalisation

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  require_same_graph(x, gamma);
  require_same_graph(x, beta);
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const Tensor& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  if (gamma.size() != C || beta.size() != C) {
    throw ShapeError("layer_norm: gain/bias of size " + std::to_string(gamma.size()) + "/" +
                     std::to_string(beta.size()) + " for rows of width " + std::to_string(C));
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = xv.data() + r * C;
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += in[c];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (in[c] - mu) * is;
      xhat[r * C + c] = h;
      out[r * C + c] = gv[c] * h + bv[c];
    }
  }
  const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  return x.graph().record(
      "layer_norm", std::move(out), {xi, gi, bi},
      [xi, gi, bi, R, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g,
                                                                              std::size_t self) {
        const auto& gy = g.grad_buffer(self);
        if (g.needs_grad(gi)) {
          auto& gg = g.grad_buffer(gi);
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) gg[c] += gy[r * C + c] * xhat[r * C + c];
        }
        if (g.needs_grad(bi)) {
          auto& gb = g.grad_buffer(bi);
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) gb[c] += gy[r * C + c];
        }
        if (g.needs_grad(xi)) {
          const Tensor& gv = g.value_of(gi);
          auto& gx = g.grad_buffer(xi);
          const double n = static_cast<double>(C);
          for (std::size_t r = 0; r < R; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
              const double d = gy[r * C + c] * gv[c];
              m1 += d;
              m2 += d * xhat[r * C + c];
            }
            m1 /= n;
            m2 /= n;
            for (std::size_t c = 0; c < C; ++c) {
              const double d = gy[r * C + c] * gv[c];
              gx[r * C + c] += inv_std[r] * (d - m1 - xhat[r * C + c] * m2);
            }
          }
        }
      });
}

// --------------------------------------------------------------------------- convolution

Var conv1d(Var x, Var kernel) {
  require_same_graph(x, kernel);
  require_matrix("conv1d", x);
  const Tensor& wv = kernel.value();
  if (wv.rank() != 3) {
    throw ShapeError("conv1d: kernel must be taps x c_in x c_out, got " + shape_to_string(wv.shape()));
  }
  const std::size_t taps = wv.shape()[0], c_in = wv.shape()[1], c_out = wv.shape()[2];
  if (taps % 2 == 0) {
    throw ConfigError("conv1d: kernel width must be odd for same padding, got " + std::to_string(taps));
  }
  if (x.cols() != c_in) {
    throw ShapeError("conv1d: input " + shape_to_string(x.shape()) + " does not match kernel " +
                     shape_to_string(wv.shape()));
  }
  const std::size_t T = x.rows();
  Tensor out({T, c_out});
  kernels::conv1d_forward(T, c_in, c_out, taps, x.value().data(), wv.data(), out.data());
  const std::size_t xi = x.id(), wi = kernel.id();
  return x.graph().record("conv1d", std::move(out), {xi, wi},
                          [xi, wi, T, c_in, c_out, taps](Graph& g, std::size_t self) {
                            const auto& gy = g.grad_buffer(self);
                            if (g.needs_grad(xi)) {
                              kernels::conv1d_backward_input(T, c_in, c_out, taps, gy.data(),
                                                             g.value_of(wi).data(),
                                                             g.grad_buffer(xi).data());
                            }
                            if (g.needs_grad(wi)) {
                              kernels::conv1d_backward_weight(T, c_in, c_out, taps,
                                                              g.value_of(xi).data(), gy.data(),
                                                              g.grad_buffer(wi).data());
                            }
                          });
}

// --------------------------------------------------------------------------- gradient reversal

Var gradient_reversal(Var x, double lambda) {
  if (!(lambda >= 0.0)) {
    throw ConfigError("gradient_reversal: lambda must be non-negative, got " + std::to_string(lambda));
  }
  Tensor out = x.value();
  out.drop_grad();
  const std::size_t xi = x.id();
  const double factor = -lambda;
  return x.graph().record("gradient_reversal", std::move(out), {xi},
                          [xi, factor](Graph& g, std::size_t self) {
                            if (!g.needs_grad(xi)) return;
                            const auto& gy = g.grad_buffer(self);
                            auto& gx = g.grad_buffer(xi);
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gy[i];
                          });
}

// --------------------------------------------------------------------------- shape plumbing

Var concat_cols(Var a, Var b) {
  require_same_graph(a, b);
  require_matrix("concat_cols", a);
  require_matrix("concat_cols", b);
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const std::size_t R = a.rows(), Ca = a.cols(), Cb = b.cols();
  Tensor out({R, Ca + Cb});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < R; ++r) {
    std::copy_n(av.data() + r * Ca, Ca, out.data() + r * (Ca + Cb));
    std::copy_n(bv.data() + r * Cb, Cb, out.data() + r * (Ca + Cb) + Ca);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record("concat_cols", std::move(out), {ai, bi},
                          [ai, bi, R, Ca, Cb](Graph& g, std::size_t self) {
                            const auto& gy = g.grad_buffer(self);
                            const std::size_t W = Ca + Cb;
                            if (g.needs_grad(ai)) {
                              auto& ga = g.grad_buffer(ai);
                              for (std::size_t r = 0; r < R; ++r)
                                for (std::size_t c = 0; c < Ca; ++c) ga[r * Ca + c] += gy[r * W + c];
                            }
                            if (g.needs_grad(bi)) {
                              auto& gb = g.grad_buffer(bi);
                              for (std::size_t r = 0; r < R; ++r)
                                for (std::size_t c = 0; c < Cb; ++c)
                                  gb[r * Cb + c] += gy[r * W + Ca + c];
                            }
                          });
}

Var slice_cols(Var x, std::size_t start, std::size_t width) {
  require_matrix("slice_cols", x);
  const std::size_t R = x.rows(), C = x.cols();
  if (width == 0 || start + width > C) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + width) +
                     ") out of range for " + shape_to_string(x.shape()));
  }
  Tensor out({R, width});
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < R; ++r) std::copy_n(xv.data() + r * C + start, width, out.data() + r * width);
  const std::size_t xi = x.id();
  return x.graph().record("slice_cols", std::move(out), {xi},
                          [xi, R, C, start, width](Graph& g, std::size_t self) {
                            if (!g.needs_grad(xi)) return;
                            const auto& gy = g.grad_buffer(self);
                            auto& gx = g.grad_buffer(xi);
                            for (std::size_t r = 0; r < R; ++r)
                              for (std::size_t c = 0; c < width; ++c)
                                gx[r * C + start + c] += gy[r * width + c];
                          });
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
  require_matrix("slice_rows", x);
  const std::size_t R = x.rows(), C = x.cols();
  if (count == 0 || start + count > R) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_to_string(x.shape()));
  }
  const Tensor& xv = x.value();
  Tensor out({count, C}, std::vector<double>(xv.data() + start * C, xv.data() + (start + count) * C));
  const std::size_t xi = x.id();
  return x.graph().record("slice_rows", std::move(out), {xi},
                          [xi, C, start, count](Graph& g, std::size_t self) {
                            if (!g.needs_grad(xi)) return;
                            const auto& gy = g.grad_buffer(self);
                            auto& gx = g.grad_buffer(xi);
                            for (std::size_t i = 0; i < count * C; ++i) gx[start * C + i] += gy[i];
                          });
}

Var broadcast_rows(Var v, std::size_t rows) {
  const Tensor& vv = v.value();
  if (vv.rows() != 1 || rows == 0) {
    throw ShapeError("broadcast_rows: expected a single row, got " + shape_to_string(vv.shape()));
  }
  const std::size_t C = vv.cols();
  Tensor out({rows, C});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(vv.data(), C, out.data() + r * C);
  const std::size_t vi = v.id();
  return v.graph().record("broadcast_rows", std::move(out), {vi}, [vi, rows, C](Graph& g, std::size_t self) {
    if (!g.needs_grad(vi)) return;
    const auto& gy = g.grad_buffer(self);
    auto& gv = g.grad_buffer(vi);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) gv[c] += gy[r * C + c];
  });
}

Var dropout(Var x, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  Graph& g = x.graph();
  if (!g.training() || rate == 0.0) return x;
  std::mt19937_64 rng(g.next_op_seed());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  const Tensor& xv = x.value();
  std::vector<double> mask(xv.size());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = u(rng) < rate ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  const std::size_t xi = x.id();
  return g.record("dropout", std::move(out), {xi}, [xi, mask = std::move(mask)](Graph& gr, std::size_t self) {
    if (!gr.needs_grad(xi)) return;
    const auto& gy = gr.grad_buffer(self);
    auto& gx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
  });
}

Var mask_rows(Var x, std::span<const double> mask) {
  const std::size_t R = x.rows(), C = x.cols();
  if (mask.size() != R) {
    throw ShapeError("mask_rows: mask of length " + std::to_string(mask.size()) + " for " +
                     shape_to_string(x.shape()));
  }
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  std::vector<double> m(mask.begin(), mask.end());
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = xv[r * C + c] * m[r];
  const std::size_t xi = x.id();
  return x.graph().record("mask_rows", std::move(out), {xi}, [xi, R, C, m = std::move(m)](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(xi);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += gy[r * C + c] * m[r];
  });
}

std::span<const std::string_view> differentiable_ops() {
  static constexpr std::array<std::string_view, 28> kOps = {
      "add",        "sub",         "mul",          "div",         "add_bias",     "scale",
      "add_scalar", "relu",        "tanh",         "exp",         "log",          "sqrt",
      "sum",        "mean",        "mean_rows",    "matmul",      "transpose",    "softmax",
      "log_softmax", "layer_norm", "conv1d",       "gradient_reversal", "concat_cols",
      "slice_cols", "slice_rows",  "broadcast_rows", "dropout",   "mask_rows"};
  return kOps;
}

namespace testing {
void set_corrupted_op(std::string op) { corrupted_op_storage() = std::move(op); }
const std::string& corrupted_op() { return corrupted_op_storage(); }
}  // namespace testing

}  // namespace fvc::ad
