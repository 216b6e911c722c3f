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

// Define-by-run reverse-mode automatic differentiation.
//
// A Graph is a tape: every op appends one node whose inputs already exist, so
// node order is a topological order by construction. backward() walks the tape
// once in reverse. Parameters live outside the graph; their gradients are
// added into Tensor::grad() when backward() finishes, so a fresh Graph per
// training step is cheap and nothing persists between steps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fvc/tensor.hpp"

namespace fvc::ad {

class Graph;

/// Handle to one node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  /// Propagates node `self`'s gradient into its inputs' gradient buffers.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(bool training = false, std::uint64_t seed = 0)
      : training_(training), seed_(seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf without gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is kept in the graph (read with grad()).
  Var input(Tensor value);
  /// Leaf backed by an external tensor. If `param.requires_grad()`, backward()
  /// adds dLoss/dparam into param.grad(). Registering the same tensor twice
  /// returns the same node.
  Var parameter(Tensor& param);
  /// Leaf that reads an external tensor without ever taking its gradient.
  Var constant_ref(const Tensor& value);

  /// Appends an op node. Used by the op implementations.
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  /// Reverse sweep from a scalar loss. Throws ContractError for non-scalar losses.
  void backward(Var loss);

  /// Gradient of the last backward() with respect to node v (empty if none reached it).
  std::span<const double> grad(Var v) const;

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }
  /// Seed for the next stochastic op; advances a per-graph counter.
  std::uint64_t next_op_seed();

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }

  // Accessors for op implementations.
  const Tensor& value_of(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of a node, zero-allocated on first use.
  std::vector<double>& grad_buffer(std::size_t id);
  const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_[id].inputs; }
  Var var(std::size_t id) { return Var(this, id); }

 private:
  struct Node {
    std::string op;
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* param = nullptr;
    std::vector<std::size_t> inputs;
    std::vector<double> grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_index_;
  bool training_;
  std::uint64_t seed_;
  std::uint64_t op_counter_ = 0;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Binary elementwise ops require identical shapes: the
// only broadcast is add_bias (a row vector added to every row).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var add_scalar(Var x, double c);
Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
/// Sum of all elements, shape {1}.
Var sum(Var x);
/// Mean of all elements, shape {1}.
Var mean(Var x);
/// Column means over rows: T x d -> 1 x d.
Var mean_rows(Var x);
Var matmul(Var a, Var b);
Var transpose(Var x);
/// Softmax over the last axis, max-subtracted.
Var softmax(Var x);
Var log_softmax(Var x);
/// Row-wise normalisation with biased variance, then gamma * xhat + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// x: T x c_in, kernel: taps x c_in x c_out, zero "same" padding. taps must be odd.
Var conv1d(Var x, Var kernel);
/// Identity forward; backward multiplies the upstream gradient by -lambda.
Var gradient_reversal(Var x, double lambda);
/// Concatenate along the last axis (2-D).
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, std::size_t start, std::size_t width);
Var slice_rows(Var x, std::size_t start, std::size_t count);
/// Repeat a 1 x d (or {d}) row vector into `rows` x d.
Var broadcast_rows(Var v, std::size_t rows);
/// Inverted dropout; identity when the graph is not training or rate == 0.
Var dropout(Var x, double rate);
/// Multiplies row r by mask[r]; used to zero padded frames.
Var mask_rows(Var x, std::span<const double> mask);

/// Names of every differentiable op above, used to check gradcheck coverage.
std::span<const std::string_view> differentiable_ops();

namespace testing {
/// Scales the upstream gradient seen by `op`'s backward by 1.01 (empty disables).
/// Only used to prove the finite-difference suite catches a broken backward.
void set_corrupted_op(std::string op);
const std::string& corrupted_op();
}  // namespace testing

}  // namespace fvc::ad
