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

#include "fvc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fvc/errors.hpp"
#include "fvc/model.hpp"
#include "fvc/speaker_encoder.hpp"

namespace fvc::gradcheck {

namespace {

using ad::Graph;
using ad::Var;

constexpr double kOpTolerance = 1e-4;
constexpr double kModelTolerance = 1e-3;
// Central differences carry roughly 1e-10 * |loss| of rounding noise, so gradients
// that are exactly zero (such as the key bias under softmax) are compared absolutely.
constexpr double kAbsoluteBelow = 1e-7;

double tensor_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, amax = 0.0, nmax = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    amax = std::max(amax, std::abs(analytic[i]));
    nmax = std::max(nmax, std::abs(numeric[i]));
  }
  const double denom = std::max(amax, nmax);
  return denom < kAbsoluteBelow ? diff : diff / denom;
}

class Checker {
 public:
  Checker(const Builder& build, std::vector<Tensor>& inputs, ParameterSet* params, const Options& opt)
      : build_(build), inputs_(inputs), params_(params), opt_(opt) {}

  double run() {
    std::vector<std::vector<double>> analytic;
    evaluate(&analytic);
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      worst = std::max(worst, tensor_error(analytic[i], numeric(inputs_[i])));
    }
    if (params_ != nullptr) {
      std::size_t k = inputs_.size();
      for (auto& [name, t] : params_->tensors()) {
        if (!t.requires_grad()) continue;
        worst = std::max(worst, tensor_error(analytic[k++], numeric(t)));
      }
    }
    return worst;
  }

 private:
  double evaluate(std::vector<std::vector<double>>* grads) {
    Graph g(opt_.training, opt_.graph_seed);
    std::vector<Var> vars;
    for (const auto& t : inputs_) vars.push_back(g.input(t));
    Var out = build_(g, vars);
    if (projection_.empty()) {
      std::mt19937_64 rng(opt_.projection_seed);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      projection_ = Tensor(out.shape());
      for (auto& v : projection_.values()) v = u(rng);
    }
    Var loss = ad::sum(ad::mul(out, g.constant_ref(projection_)));
    if (grads != nullptr) {
      if (params_ != nullptr) params_->zero_grad();
      g.backward(loss);
      for (const auto& v : vars) {
        auto gr = g.grad(v);
        grads->emplace_back(gr.begin(), gr.end());
        if (grads->back().empty()) grads->back().assign(v.size(), 0.0);
      }
      if (params_ != nullptr) {
        for (auto& [name, t] : params_->tensors()) {
          if (!t.requires_grad()) continue;
          grads->emplace_back(t.grad().begin(), t.grad().end());
        }
      }
    }
    return loss.value()[0];
  }

  std::vector<double> numeric(Tensor& t) {
    std::vector<double> out(t.size());
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double x0 = t[j];
      t[j] = x0 + opt_.step;
      const double fp = evaluate(nullptr);
      t[j] = x0 - opt_.step;
      const double fm = evaluate(nullptr);
      t[j] = x0;
      out[j] = opt_.expected_scale * (fp - fm) / (2.0 * opt_.step);
    }
    return out;
  }

  const Builder& build_;
  std::vector<Tensor>& inputs_;
  ParameterSet* params_;
  const Options& opt_;
  Tensor projection_;
};

// Random test data ---------------------------------------------------------------------------

struct Rand {
  std::mt19937_64 rng;
  explicit Rand(std::uint64_t seed) : rng(seed) {}
  std::size_t dim(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  Tensor uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(rng);
    return t;
  }
  std::uint64_t seed() { return rng(); }
};

struct OpCase {
  std::string name;
  std::function<std::pair<Builder, std::vector<Tensor>>(Rand&, Options&)> make;
};

Builder unary(Var (*f)(Var)) {
  return [f](Graph&, std::span<const Var> v) { return f(v[0]); };
}

Builder binary(Var (*f)(Var, Var)) {
  return [f](Graph&, std::span<const Var> v) { return f(v[0], v[1]); };
}

std::vector<OpCase> op_cases() {
  using Made = std::pair<Builder, std::vector<Tensor>>;
  std::vector<OpCase> c;
  auto elementwise = [&](const std::string& name, Var (*f)(Var, Var), double lo, double hi) {
    c.push_back({name, [=](Rand& r, Options&) -> Made {
                   const Shape s = {r.dim(1, 4), r.dim(1, 5)};
                   return {binary(f), {r.uniform(s), r.uniform(s, lo, hi)}};
                 }});
  };
  elementwise("add", ad::add, -1.0, 1.0);
  elementwise("sub", ad::sub, -1.0, 1.0);
  elementwise("mul", ad::mul, -1.0, 1.0);
  elementwise("div", ad::div, 0.5, 2.0);
  c.push_back({"add_bias", [](Rand& r, Options&) -> Made {
                 const std::size_t d = r.dim(1, 5);
                 return {binary(ad::add_bias), {r.uniform({r.dim(1, 4), d}), r.uniform({d})}};
               }});
  c.push_back({"scale", [](Rand& r, Options&) -> Made {
                 const double k = std::uniform_real_distribution<double>(-2.0, 2.0)(r.rng);
                 return {[k](Graph&, std::span<const Var> v) { return ad::scale(v[0], k); },
                         {r.uniform({r.dim(1, 4), r.dim(1, 5)})}};
               }});
  c.push_back({"add_scalar", [](Rand& r, Options&) -> Made {
                 const double k = std::uniform_real_distribution<double>(-2.0, 2.0)(r.rng);
                 return {[k](Graph&, std::span<const Var> v) { return ad::add_scalar(v[0], k); },
                         {r.uniform({r.dim(1, 4), r.dim(1, 5)})}};
               }});
  auto pointwise = [&](const std::string& name, Var (*f)(Var), double lo, double hi) {
    c.push_back({name, [=](Rand& r, Options&) -> Made {
                   return {unary(f), {r.uniform({r.dim(1, 4), r.dim(1, 5)}, lo, hi)}};
                 }});
  };
  pointwise("relu", ad::relu, -1.0, 1.0);
  pointwise("tanh", ad::tanh, -2.0, 2.0);
  pointwise("exp", ad::exp, -2.0, 2.0);
  pointwise("log", ad::log, 0.2, 3.0);
  pointwise("sqrt", ad::sqrt, 0.2, 3.0);
  pointwise("sum", ad::sum, -1.0, 1.0);
  pointwise("mean", ad::mean, -1.0, 1.0);
  pointwise("mean_rows", ad::mean_rows, -1.0, 1.0);
  pointwise("transpose", ad::transpose, -1.0, 1.0);
  pointwise("softmax", ad::softmax, -3.0, 3.0);
  pointwise("log_softmax", ad::log_softmax, -3.0, 3.0);
  c.push_back({"matmul", [](Rand& r, Options&) -> Made {
                 const std::size_t m = r.dim(1, 4), k = r.dim(1, 5), n = r.dim(1, 4);
                 return {binary(ad::matmul), {r.uniform({m, k}), r.uniform({k, n})}};
               }});
  c.push_back({"layer_norm", [](Rand& r, Options&) -> Made {
                 const std::size_t d = r.dim(3, 6);
                 return {[](Graph&, std::span<const Var> v) { return ad::layer_norm(v[0], v[1], v[2]); },
                         {r.uniform({r.dim(1, 4), d}, -2.0, 2.0), r.uniform({d}, 0.5, 1.5), r.uniform({d})}};
               }});
  c.push_back({"conv1d", [](Rand& r, Options&) -> Made {
                 const std::size_t taps = 2 * r.dim(0, 2) + 1, ci = r.dim(1, 3), co = r.dim(1, 3);
                 return {binary(ad::conv1d), {r.uniform({r.dim(1, 6), ci}), r.uniform({taps, ci, co})}};
               }});
  c.push_back({"gradient_reversal", [](Rand& r, Options& opt) -> Made {
                 const double lambda = 0.5 * static_cast<double>(r.dim(0, 2));
                 opt.expected_scale = -lambda;
                 return {[lambda](Graph&, std::span<const Var> v) { return ad::gradient_reversal(v[0], lambda); },
                         {r.uniform({r.dim(1, 4), r.dim(1, 5)})}};
               }});
  c.push_back({"concat_cols", [](Rand& r, Options&) -> Made {
                 const std::size_t rows = r.dim(1, 4);
                 return {binary(ad::concat_cols), {r.uniform({rows, r.dim(1, 4)}), r.uniform({rows, r.dim(1, 4)})}};
               }});
  c.push_back({"slice_cols", [](Rand& r, Options&) -> Made {
                 const std::size_t cols = r.dim(1, 6), start = r.dim(0, cols - 1), width = r.dim(1, cols - start);
                 return {[=](Graph&, std::span<const Var> v) { return ad::slice_cols(v[0], start, width); },
                         {r.uniform({r.dim(1, 4), cols})}};
               }});
  c.push_back({"slice_rows", [](Rand& r, Options&) -> Made {
                 const std::size_t rows = r.dim(1, 6), start = r.dim(0, rows - 1), count = r.dim(1, rows - start);
                 return {[=](Graph&, std::span<const Var> v) { return ad::slice_rows(v[0], start, count); },
                         {r.uniform({rows, r.dim(1, 4)})}};
               }});
  c.push_back({"broadcast_rows", [](Rand& r, Options&) -> Made {
                 const std::size_t rows = r.dim(1, 5);
                 return {[rows](Graph&, std::span<const Var> v) { return ad::broadcast_rows(v[0], rows); },
                         {r.uniform({1, r.dim(1, 5)})}};
               }});
  c.push_back({"dropout", [](Rand& r, Options& opt) -> Made {
                 opt.training = true;
                 opt.graph_seed = r.seed();
                 const double rate = std::uniform_real_distribution<double>(0.1, 0.6)(r.rng);
                 return {[rate](Graph&, std::span<const Var> v) { return ad::dropout(v[0], rate); },
                         {r.uniform({r.dim(1, 4), r.dim(1, 5)})}};
               }});
  c.push_back({"mask_rows", [](Rand& r, Options&) -> Made {
                 const std::size_t rows = r.dim(1, 5);
                 std::vector<double> mask(rows);
                 for (auto& m : mask) m = static_cast<double>(r.dim(0, 1));
                 return {[mask](Graph&, std::span<const Var> v) { return ad::mask_rows(v[0], mask); },
                         {r.uniform({rows, r.dim(1, 4)})}};
               }});
  return c;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.conv_kernel = 3;
  cfg.conv_hidden = 8;
  cfg.prenet_hidden = 8;
  cfg.postnet_layers = 3;
  cfg.postnet_channels = 4;
  cfg.postnet_kernel = 3;
  cfg.n_mels = 5;
  cfg.d_linguistic = 6;
  cfg.d_speaker = 3;
  cfg.n_speakers = 2;
  cfg.dropout = 0.0;
  // The reversal's -lambda factor is checked on its own; here the classifier reads the encoder directly.
  cfg.use_grl = false;
  return cfg;
}

using ModelBuilder = std::function<Var(ForwardContext&, std::span<const Var>)>;

CheckResult check_composite(const std::string& name, int trials, double tolerance, std::uint64_t seed,
                            const std::function<std::vector<Tensor>(Rand&, const ModelConfig&)>& make_inputs,
                            const ModelBuilder& body) {
  CheckResult res{name, 0.0, tolerance, trials};
  const ModelConfig cfg = tiny_config();
  for (int t = 0; t < trials; ++t) {
    Rand r(seed + static_cast<std::uint64_t>(t));
    ParameterSet params = init_vc_params(cfg, r.seed());
    // Non-trivial biases and gains so every path carries gradient.
    for (auto& [pname, tensor] : params.tensors()) {
      if (pname.ends_with(".bias") || pname.ends_with(".beta")) {
        for (auto& v : tensor.values()) v = std::uniform_real_distribution<double>(-0.2, 0.2)(r.rng);
      }
    }
    Builder build = [&](Graph& g, std::span<const Var> v) {
      ForwardContext ctx{g, params, cfg};
      return body(ctx, v);
    };
    Options opt;
    opt.projection_seed = r.seed();
    res.worst_error = std::max(res.worst_error, max_relative_error(build, make_inputs(r, cfg), params, opt));
  }
  return res;
}

}  // namespace

double max_relative_error(const Builder& build, std::vector<Tensor> inputs, const Options& opt) {
  return Checker(build, inputs, nullptr, opt).run();
}

double max_relative_error(const Builder& build, std::vector<Tensor> inputs, ParameterSet& params,
                          const Options& opt) {
  return Checker(build, inputs, &params, opt).run();
}

std::vector<CheckResult> run_suite(std::uint64_t seed, int trials_per_op) {
  std::vector<CheckResult> results;
  std::uint64_t case_index = 0;
  for (const auto& op : op_cases()) {
    CheckResult res{op.name, 0.0, kOpTolerance, trials_per_op};
    for (int t = 0; t < trials_per_op; ++t) {
      Rand r(seed * 1000003 + case_index * 7919 + static_cast<std::uint64_t>(t));
      Options opt;
      opt.projection_seed = r.seed();
      auto [build, inputs] = op.make(r, opt);
      res.worst_error = std::max(res.worst_error, max_relative_error(build, std::move(inputs), opt));
    }
    results.push_back(res);
    ++case_index;
  }

  const std::uint64_t base = seed * 1000003 + 1000;
  const int composite_trials = std::max(1, trials_per_op / 10);
  const auto frames = [](Rand& r, std::size_t cols) { return r.uniform({4, cols}); };

  results.push_back(check_composite(
      "prenet", composite_trials, kOpTolerance, base + 100,
      [&](Rand& r, const ModelConfig& cfg) { return std::vector<Tensor>{frames(r, cfg.d_linguistic)}; },
      [](ForwardContext& ctx, std::span<const Var> v) { return prenet(ctx, v[0]); }));
  results.push_back(check_composite(
      "multi_head_self_attention", composite_trials, kOpTolerance, base + 200,
      [&](Rand& r, const ModelConfig& cfg) { return std::vector<Tensor>{frames(r, cfg.d_model)}; },
      [](ForwardContext& ctx, std::span<const Var> v) {
        return multi_head_self_attention(ctx, "encoder.0.attn", v[0]).output;
      }));
  results.push_back(check_composite(
      "ffn_block", composite_trials, kOpTolerance, base + 300,
      [&](Rand& r, const ModelConfig& cfg) { return std::vector<Tensor>{frames(r, cfg.d_model)}; },
      [](ForwardContext& ctx, std::span<const Var> v) { return ffn_block(ctx, "encoder.0", v[0]); }));
  results.push_back(check_composite(
      "postnet", composite_trials, kOpTolerance, base + 400,
      [&](Rand& r, const ModelConfig& cfg) { return std::vector<Tensor>{frames(r, cfg.n_mels)}; },
      [](ForwardContext& ctx, std::span<const Var> v) { return postnet(ctx, v[0]); }));

  {
    CheckResult res{"speaker_encoder", 0.0, kOpTolerance, composite_trials};
    for (int t = 0; t < composite_trials; ++t) {
      Rand r(base + 500 + static_cast<std::uint64_t>(t));
      SpeakerEncoderConfig cfg;
      cfg.n_mels = 5;
      cfg.hidden = 4;
      cfg.embedding_dim = 3;
      cfg.n_speakers = 2;
      SpeakerEncoder enc(cfg, r.seed());
      for (const char* layer : {"frame1.bias", "frame2.bias"}) {
        for (auto& v : enc.params().at(layer).values()) v = std::uniform_real_distribution<double>(0.0, 0.3)(r.rng);
      }
      Builder build = [&](Graph& g, std::span<const Var> v) { return enc.classify(g, enc.embed(g, v[0])); };
      Options opt;
      opt.projection_seed = r.seed();
      res.worst_error =
          std::max(res.worst_error, max_relative_error(build, {r.uniform({5, cfg.n_mels})}, enc.params(), opt));
    }
    results.push_back(res);
  }

  {
    CheckResult res{"embedding_consistency_loss", 0.0, kOpTolerance, trials_per_op};
    for (int t = 0; t < trials_per_op; ++t) {
      Rand r(base + 600 + static_cast<std::uint64_t>(t));
      const Tensor ref = r.uniform({1, 4});
      Builder build = [&ref](Graph&, std::span<const Var> v) { return embedding_consistency_loss(v[0], ref); };
      res.worst_error = std::max(res.worst_error, max_relative_error(build, {r.uniform({1, 4})}));
    }
    results.push_back(res);
  }

  results.push_back(check_composite(
      "whole_model", std::max(1, trials_per_op / 50), kModelTolerance, base + 700,
      [&](Rand& r, const ModelConfig& cfg) {
        return std::vector<Tensor>{frames(r, cfg.d_linguistic), r.uniform({1, cfg.d_speaker})};
      },
      [](ForwardContext& ctx, std::span<const Var> v) {
        ForwardOutputs out = forward(ctx, v[0], v[1]);
        return ad::concat_cols(out.mel_post, out.adv_logits);
      }));
  return results;
}

}  // namespace fvc::gradcheck
