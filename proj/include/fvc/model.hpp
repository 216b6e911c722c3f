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

// Non-autoregressive conversion network.
//
//   linguistic features (T x d_linguistic)
//     -> PreNet -> + positional encoding -> encoder blocks -> encoder output
//          |-> gradient reversal -> speaker classifier (framewise logits)
//     -> concat speaker embedding, linear back to d_model
//     -> + positional encoding -> decoder blocks -> linear to n_mels (mel_pre)
//     -> PostNet residual (mel_post)
//
// There is no length regulator: output frame count always equals input frame count.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fvc/autodiff.hpp"
#include "fvc/parameters.hpp"

namespace fvc {

struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t n_blocks = 4;
  std::size_t n_heads = 2;
  std::size_t conv_kernel = 9;
  std::size_t conv_hidden = 512;
  std::size_t prenet_hidden = 256;
  std::size_t postnet_layers = 5;
  std::size_t postnet_channels = 256;
  std::size_t postnet_kernel = 5;
  std::size_t n_mels = 80;
  std::size_t d_linguistic = 256;
  std::size_t d_speaker = 64;
  std::size_t n_speakers = 2;
  double grl_lambda = 1.0;
  double ecl_alpha = 5.0;
  double dropout = 0.1;
  /// When false the classifier reads the encoder output directly (no reversal).
  bool use_grl = true;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  /// Closed-form learnable parameter count.
  ///
  ///   prenet      L*P + P + P*d + d
  ///   block       4(d^2 + d) + 4d + K*d*H + H + K*H*d + d     (attention, 2 layer norms, 2 convs)
  ///   speaker     (d + S)*d + d
  ///   mel         d*M + M
  ///   postnet     Kp*(M*C + (n_post - 2)*C^2 + C*M) + (n_post - 1)*C + M
  ///   classifier  d^2 + d + d*N + N
  ///
  /// with 2 * n_blocks blocks (encoder + decoder).
  std::size_t parameter_count() const;
};

/// Builds and seeds every tensor of the network: uniform(+-sqrt(1/fan_in)) weights,
/// zero biases, unit layer-norm gains.
ParameterSet init_vc_params(const ModelConfig& cfg, std::uint64_t seed);

/// Sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(...).
Tensor positional_encoding(std::size_t T, std::size_t d);

/// Row validity for padded batches: 1 for real frames, 0 for padding. Empty means all valid.
using FrameMask = std::vector<double>;

/// Bundles what every sub-network needs while recording one forward pass.
struct ForwardContext {
  ad::Graph& graph;
  ParameterSet& params;
  const ModelConfig& cfg;
  std::span<const double> mask = {};

  ad::Var param(const std::string& name) { return graph.parameter(params.at(name)); }
  /// Zeroes padded rows; no-op for unpadded input.
  ad::Var apply_mask(ad::Var x) const;
};

/// Linear layer: x W + b with weight "<prefix>.weight" and bias "<prefix>.bias".
ad::Var linear(ForwardContext& ctx, const std::string& prefix, ad::Var x);

/// Two framewise (linear -> relu -> dropout) layers.
ad::Var prenet(ForwardContext& ctx, ad::Var x);

struct AttentionOutput {
  ad::Var output;
  std::vector<ad::Var> weights;  // one T x T row-stochastic matrix per head
};

/// Full-context scaled dot-product self-attention (no causal mask). Padded keys
/// are excluded through ctx.mask.
AttentionOutput multi_head_self_attention(ForwardContext& ctx, const std::string& prefix, ad::Var x);

/// One encoder/decoder block: attention sublayer and two-conv sublayer, each with
/// dropout, residual connection and layer normalisation.
ad::Var ffn_block(ForwardContext& ctx, const std::string& prefix, ad::Var x);

/// Broadcast the 1 x d_speaker embedding to every frame, concatenate and project back to d_model.
ad::Var condition_on_speaker(ForwardContext& ctx, ad::Var enc_out, ad::Var speaker);

/// GRL(lambda) -> linear + relu -> linear to n_speakers. Returns framewise logits.
ad::Var adversarial_classifier(ForwardContext& ctx, ad::Var enc_out);

/// Five-layer conv residual: tanh after every layer but the last, output added to mel_pre.
ad::Var postnet(ForwardContext& ctx, ad::Var mel_pre);

struct ForwardOutputs {
  ad::Var encoder_out;
  ad::Var mel_pre;
  ad::Var mel_post;
  ad::Var adv_logits;
};

/// Full network. `speaker` is a 1 x d_speaker row. Throws LengthError on empty input.
ForwardOutputs forward(ForwardContext& ctx, ad::Var feats, ad::Var speaker);

/// Encoder half only (PreNet, positional encoding, encoder blocks).
ad::Var encode(ForwardContext& ctx, ad::Var feats);

}  // namespace fvc
