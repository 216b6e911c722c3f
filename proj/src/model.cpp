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

#include "fvc/model.hpp"

#include <cmath>
#include <random>

#include "fvc/errors.hpp"

namespace fvc {

namespace {

// Additive score bias that removes padded keys from the softmax.
constexpr double kMaskedScore = -1e30;

std::string block_name(const char* stack, std::size_t i) {
  return std::string(stack) + "." + std::to_string(i);
}

void add_linear(ParameterSet& p, const std::string& prefix, std::size_t in, std::size_t out,
                std::mt19937_64& rng) {
  init_uniform_fan_in(p.add(prefix + ".weight", {in, out}), in, rng);
  p.add(prefix + ".bias", {out});
}

void add_conv(ParameterSet& p, const std::string& prefix, std::size_t taps, std::size_t in,
              std::size_t out, std::mt19937_64& rng) {
  init_uniform_fan_in(p.add(prefix + ".weight", {taps, in, out}), taps * in, rng);
  p.add(prefix + ".bias", {out});
}

void add_layer_norm(ParameterSet& p, const std::string& prefix, std::size_t d) {
  p.add(prefix + ".gamma", {d}, 1.0);
  p.add(prefix + ".beta", {d});
}

void add_block(ParameterSet& p, const std::string& prefix, const ModelConfig& cfg,
               std::mt19937_64& rng) {
  const std::size_t d = cfg.d_model;
  for (const char* proj : {"q", "k", "v", "o"}) add_linear(p, prefix + ".attn." + proj, d, d, rng);
  add_layer_norm(p, prefix + ".ln1", d);
  add_conv(p, prefix + ".conv1", cfg.conv_kernel, d, cfg.conv_hidden, rng);
  add_conv(p, prefix + ".conv2", cfg.conv_kernel, cfg.conv_hidden, d, rng);
  add_layer_norm(p, prefix + ".ln2", d);
}

ad::Var conv_layer(ForwardContext& ctx, const std::string& prefix, ad::Var x) {
  ad::Var y = ad::conv1d(ctx.apply_mask(x), ctx.param(prefix + ".weight"));
  return ad::add_bias(y, ctx.param(prefix + ".bias"));
}

ad::Var add_positions(ForwardContext& ctx, ad::Var x) {
  ad::Var pe = ctx.graph.constant(positional_encoding(x.rows(), x.cols()));
  return ctx.apply_mask(ad::add(x, pe));
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(n_blocks, "n_blocks");
  positive(n_heads, "n_heads");
  positive(conv_hidden, "conv_hidden");
  positive(prenet_hidden, "prenet_hidden");
  positive(postnet_channels, "postnet_channels");
  positive(n_mels, "n_mels");
  positive(d_linguistic, "d_linguistic");
  positive(d_speaker, "d_speaker");
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (d_model % 2 != 0) throw ConfigError("d_model must be even for the positional encoding");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (postnet_kernel % 2 == 0) throw ConfigError("postnet_kernel must be odd");
  if (postnet_layers < 2) throw ConfigError("postnet_layers must be at least 2");
  if (n_speakers < 2) throw ConfigError("n_speakers must be at least 2");
  if (!(grl_lambda >= 0.0)) throw ConfigError("grl_lambda must be non-negative");
  if (!(ecl_alpha >= 0.0)) throw ConfigError("ecl_alpha must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t d = d_model, K = conv_kernel, H = conv_hidden;
  const std::size_t L = d_linguistic, P = prenet_hidden, S = d_speaker, M = n_mels, N = n_speakers;
  const std::size_t C = postnet_channels, Kp = postnet_kernel;
  const std::size_t pre = L * P + P + P * d + d;
  const std::size_t block = 4 * (d * d + d) + 4 * d + K * d * H + H + K * H * d + d;
  const std::size_t spk = (d + S) * d + d;
  const std::size_t mel = d * M + M;
  const std::size_t post =
      Kp * (M * C + (postnet_layers - 2) * C * C + C * M) + (postnet_layers - 1) * C + M;
  const std::size_t cls = d * d + d + d * N + N;
  return pre + 2 * n_blocks * block + spk + mel + post + cls;
}

ParameterSet init_vc_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterSet p;
  add_linear(p, "prenet.fc1", cfg.d_linguistic, cfg.prenet_hidden, rng);
  add_linear(p, "prenet.fc2", cfg.prenet_hidden, cfg.d_model, rng);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) add_block(p, block_name("encoder", i), cfg, rng);
  add_linear(p, "speaker_proj", cfg.d_model + cfg.d_speaker, cfg.d_model, rng);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) add_block(p, block_name("decoder", i), cfg, rng);
  add_linear(p, "mel_proj", cfg.d_model, cfg.n_mels, rng);
  for (std::size_t l = 0; l < cfg.postnet_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.n_mels : cfg.postnet_channels;
    const std::size_t out = l + 1 == cfg.postnet_layers ? cfg.n_mels : cfg.postnet_channels;
    add_conv(p, "postnet." + std::to_string(l), cfg.postnet_kernel, in, out, rng);
  }
  add_linear(p, "classifier.hidden", cfg.d_model, cfg.d_model, rng);
  add_linear(p, "classifier.out", cfg.d_model, cfg.n_speakers, rng);
  return p;
}

Tensor positional_encoding(std::size_t T, std::size_t d) {
  if (d == 0 || d % 2 != 0) {
    throw ConfigError("positional encoding width must be even, got " + std::to_string(d));
  }
  Tensor pe({T, d});
  for (std::size_t pos = 0; pos < T; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      pe.at(pos, 2 * i) = std::sin(angle);
      pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

ad::Var ForwardContext::apply_mask(ad::Var x) const {
  if (mask.empty()) return x;
  return ad::mask_rows(x, mask);
}

ad::Var linear(ForwardContext& ctx, const std::string& prefix, ad::Var x) {
  return ad::add_bias(ad::matmul(x, ctx.param(prefix + ".weight")), ctx.param(prefix + ".bias"));
}

ad::Var prenet(ForwardContext& ctx, ad::Var x) {
  if (x.cols() != ctx.cfg.d_linguistic) {
    throw ShapeError("prenet: expected " + std::to_string(ctx.cfg.d_linguistic) +
                     " input columns, got " + shape_to_string(x.shape()));
  }
  ad::Var h = ad::dropout(ad::relu(linear(ctx, "prenet.fc1", x)), ctx.cfg.dropout);
  return ad::dropout(ad::relu(linear(ctx, "prenet.fc2", h)), ctx.cfg.dropout);
}

AttentionOutput multi_head_self_attention(ForwardContext& ctx, const std::string& prefix, ad::Var x) {
  const std::size_t T = x.rows(), d = x.cols(), heads = ctx.cfg.n_heads;
  if (d != ctx.cfg.d_model || d % heads != 0) {
    throw ShapeError("attention: input " + shape_to_string(x.shape()) + " incompatible with d_model " +
                     std::to_string(ctx.cfg.d_model) + " and " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  ad::Var q = linear(ctx, prefix + ".q", x);
  ad::Var k = linear(ctx, prefix + ".k", x);
  ad::Var v = linear(ctx, prefix + ".v", x);

  ad::Var key_bias;
  if (!ctx.mask.empty()) {
    Tensor bias({T, T});
    for (std::size_t r = 0; r < T; ++r)
      for (std::size_t c = 0; c < T; ++c) bias.at(r, c) = ctx.mask[c] > 0.0 ? 0.0 : kMaskedScore;
    key_bias = ctx.graph.constant(std::move(bias));
  }

  AttentionOutput out;
  ad::Var merged;
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, dh);
    ad::Var kh = ad::slice_cols(k, h * dh, dh);
    ad::Var vh = ad::slice_cols(v, h * dh, dh);
    ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (key_bias.valid()) scores = ad::add(scores, key_bias);
    ad::Var w = ad::softmax(scores);
    out.weights.push_back(w);
    ad::Var head = ad::matmul(w, vh);
    merged = merged.valid() ? ad::concat_cols(merged, head) : head;
  }
  out.output = linear(ctx, prefix + ".o", merged);
  return out;
}

ad::Var ffn_block(ForwardContext& ctx, const std::string& prefix, ad::Var x) {
  const double rate = ctx.cfg.dropout;
  ad::Var attn = multi_head_self_attention(ctx, prefix + ".attn", x).output;
  ad::Var h = ad::layer_norm(ad::add(x, ad::dropout(attn, rate)), ctx.param(prefix + ".ln1.gamma"),
                             ctx.param(prefix + ".ln1.beta"));
  h = ctx.apply_mask(h);
  ad::Var c = ad::relu(conv_layer(ctx, prefix + ".conv1", h));
  c = conv_layer(ctx, prefix + ".conv2", c);
  ad::Var y = ad::layer_norm(ad::add(h, ad::dropout(c, rate)), ctx.param(prefix + ".ln2.gamma"),
                             ctx.param(prefix + ".ln2.beta"));
  return ctx.apply_mask(y);
}

ad::Var condition_on_speaker(ForwardContext& ctx, ad::Var enc_out, ad::Var speaker) {
  if (speaker.size() != ctx.cfg.d_speaker || speaker.rows() != 1) {
    throw ShapeError("speaker embedding must be 1 x " + std::to_string(ctx.cfg.d_speaker) + ", got " +
                     shape_to_string(speaker.shape()));
  }
  ad::Var spk_rows = ad::broadcast_rows(speaker, enc_out.rows());
  return linear(ctx, "speaker_proj", ad::concat_cols(enc_out, spk_rows));
}

ad::Var adversarial_classifier(ForwardContext& ctx, ad::Var enc_out) {
  ad::Var x = ctx.cfg.use_grl ? ad::gradient_reversal(enc_out, ctx.cfg.grl_lambda) : enc_out;
  ad::Var h = ad::relu(linear(ctx, "classifier.hidden", x));
  return linear(ctx, "classifier.out", h);
}

ad::Var postnet(ForwardContext& ctx, ad::Var mel_pre) {
  ad::Var h = mel_pre;
  const std::size_t layers = ctx.cfg.postnet_layers;
  for (std::size_t l = 0; l < layers; ++l) {
    h = conv_layer(ctx, "postnet." + std::to_string(l), h);
    if (l + 1 < layers) h = ad::tanh(h);
  }
  return ad::add(mel_pre, h);
}

ad::Var encode(ForwardContext& ctx, ad::Var feats) {
  if (feats.rows() == 0) throw LengthError("forward: empty input sequence");
  if (!ctx.mask.empty() && ctx.mask.size() != feats.rows()) {
    throw ShapeError("frame mask length does not match the input frame count");
  }
  ad::Var x = add_positions(ctx, prenet(ctx, feats));
  for (std::size_t i = 0; i < ctx.cfg.n_blocks; ++i) x = ffn_block(ctx, block_name("encoder", i), x);
  return x;
}

ForwardOutputs forward(ForwardContext& ctx, ad::Var feats, ad::Var speaker) {
  ForwardOutputs out;
  out.encoder_out = encode(ctx, feats);
  out.adv_logits = adversarial_classifier(ctx, out.encoder_out);
  ad::Var x = add_positions(ctx, condition_on_speaker(ctx, out.encoder_out, speaker));
  for (std::size_t i = 0; i < ctx.cfg.n_blocks; ++i) x = ffn_block(ctx, block_name("decoder", i), x);
  out.mel_pre = ctx.apply_mask(linear(ctx, "mel_proj", x));
  out.mel_post = ctx.apply_mask(postnet(ctx, out.mel_pre));
  return out;
}

}  // namespace fvc
