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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "fvc/errors.hpp"
#include "fvc/model.hpp"
#include "fvc/training.hpp"

namespace fvc {
namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_blocks = 2;
  c.n_heads = 2;
  c.conv_kernel = 3;
  c.conv_hidden = 16;
  c.prenet_hidden = 16;
  c.postnet_layers = 5;
  c.postnet_channels = 8;
  c.postnet_kernel = 5;
  c.n_speakers = 4;
  c.dropout = 0.0;
  return c;
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void zero_prefix(ParameterSet& p, const std::string& prefix) {
  for (auto& [name, t] : p.tensors())
    if (name.rfind(prefix, 0) == 0) std::fill(t.values().begin(), t.values().end(), 0.0);
}

ForwardOutputs run(ParameterSet& p, const ModelConfig& c, ad::Graph& g, const Tensor& feats, const Tensor& spk) {
  ForwardContext ctx{g, p, c};
  return forward(ctx, g.constant(feats), g.constant(spk));
}

// ----------------------------------------------------------------------------- config

TEST(ModelConfig, DefaultsAndValidation) {
  const ModelConfig c;
  EXPECT_EQ(c.grl_lambda, 1.0);
  EXPECT_EQ(c.ecl_alpha, 5.0);
  EXPECT_EQ(c.d_model % c.n_heads, 0u);
  c.validate();
  ModelConfig bad = c;
  bad.n_heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.grl_lambda = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ModelConfig, ParameterCountMatchesTensorsAndHandFormula) {
  for (const ModelConfig& c : {ModelConfig{}, small_config()}) {
    const ParameterSet p = init_vc_params(c, 1);
    EXPECT_EQ(p.parameter_count(), c.parameter_count());
    const std::size_t d = c.d_model, H = c.conv_hidden, K = c.conv_kernel, M = c.n_mels, C = c.postnet_channels;
    const std::size_t prenet = c.d_linguistic * c.prenet_hidden + c.prenet_hidden + c.prenet_hidden * d + d;
    const std::size_t block = 4 * (d * d + d) + 2 * 2 * d + K * d * H + H + K * H * d + d;
    const std::size_t post = c.postnet_kernel * (M * C + (c.postnet_layers - 2) * C * C + C * M) +
                             (c.postnet_layers - 1) * C + M;
    const std::size_t total = prenet + 2 * c.n_blocks * block + (d + c.d_speaker) * d + d + d * M + M + post +
                              d * d + d + d * c.n_speakers + c.n_speakers;
    EXPECT_EQ(c.parameter_count(), total);
  }
}

// ----------------------------------------------------------------------------- positional encoding

TEST(PositionalEncoding, KnownValuesAndRotation) {
  const Tensor pe = positional_encoding(20, 16);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(pe.at(0, 2 * i), 0.0);
    EXPECT_EQ(pe.at(0, 2 * i + 1), 1.0);
  }
  EXPECT_NEAR(pe.at(1, 0), 0.841471, 1e-6);
  const std::size_t k = 3;
  for (std::size_t pos = 0; pos + k < 20; ++pos) {
    for (std::size_t i = 0; i < 8; ++i) {
      const double w = 1.0 / std::pow(10000.0, 2.0 * static_cast<double>(i) / 16.0);
      const double c = std::cos(k * w), s = std::sin(k * w);
      EXPECT_NEAR(pe.at(pos + k, 2 * i), c * pe.at(pos, 2 * i) + s * pe.at(pos, 2 * i + 1), 1e-12);
      EXPECT_NEAR(pe.at(pos + k, 2 * i + 1), c * pe.at(pos, 2 * i + 1) - s * pe.at(pos, 2 * i), 1e-12);
    }
  }
  EXPECT_THROW(positional_encoding(4, 7), ConfigError);
}

// ----------------------------------------------------------------------------- sub-networks

TEST(Prenet, ZeroInputShapeAndWidthCheck) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 2);
  ad::Graph g;
  ForwardContext ctx{g, p, c};
  const Tensor out = prenet(ctx, g.constant(Tensor({7, 256}))).value();
  EXPECT_EQ(out.shape(), (Shape{7, c.d_model}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(prenet(ctx, g.constant(Tensor({7, 255}))), ShapeError);
}

TEST(Attention, WeightsAreRowStochastic) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 3);
  ad::Graph g;
  ForwardContext ctx{g, p, c};
  const auto out = multi_head_self_attention(ctx, "encoder.0.attn", g.constant(random_tensor({13, 16}, 4)));
  ASSERT_EQ(out.weights.size(), 2u);
  for (const auto& w : out.weights) {
    ASSERT_EQ(w.value().shape(), (Shape{13, 13}));
    for (std::size_t r = 0; r < 13; ++r) {
      double s = 0.0;
      for (double v : w.value().row(r)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Attention, IdenticalRowsGiveUniformWeightsAndSingleFrameIsOne) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 3);
  ad::Graph g;
  ForwardContext ctx{g, p, c};
  const Tensor row = random_tensor({1, 16}, 5);
  Tensor same({6, 16});
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 16; ++j) same.at(t, j) = row.at(0, j);
  for (const auto& w : multi_head_self_attention(ctx, "encoder.0.attn", g.constant(same)).weights)
    for (double v : w.value().values()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-12);

  const auto single = multi_head_self_attention(ctx, "encoder.0.attn", g.constant(row));
  for (const auto& w : single.weights) EXPECT_EQ(w.value().at(0, 0), 1.0);
  // Output = (x W_v + b_v) W_o + b_o.
  const Tensor& wv = p.at("encoder.0.attn.v.weight");
  const Tensor& wo = p.at("encoder.0.attn.o.weight");
  std::vector<double> v(16, 0.0);
  for (std::size_t j = 0; j < 16; ++j) {
    v[j] = p.at("encoder.0.attn.v.bias")[j];
    for (std::size_t i = 0; i < 16; ++i) v[j] += row.at(0, i) * wv.at(i, j);
  }
  for (std::size_t j = 0; j < 16; ++j) {
    double o = p.at("encoder.0.attn.o.bias")[j];
    for (std::size_t i = 0; i < 16; ++i) o += v[i] * wo.at(i, j);
    EXPECT_NEAR(single.output.value().at(0, j), o, 1e-12);
  }
}

TEST(FfnBlock, ZeroSublayersReduceToDoubleLayerNorm) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 6);
  zero_prefix(p, "encoder.0.attn.o");
  zero_prefix(p, "encoder.0.conv2");
  ad::Graph g;
  ForwardContext ctx{g, p, c};
  const Tensor x = random_tensor({11, 16}, 7);
  const Tensor y = ffn_block(ctx, "encoder.0", g.constant(x)).value();
  EXPECT_EQ(y.shape(), (Shape{11, 16}));
  ad::Var gamma = g.constant(Tensor({16}, 1.0)), beta = g.constant(Tensor({16}, 0.0));
  const Tensor ref = ad::layer_norm(ad::layer_norm(g.constant(x), gamma, beta), gamma, beta).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(SpeakerConditioning, IdentityProjectionAndDistinctEmbeddings) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 8);
  ad::Graph g;
  ForwardContext ctx{g, p, c};
  const Tensor enc = random_tensor({9, 16}, 9);
  const Tensor a = random_tensor({1, 64}, 10), b = random_tensor({1, 64}, 11);
  const Tensor ya = condition_on_speaker(ctx, g.constant(enc), g.constant(a)).value();
  const Tensor yb = condition_on_speaker(ctx, g.constant(enc), g.constant(b)).value();
  EXPECT_EQ(ya.shape(), (Shape{9, 16}));
  for (std::size_t t = 0; t < 9; ++t) {
    double diff = 0.0;
    for (std::size_t j = 0; j < 16; ++j) diff = std::max(diff, std::abs(ya.at(t, j) - yb.at(t, j)));
    EXPECT_GT(diff, 0.0);
  }
  Tensor& w = p.at("speaker_proj.weight");
  std::fill(w.values().begin(), w.values().end(), 0.0);
  for (std::size_t i = 0; i < 16; ++i) w.at(i, i) = 1.0;
  for (auto& v : p.at("speaker_proj.bias").values()) v = 0.0;
  const Tensor id = condition_on_speaker(ctx, g.constant(enc), g.constant(Tensor({1, 64}))).value();
  EXPECT_TRUE(bitwise_equal(id, enc));
  EXPECT_THROW(condition_on_speaker(ctx, g.constant(enc), g.constant(Tensor({1, 63}))), ShapeError);
}

TEST(Classifier, ForwardIgnoresLambdaAndFollowsSpeakerPermutation) {
  ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 12);
  const Tensor enc = random_tensor({5, 16}, 13);
  Tensor logits[2];
  for (int i = 0; i < 2; ++i) {
    c.grl_lambda = i == 0 ? 0.0 : 5.0;
    ad::Graph g;
    ForwardContext ctx{g, p, c};
    logits[i] = adversarial_classifier(ctx, g.constant(enc)).value();
  }
  EXPECT_EQ(logits[0].shape(), (Shape{5, 4}));
  EXPECT_TRUE(bitwise_equal(logits[0], logits[1]));

  const std::size_t perm[4] = {2, 0, 3, 1};
  ParameterSet q = p;
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t k = 0; k < 4; ++k) q.at("classifier.out.weight").at(r, perm[k]) = p.at("classifier.out.weight").at(r, k);
  for (std::size_t k = 0; k < 4; ++k) q.at("classifier.out.bias")[perm[k]] = p.at("classifier.out.bias")[k];
  ad::Graph g;
  ForwardContext ctx{g, q, c};
  const Tensor permuted = adversarial_classifier(ctx, g.constant(enc)).value();
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(permuted.at(t, perm[k]), logits[0].at(t, k));
}

// Gradients of the classifier loss for encoder and classifier parameters.
std::map<std::string, std::vector<double>> classifier_grads(const ModelConfig& c, std::uint64_t seed) {
  ParameterSet p = init_vc_params(c, seed);
  p.set_requires_grad(true);
  p.zero_grad();
  ad::Graph g;
  ForwardContext ctx{g, p, c};
  ad::Var enc = encode(ctx, g.constant(random_tensor({6, 256}, seed + 1)));
  g.backward(adversarial_loss(adversarial_classifier(ctx, enc), 1));
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, t] : p.tensors())
    if (name.rfind("prenet", 0) == 0 || name.rfind("encoder", 0) == 0 || name.rfind("classifier", 0) == 0)
      out[name] = std::vector<double>(t.grad().begin(), t.grad().end());
  return out;
}

TEST(Classifier, GradientReversalSignPropertyOnEncoderParameters) {
  ModelConfig plain = small_config();
  plain.use_grl = false;
  const auto ref = classifier_grads(plain, 14);
  for (double lambda : {0.0, 0.5, 1.0}) {
    ModelConfig c = small_config();
    c.grl_lambda = lambda;
    const auto got = classifier_grads(c, 14);
    for (const auto& [name, g] : got) {
      const bool classifier = name.rfind("classifier", 0) == 0;
      const auto& r = ref.at(name);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double expected = classifier ? r[i] : -lambda * r[i];
        ASSERT_NEAR(g[i], expected, 1e-12) << name << "[" << i << "] lambda " << lambda;
      }
    }
  }
}

TEST(Postnet, ZeroWeightsPassMelThrough) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 15);
  zero_prefix(p, "postnet");
  ad::Graph g;
  ForwardContext ctx{g, p, c};
  const Tensor mel = random_tensor({12, 80}, 16);
  EXPECT_TRUE(bitwise_equal(postnet(ctx, g.constant(mel)).value(), mel));
}

// ----------------------------------------------------------------------------- whole model

TEST(Forward, PreservesLength) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 17);
  const Tensor spk = random_tensor({1, 64}, 18);
  for (std::size_t T : {1u, 5u, 7u, 64u, 301u}) {
    ad::Graph g;
    const auto out = run(p, c, g, random_tensor({T, 256}, T), spk);
    EXPECT_EQ(out.mel_pre.value().shape(), (Shape{T, 80}));
    EXPECT_EQ(out.mel_post.value().shape(), (Shape{T, 80}));
    EXPECT_EQ(out.adv_logits.value().shape(), (Shape{T, 4}));
  }
  // A zero-frame sequence cannot be represented.
  EXPECT_THROW(Tensor({0, 256}), ShapeError);
}

TEST(Forward, DefaultConfigPreservesShortLengths) {
  const ModelConfig c;
  ParameterSet p = init_vc_params(c, 19);
  for (std::size_t T : {1u, 5u}) {
    ad::Graph g;
    EXPECT_EQ(run(p, c, g, random_tensor({T, 256}, T), random_tensor({1, 64}, 20)).mel_post.value().shape(),
              (Shape{T, 80}));
  }
}

TEST(Forward, EvalModeIsDeterministicAndFullContext) {
  ModelConfig c = small_config();
  c.dropout = 0.1;
  ParameterSet p = init_vc_params(c, 21);
  const Tensor x = random_tensor({30, 256}, 22), spk = random_tensor({1, 64}, 23);
  ad::Graph g1, g2;
  const Tensor a = run(p, c, g1, x, spk).mel_post.value();
  const Tensor b = run(p, c, g2, x, spk).mel_post.value();
  EXPECT_TRUE(bitwise_equal(a, b));
  Tensor x2 = x;
  x2.at(0, 0) += 1.0;
  ad::Graph g3;
  const Tensor d = run(p, c, g3, x2, spk).mel_post.value();
  double far = 0.0;
  for (std::size_t j = 0; j < 80; ++j) far = std::max(far, std::abs(d.at(29, j) - a.at(29, j)));
  EXPECT_GT(far, 0.0);
}

TEST(Forward, PaddedInputWithMaskMatchesUnpaddedRun) {
  const ModelConfig c = small_config();
  ParameterSet p = init_vc_params(c, 24);
  const Tensor x = random_tensor({9, 256}, 25), spk = random_tensor({1, 64}, 26);
  ad::Graph g1;
  const Tensor ref = run(p, c, g1, x, spk).mel_post.value();
  Tensor padded({14, 256});
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t j = 0; j < 256; ++j) padded.at(t, j) = x.at(t, j);
  for (std::size_t t = 9; t < 14; ++t)
    for (std::size_t j = 0; j < 256; ++j) padded.at(t, j) = 3.0;
  FrameMask mask(14, 0.0);
  std::fill(mask.begin(), mask.begin() + 9, 1.0);
  ad::Graph g2;
  ForwardContext ctx{g2, p, c, mask};
  const Tensor out = forward(ctx, g2.constant(padded), g2.constant(spk)).mel_post.value();
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t j = 0; j < 80; ++j) EXPECT_NEAR(out.at(t, j), ref.at(t, j), 1e-10);
  for (std::size_t t = 9; t < 14; ++t)
    for (std::size_t j = 0; j < 80; ++j) EXPECT_EQ(out.at(t, j), 0.0);
  FrameMask short_mask(5, 1.0);
  ForwardContext bad{g2, p, c, short_mask};
  EXPECT_THROW(forward(bad, g2.constant(padded), g2.constant(spk)), ShapeError);
}

TEST(Forward, ParametersAreSeeded) {
  const ModelConfig c = small_config();
  EXPECT_EQ(init_vc_params(c, 5).checksum(), init_vc_params(c, 5).checksum());
  EXPECT_NE(init_vc_params(c, 5).checksum(), init_vc_params(c, 6).checksum());
  const ParameterSet p = init_vc_params(c, 5);
  for (double v : p.at("encoder.0.ln1.gamma").values()) EXPECT_EQ(v, 1.0);
  for (double v : p.at("mel_proj.bias").values()) EXPECT_EQ(v, 0.0);
  const double bound = std::sqrt(1.0 / 256.0);
  for (double v : p.at("prenet.fc1.weight").values()) EXPECT_LE(std::abs(v), bound);
}

}  // namespace
}  // namespace fvc
