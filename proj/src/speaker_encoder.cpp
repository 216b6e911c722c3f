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

#include "fvc/speaker_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fvc/errors.hpp"
#include "fvc/optimizer.hpp"

namespace fvc {

namespace {

constexpr double kPoolingVarianceFloor = 1e-8;
constexpr double kNormFloor = 1e-12;
constexpr double kCmvnStdFloor = 1e-3;

std::uint64_t epoch_seed(std::uint64_t seed, std::uint64_t epoch) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + epoch + 0x632be59bd9b4e019ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t pooled_dim(const SpeakerEncoderConfig& cfg) {
  return cfg.std_pooling ? 2 * cfg.hidden : cfg.hidden;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

SpeakerEncoderConfig SpeakerEncoderConfig::probe(std::size_t n_speakers) {
  SpeakerEncoderConfig c;
  c.hidden = 96;
  c.n_speakers = n_speakers;
  c.std_pooling = false;
  return c;
}

void SpeakerEncoderConfig::validate() const {
  if (n_mels == 0 || hidden == 0 || embedding_dim == 0) {
    throw ConfigError("speaker encoder widths must be positive");
  }
  if (n_speakers < 2) throw ConfigError("speaker encoder needs at least 2 speakers");
}

SpeakerEncoder::SpeakerEncoder(const SpeakerEncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  auto add_dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    init_uniform_fan_in(params_.add(name + ".weight", {in, out}), in, rng);
    params_.add(name + ".bias", {out});
  };
  add_dense("frame1", cfg_.n_mels, cfg_.hidden);
  add_dense("frame2", cfg_.hidden, cfg_.hidden);
  add_dense("embed", pooled_dim(cfg_), cfg_.embedding_dim);
  add_dense("classifier", cfg_.embedding_dim, cfg_.n_speakers);
  params_.add("cmvn.shift", {cfg_.n_mels}).set_requires_grad(false);
  params_.add("cmvn.scale", {cfg_.n_mels}, 1.0).set_requires_grad(false);
}

SpeakerEncoder::SpeakerEncoder(const SpeakerEncoder& other)
    : cfg_(other.cfg_), params_(other.params_), frozen_(other.frozen_),
      evaluations_(other.evaluations_.load()) {}

SpeakerEncoder& SpeakerEncoder::operator=(const SpeakerEncoder& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    params_ = other.params_;
    frozen_ = other.frozen_;
    evaluations_.store(other.evaluations_.load());
  }
  return *this;
}

void SpeakerEncoder::set_normalization(const Tensor& mean, const Tensor& stddev) {
  if (mean.size() != cfg_.n_mels || stddev.size() != cfg_.n_mels) {
    throw ShapeError("speaker encoder normalisation needs " + std::to_string(cfg_.n_mels) + " channels");
  }
  auto shift = params_.at("cmvn.shift").values();
  auto scale = params_.at("cmvn.scale").values();
  for (std::size_t c = 0; c < cfg_.n_mels; ++c) {
    shift[c] = -mean[c];
    scale[c] = 1.0 / std::max(stddev[c], kCmvnStdFloor);
  }
}

ad::Var SpeakerEncoder::dense(ad::Graph& g, const std::string& name, ad::Var x) {
  ad::Var w = g.parameter(params_.at(name + ".weight"));
  ad::Var b = g.parameter(params_.at(name + ".bias"));
  return ad::add_bias(ad::matmul(x, w), b);
}

ad::Var SpeakerEncoder::embed(ad::Graph& g, ad::Var mel) {
  const std::size_t T = mel.rows();
  if (T < 2) throw LengthError("speaker embedding needs at least 2 frames, got " + std::to_string(T));
  if (mel.cols() != cfg_.n_mels) {
    throw ShapeError("speaker encoder expects " + std::to_string(cfg_.n_mels) + " mel channels, got " +
                     shape_to_string(mel.shape()));
  }
  ++evaluations_;
  ad::Var x = ad::add_bias(mel, g.parameter(params_.at("cmvn.shift")));
  x = ad::mul(x, ad::broadcast_rows(g.parameter(params_.at("cmvn.scale")), T));
  ad::Var h = ad::relu(dense(g, "frame1", x));
  h = ad::relu(dense(g, "frame2", h));
  ad::Var mu = ad::mean_rows(h);
  ad::Var pooled = mu;
  if (cfg_.std_pooling) {
    ad::Var c = ad::sub(h, ad::broadcast_rows(mu, T));
    ad::Var sd = ad::sqrt(ad::add_scalar(ad::mean_rows(ad::mul(c, c)), kPoolingVarianceFloor));
    pooled = ad::concat_cols(mu, sd);
  }
  return dense(g, "embed", pooled);
}

ad::Var SpeakerEncoder::classify(ad::Graph& g, ad::Var embedding) {
  return dense(g, "classifier", embedding);
}

Tensor SpeakerEncoder::extract(const Tensor& mel) {
  ad::Graph g;
  return embed(g, g.constant_ref(mel)).value();
}

void SpeakerEncoder::freeze() {
  params_.set_requires_grad(false);
  frozen_ = true;
}

TensorMap SpeakerEncoder::to_tensors(const std::string& prefix) const {
  TensorMap out;
  for (const auto& [name, t] : params_.tensors()) {
    Tensor copy(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
    out.emplace(prefix + name, std::move(copy));
  }
  out.emplace(prefix + "config.n_mels", Tensor::scalar(static_cast<double>(cfg_.n_mels)));
  out.emplace(prefix + "config.hidden", Tensor::scalar(static_cast<double>(cfg_.hidden)));
  out.emplace(prefix + "config.embedding_dim", Tensor::scalar(static_cast<double>(cfg_.embedding_dim)));
  out.emplace(prefix + "config.n_speakers", Tensor::scalar(static_cast<double>(cfg_.n_speakers)));
  out.emplace(prefix + "config.std_pooling", Tensor::scalar(cfg_.std_pooling ? 1.0 : 0.0));
  return out;
}

SpeakerEncoder SpeakerEncoder::from_tensors(const TensorMap& tensors, const std::string& prefix) {
  auto get = [&](const std::string& key) -> std::size_t {
    auto it = tensors.find(prefix + "config." + key);
    if (it == tensors.end()) throw FormatError("checkpoint is missing " + prefix + "config." + key);
    return static_cast<std::size_t>(it->second[0]);
  };
  SpeakerEncoderConfig cfg;
  cfg.n_mels = get("n_mels");
  cfg.hidden = get("hidden");
  cfg.embedding_dim = get("embedding_dim");
  cfg.n_speakers = get("n_speakers");
  cfg.std_pooling = get("std_pooling") != 0;
  SpeakerEncoder enc(cfg, 0);
  enc.params_.load_values(tensors, prefix);
  enc.freeze();
  return enc;
}

ad::Var embedding_consistency_loss(ad::Var e_pred, const Tensor& e_ref) {
  if (e_pred.size() != e_ref.size()) {
    throw ShapeError("embedding consistency loss: " + shape_to_string(e_pred.shape()) + " vs " +
                     shape_to_string(e_ref.shape()));
  }
  double ref_sq = 0.0, pred_sq = 0.0;
  for (double v : e_ref.values()) ref_sq += v * v;
  for (double v : e_pred.value().values()) pred_sq += v * v;
  const double ref_norm = std::sqrt(ref_sq);
  if (ref_norm < kNormFloor || std::sqrt(pred_sq) < kNormFloor) {
    throw NumericError("embedding consistency loss: embedding norm below 1e-12");
  }
  ad::Graph& g = e_pred.graph();
  ad::Var r = g.constant(e_ref.reshaped(e_pred.shape()));
  ad::Var dot = ad::sum(ad::mul(e_pred, r));
  ad::Var pred_norm = ad::sqrt(ad::sum(ad::mul(e_pred, e_pred)));
  ad::Var cosine = ad::div(dot, ad::scale(pred_norm, ref_norm));
  return ad::add_scalar(ad::scale(cosine, -1.0), 1.0);
}

EncoderTrainResult train_speaker_encoder(const std::vector<LabelledMel>& data,
                                         const SpeakerEncoderConfig& cfg,
                                         const EncoderTrainOptions& opt) {
  cfg.validate();
  std::vector<std::vector<std::size_t>> by_speaker(cfg.n_speakers);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].mel == nullptr) throw ConfigError("speaker encoder training: null mel");
    if (data[i].speaker >= cfg.n_speakers) {
      throw IndexError("speaker encoder training: label " + std::to_string(data[i].speaker) +
                       " out of range");
    }
    by_speaker[data[i].speaker].push_back(i);
  }
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    if (by_speaker[s].size() < 4) {
      throw ConfigError("speaker encoder training needs at least 4 utterances per speaker; speaker " +
                        std::to_string(s) + " has " + std::to_string(by_speaker[s].size()));
    }
  }

  std::vector<std::size_t> train_idx, heldout_idx;
  for (const auto& utts : by_speaker) {
    const auto n_hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(opt.holdout_fraction * static_cast<double>(utts.size()))));
    const std::size_t n_train = utts.size() - std::min(n_hold, utts.size() - 1);
    train_idx.insert(train_idx.end(), utts.begin(), utts.begin() + static_cast<std::ptrdiff_t>(n_train));
    heldout_idx.insert(heldout_idx.end(), utts.begin() + static_cast<std::ptrdiff_t>(n_train), utts.end());
  }

  EncoderTrainResult result{SpeakerEncoder(cfg, opt.seed), 0.0, heldout_idx.size()};
  SpeakerEncoder& enc = result.encoder;

  // Per-channel statistics of the training frames.
  Tensor mean({cfg.n_mels}), sd({cfg.n_mels});
  double frames = 0.0;
  for (auto i : train_idx) {
    const Tensor& m = *data[i].mel;
    for (std::size_t t = 0; t < m.rows(); ++t)
      for (std::size_t c = 0; c < cfg.n_mels; ++c) mean[c] += m.at(t, c);
    frames += static_cast<double>(m.rows());
  }
  for (std::size_t c = 0; c < cfg.n_mels; ++c) mean[c] /= frames;
  for (auto i : train_idx) {
    const Tensor& m = *data[i].mel;
    for (std::size_t t = 0; t < m.rows(); ++t)
      for (std::size_t c = 0; c < cfg.n_mels; ++c) sd[c] += (m.at(t, c) - mean[c]) * (m.at(t, c) - mean[c]);
  }
  for (std::size_t c = 0; c < cfg.n_mels; ++c) sd[c] = std::sqrt(sd[c] / frames);
  enc.set_normalization(mean, sd);

  Adam adam({opt.learning_rate, 0.9, 0.98, 1e-9});
  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::mt19937_64 rng(epoch_seed(opt.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) {
      enc.params().zero_grad();
      ad::Graph g(true);
      ad::Var logits = enc.classify(g, enc.embed(g, g.constant_ref(*data[i].mel)));
      ad::Var nll = ad::scale(ad::sum(ad::slice_cols(ad::log_softmax(logits), data[i].speaker, 1)), -1.0);
      if (!std::isfinite(nll.value()[0])) throw NumericError("speaker encoder training: non-finite loss");
      g.backward(nll);
      adam.step(enc.params());
    }
  }
  enc.params().zero_grad();

  std::size_t correct = 0;
  for (auto i : heldout_idx) {
    ad::Graph g;
    ad::Var logits = enc.classify(g, enc.embed(g, g.constant_ref(*data[i].mel)));
    if (argmax(logits.value().values()) == data[i].speaker) ++correct;
  }
  result.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(heldout_idx.size());
  enc.freeze();
  for (auto& [name, t] : enc.params().tensors()) t.drop_grad();
  return result;
}

}  // namespace fvc
