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

// Statistics-pooling speaker encoder:
//
//   mel (T x 80) -> CMVN -> linear+relu -> linear+relu -> pool over time
//     -> linear to the embedding -> (training only) linear to speaker logits
//
// The default network pools mean and standard deviation of 128 hidden units.
// The probe variant used for scoring is deliberately different: 96 hidden
// units and mean-only pooling.

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "fvc/autodiff.hpp"
#include "fvc/parameters.hpp"

namespace fvc {

struct SpeakerEncoderConfig {
  std::size_t n_mels = 80;
  std::size_t hidden = 128;
  std::size_t embedding_dim = 64;
  std::size_t n_speakers = 2;
  bool std_pooling = true;

  static SpeakerEncoderConfig probe(std::size_t n_speakers);
  void validate() const;
};

class SpeakerEncoder {
 public:
  SpeakerEncoder() = default;
  SpeakerEncoder(const SpeakerEncoderConfig& cfg, std::uint64_t seed);
  SpeakerEncoder(const SpeakerEncoder& other);
  SpeakerEncoder& operator=(const SpeakerEncoder& other);

  const SpeakerEncoderConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Sets the per-channel normalisation applied to every input frame.
  void set_normalization(const Tensor& mean, const Tensor& stddev);

  /// Differentiable 1 x embedding_dim embedding of a T x n_mels mel. Throws LengthError for T < 2.
  ad::Var embed(ad::Graph& g, ad::Var mel);
  /// 1 x n_speakers logits from an embedding.
  ad::Var classify(ad::Graph& g, ad::Var embedding);
  /// Forward-only extraction.
  Tensor extract(const Tensor& mel);

  /// Stops every tensor from receiving gradients or updates.
  void freeze();
  bool frozen() const { return frozen_; }
  /// Checksum over all tensors, including the normalisation statistics.
  std::uint64_t checksum() const { return params_.checksum(); }
  /// Number of embed() calls so far.
  std::uint64_t evaluations() const { return evaluations_.load(); }

  /// Tensors under `prefix` plus "<prefix>config.*" scalars.
  TensorMap to_tensors(const std::string& prefix) const;
  static SpeakerEncoder from_tensors(const TensorMap& tensors, const std::string& prefix);

 private:
  ad::Var dense(ad::Graph& g, const std::string& name, ad::Var x);

  SpeakerEncoderConfig cfg_;
  ParameterSet params_;
  bool frozen_ = false;
  std::atomic<std::uint64_t> evaluations_{0};
};

/// 1 - cos(e_pred, e_ref) with e_ref held constant. Throws NumericError if either norm is below 1e-12.
ad::Var embedding_consistency_loss(ad::Var e_pred, const Tensor& e_ref);

/// One labelled mel for encoder training.
struct LabelledMel {
  const Tensor* mel = nullptr;
  std::size_t speaker = 0;
};

struct EncoderTrainOptions {
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  /// Fraction of each speaker's utterances held out for the accuracy report (at least one).
  double holdout_fraction = 0.25;
};

struct EncoderTrainResult {
  SpeakerEncoder encoder;
  double heldout_accuracy = 0.0;
  std::size_t heldout_count = 0;
};

/// Cross-entropy speaker classification with Adam, one utterance per step.
/// Needs at least 2 speakers with 4 utterances each (ConfigError otherwise).
/// The returned encoder is frozen.
EncoderTrainResult train_speaker_encoder(const std::vector<LabelledMel>& data,
                                         const SpeakerEncoderConfig& cfg,
                                         const EncoderTrainOptions& opt);

}  // namespace fvc
