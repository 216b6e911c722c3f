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

// Two-stage training of the conversion network.
//
//   base  mel_pre + mel_post + adversarial speaker cross-entropy
//   ecl   the same terms plus alpha * (1 - cos(embed(mel_post), embed(reference)))
//
// The ecl stage starts from a base checkpoint with a fresh optimizer. Batches are
// length buckets padded to their longest member; the schedule and every dropout
// mask are functions of (seed, step) only, so a resumed run replays the
// uninterrupted one exactly.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fvc/checkpoint.hpp"
#include "fvc/corpus.hpp"
#include "fvc/model.hpp"
#include "fvc/optimizer.hpp"
#include "fvc/speaker_encoder.hpp"

namespace fvc {

enum class Stage { Base = 0, Ecl = 1 };
std::string_view to_string(Stage s);
/// "base" or "ecl"; ConfigError otherwise.
Stage parse_stage(std::string_view s);

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  std::size_t batch_size = 4;
  std::uint64_t max_steps = 2000;
  std::uint64_t seed = 0;
};

struct LossReport {
  std::uint64_t step = 0;
  double mel_pre = 0.0;
  double mel_post = 0.0;
  double adv = 0.0;
  double ecl = 0.0;
  double total = 0.0;
};

inline constexpr std::string_view kLossCsvHeader = "step,mel_pre,mel_post,adv,ecl,total";
/// One CSV row with every value printed to 17 significant digits.
std::string loss_csv_row(const LossReport& r);

/// Mean squared error over the frames whose mask entry is non-zero (all frames if the mask is empty).
ad::Var mel_loss(ad::Var pred, const Tensor& target, std::span<const double> mask = {});
/// Framewise softmax cross-entropy against one speaker, averaged over unmasked frames.
ad::Var adversarial_loss(ad::Var logits, std::size_t speaker, std::span<const double> mask = {});

struct TrainingExample {
  std::string utt_id;
  std::size_t speaker = 0;
  Tensor features;             // T x 256
  Tensor mel;                  // T x 80
  Tensor reference_embedding;  // 1 x d_speaker, frozen-encoder embedding of `mel`
};

struct TrainingSet {
  std::vector<std::string> speakers;
  std::vector<TrainingExample> examples;
  /// One 1 x d_speaker centroid per speaker, averaged over that speaker's examples.
  std::vector<Tensor> centroids;
};

/// Uses every utterance of the corpus except the last `holdout_per_speaker` of each speaker.
TrainingSet make_training_set(const corpus::LoadedCorpus& corpus, SpeakerEncoder& encoder,
                              std::size_t holdout_per_speaker);

/// Everything needed to convert with, or resume training from, a run.
struct VcCheckpoint {
  ModelConfig model;
  ParameterSet params;
  SpeakerEncoder encoder;
  std::vector<std::string> speakers;
  Tensor centroids;  // n_speakers x d_speaker
  Stage stage = Stage::Base;
  std::uint64_t step = 0;
  TensorMap optimizer_state;

  Tensor centroid(std::size_t speaker) const;
  std::size_t speaker_index(std::string_view id) const;
};

CheckpointFile to_checkpoint_file(const VcCheckpoint& ck);
/// Throws FormatError when a required tensor or config entry is missing or malformed.
VcCheckpoint from_checkpoint_file(const CheckpointFile& file);
void save_vc_checkpoint(const std::filesystem::path& path, const VcCheckpoint& ck);
VcCheckpoint load_vc_checkpoint(const std::filesystem::path& path);

/// Example indices grouped into buckets of `batch_size` after sorting by length.
std::vector<std::vector<std::size_t>> length_buckets(const TrainingSet& data, std::size_t batch_size);

class Trainer {
 public:
  /// `state` supplies parameters, encoder, optimizer moments and the step counter.
  Trainer(VcCheckpoint state, const TrainingSet& data, const TrainConfig& cfg);

  /// Runs one optimisation step. Throws NumericError naming the first non-finite loss term.
  LossReport step();

  /// The alpha actually applied: 0 in the base stage, model.ecl_alpha in the ecl stage.
  double ecl_alpha() const;
  const VcCheckpoint& state() const { return state_; }
  /// Snapshot including the current optimizer moments.
  VcCheckpoint checkpoint() const;

 private:
  VcCheckpoint state_;
  const TrainingSet& data_;
  TrainConfig cfg_;
  Adam adam_;
  std::vector<std::vector<std::size_t>> buckets_;
};

/// Builds the starting state for a stage:
///   base without init  fresh parameters from cfg.seed
///   base/ecl with init of the same stage  resume
///   ecl with a base init  base parameters, fresh optimizer, step 0
/// An ecl stage without init, or a base stage from an ecl init, is a ConfigError.
VcCheckpoint initial_state(const ModelConfig& model, const SpeakerEncoder& encoder, const TrainingSet& data,
                           Stage stage, const TrainConfig& cfg, const std::optional<VcCheckpoint>& init);

/// Trains until state.step == cfg.max_steps, calling on_step after each step.
/// Throws ContractError if the speaker encoder changed.
VcCheckpoint train(VcCheckpoint start, const TrainingSet& data, const TrainConfig& cfg,
                   const std::function<void(const LossReport&)>& on_step = {});

/// Eval-mode forward pass; returns mel_post (T x n_mels).
Tensor convert(VcCheckpoint& ck, const Tensor& features, const Tensor& speaker_embedding);

}  // namespace fvc
