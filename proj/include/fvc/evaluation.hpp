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

// Objective conversion evaluation. Fresh source sentences are converted to each
// target speaker, and every converted utterance is scored against one held-out
// natural reference per target speaker with a probe encoder that was never used
// for training.

#include <cstdint>
#include <string>
#include <vector>

#include "fvc/corpus.hpp"
#include "fvc/scoring.hpp"
#include "fvc/speaker_encoder.hpp"
#include "fvc/training.hpp"

namespace fvc {

/// ML: source in the target's language; CL: the other language; CS: code-switched source.
enum class Condition { ML, CL, CS };
enum class TargetSet { InSet, OneShot };

std::string_view to_string(Condition c);
std::string_view to_string(TargetSet s);
/// "ML", "CL", "CS"; ConfigError otherwise.
Condition parse_condition(std::string_view s);
/// "in", "oneshot"; ConfigError otherwise.
TargetSet parse_target_set(std::string_view s);

/// Language of a source sentence for a target speaker who speaks `target_language`.
corpus::Language source_language(Condition c, corpus::Language target_language);

struct EvalOptions {
  std::size_t sources_per_target = 4;
  std::uint64_t seed = 0;
};

struct EvalResult {
  std::vector<Trial> trials;
  Histogram histogram;
  DetMetrics metrics;
  /// Mean score of the target trials (converted speech vs its own target's reference).
  double mean_target_score = 0.0;
  std::size_t conversions = 0;
};

/// The reference utterance of a speaker: the last one in manifest order.
const corpus::Utterance& reference_utterance(const corpus::LoadedCorpus& c, const std::string& speaker);

/// Trains the probe encoder on every utterance of the given corpora except each speaker's reference.
SpeakerEncoder train_probe_encoder(const std::vector<const corpus::LoadedCorpus*>& corpora, std::size_t epochs,
                                   std::uint64_t seed);

/// In-set targets are the checkpoint's speakers, conditioned on their centroids and
/// referenced from `train_corpus`. One-shot targets are the speakers of `oneshot_corpus`,
/// conditioned on the training encoder's embedding of their reference utterance; they
/// must be disjoint from the checkpoint's speakers (ContractError) and non-empty (ConfigError).
/// Frame-level speaker accuracy of a linear softmax probe fitted on frozen encoder
/// outputs. The probe is trained on every utterance except the last
/// `holdout_per_speaker` of each speaker and scored on those held-out frames.
double encoder_speaker_probe_accuracy(VcCheckpoint& ck, const corpus::LoadedCorpus& corpus,
                                      std::size_t holdout_per_speaker, std::size_t iterations,
                                      std::uint64_t seed);

EvalResult evaluate_conversion(VcCheckpoint& ck, const corpus::LoadedCorpus& train_corpus,
                               const corpus::LoadedCorpus* oneshot_corpus, Condition condition,
                               TargetSet set, SpeakerEncoder& probe, const EvalOptions& opt);

}  // namespace fvc
