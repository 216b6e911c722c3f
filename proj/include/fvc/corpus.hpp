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

// Deterministic toy corpus: formant-synthesised speakers reading random phone
// strings in two disjoint "languages", paired with frame-aligned 256-dim
// content features that carry no speaker information.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fvc/dsp.hpp"
#include "fvc/tensor.hpp"

namespace fvc::corpus {

inline constexpr int kNumPhones = 91;
/// Language A uses phone ids [0, 38], language B uses [39, 90].
inline constexpr int kFirstPhoneB = 39;
inline constexpr std::size_t kLinguisticDim = 256;
inline constexpr int kMinPhoneFrames = 3;
inline constexpr std::size_t kMinUtteranceFrames = 20;
/// Speaker parameters live on a 18 x 11 grid (f0 90..260 Hz step 10, formant shift 0.85..1.15 step 0.03).
inline constexpr int kSpeakerGridCells = 18 * 11;

enum class Language { A, B, Mixed };

std::string_view to_string(Language lang);
/// Accepts "A", "B", "MIXED"; throws FormatError otherwise.
Language parse_language(std::string_view s);

struct SyntheticSpeaker {
  std::string id;
  double f0_hz = 0.0;
  double formant_shift = 1.0;
  /// Spectral slope of the harmonic source in dB per octave (negative).
  double spectral_tilt = -6.0;
};

/// Pure function of the seed. Seeds that differ modulo kSpeakerGridCells land on
/// different grid cells, so their f0 differs by >= 10 Hz or their formant shift by >= 0.03.
SyntheticSpeaker generate_speaker(std::uint64_t seed);

struct Phone {
  int id = 0;
  int duration_frames = kMinPhoneFrames;
};

struct PhoneSequence {
  std::vector<Phone> phones;
  Language language = Language::A;

  std::size_t total_frames() const;
  /// Throws ConfigError if a phone id is outside its language range, a duration is
  /// below 3 frames, or the total is below 20 frames.
  void validate() const;
};

/// Random sequence of 6-9 phones (3-6 frames each) from the language's phone range.
/// MIXED alternates runs of A and B phones.
PhoneSequence random_phone_sequence(Language lang, std::uint64_t seed);

struct Formants {
  double f1, f2, f3;
};
/// Fixed formant triple of a phone id.
Formants phone_formants(int phone_id);

/// Harmonic formant synthesis at 12.5 ms per frame. The output has
/// total_frames * 200 + 600 samples so that its mel spectrogram has exactly
/// total_frames frames; peak amplitude is 0.5.
dsp::Waveform synthesize_utterance(const SyntheticSpeaker& spk, const PhoneSequence& seq,
                                   std::uint64_t seed);

/// Frozen 91 x 256 table of phone anchors (standard normal entries).
const Tensor& phone_anchors();

/// Frame t = anchor(phone at t) + N(0, 0.05^2) jitter drawn from `seed`. Depends on nothing else.
Tensor extract_linguistic_features(const PhoneSequence& seq, std::uint64_t seed);

// --------------------------------------------------------------------------- manifest

struct ManifestRow {
  std::string utt_id;
  std::string speaker_id;
  Language language = Language::A;
  std::string wav_path;   // relative to the manifest directory
  std::string feat_path;  // relative to the manifest directory
  std::size_t frames = 0;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  /// Speaker ids in order of first appearance.
  std::vector<std::string> speakers() const;
};

inline constexpr std::string_view kManifestHeader = "utt_id,speaker_id,language,wav_path,feat_path,frames";

std::string manifest_to_csv(const Manifest& m);
Manifest parse_manifest(const std::string& csv);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Speaker seed of speaker `index` in a corpus built with `seed`.
std::uint64_t corpus_speaker_seed(std::uint64_t seed, std::size_t index);

/// Writes wav/<utt>.wav, feats/<utt>.ling and manifest.csv under out_dir and returns
/// the manifest. The first n_speakers/2 speakers read only language A, the rest only B.
/// Throws ConfigError for n_speakers < 2 or n_utts_per_speaker < 1.
Manifest build_corpus(std::size_t n_speakers, std::size_t n_utts_per_speaker, std::uint64_t seed,
                      const std::filesystem::path& out_dir);

// --------------------------------------------------------------------------- in-memory corpus

struct Utterance {
  ManifestRow row;
  Tensor features;  // T x 256
  Tensor mel;       // T x 80
};

struct LoadedCorpus {
  std::vector<Utterance> utterances;
  std::vector<std::string> speakers;

  /// Index of a speaker id in `speakers`; throws IndexError if absent.
  std::size_t speaker_index(std::string_view id) const;
  /// Utterance indices of a speaker, in manifest order.
  std::vector<std::size_t> utterances_of(std::string_view speaker_id) const;
  const Utterance& find(std::string_view utt_id) const;
};

/// Reads every WAV (re-extracting its mel) and feature file referenced by a manifest.
LoadedCorpus load_corpus(const std::filesystem::path& manifest_path);

}  // namespace fvc::corpus
