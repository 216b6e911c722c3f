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

#include "fvc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "fvc/errors.hpp"
#include "fvc/feature_io.hpp"

namespace fvc::corpus {

namespace {

constexpr std::uint64_t kAnchorSeed = 0x616e63686f727321ULL;
constexpr std::uint64_t kFormantSeed = 0x666f726d616e7473ULL;
constexpr double kJitterSigma = 0.05;
constexpr double kPeakAmplitude = 0.5;
constexpr double kMaxHarmonicHz = 7800.0;
constexpr std::array<double, 3> kFormantBandwidth = {90.0, 130.0, 180.0};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct PhoneTable {
  std::vector<Formants> formants;
  std::vector<double> gain;
};

const PhoneTable& phone_table() {
  static const PhoneTable table = [] {
    PhoneTable t;
    std::mt19937_64 rng(kFormantSeed);
    std::uniform_real_distribution<double> f1(250.0, 850.0), f2(900.0, 2400.0), f3(2500.0, 3500.0),
        g(0.5, 1.0);
    for (int p = 0; p < kNumPhones; ++p) {
      t.formants.push_back({f1(rng), f2(rng), f3(rng)});
      t.gain.push_back(g(rng));
    }
    return t;
  }();
  return table;
}

std::pair<int, int> phone_range(Language lang) {
  switch (lang) {
    case Language::A:
      return {0, kFirstPhoneB - 1};
    case Language::B:
      return {kFirstPhoneB, kNumPhones - 1};
    case Language::Mixed:
      return {0, kNumPhones - 1};
  }
  return {0, kNumPhones - 1};
}

double harmonic_amplitude(double f, const Formants& fm, double shift, double tilt_db_per_oct,
                          double gain) {
  const std::array<double, 3> centers = {fm.f1 * shift, fm.f2 * shift, fm.f3 * shift};
  double env = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double z = (f - centers[i]) / kFormantBandwidth[i];
    env += 1.0 / (1.0 + z * z);
  }
  const double octaves = std::log2(std::max(f, 100.0) / 100.0);
  return gain * env * std::pow(10.0, tilt_db_per_oct * octaves / 20.0);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string_view to_string(Language lang) {
  switch (lang) {
    case Language::A:
      return "A";
    case Language::B:
      return "B";
    case Language::Mixed:
      return "MIXED";
  }
  return "?";
}

Language parse_language(std::string_view s) {
  if (s == "A") return Language::A;
  if (s == "B") return Language::B;
  if (s == "MIXED") return Language::Mixed;
  throw FormatError("unknown language tag '" + std::string(s) + "'");
}

SyntheticSpeaker generate_speaker(std::uint64_t seed) {
  // Stepping by 61 (coprime to 198) spreads consecutive seeds far apart on the grid.
  const auto cell = static_cast<int>((seed % kSpeakerGridCells) * 61 % kSpeakerGridCells);
  const int f0_level = cell / 11;
  const int shift_level = cell % 11;
  SyntheticSpeaker s;
  s.id = "spk" + std::to_string(seed);
  s.f0_hz = 90.0 + 10.0 * f0_level;
  s.formant_shift = (85.0 + 3.0 * shift_level) / 100.0;
  std::mt19937_64 rng(mix(seed, 0x74696c74ULL));
  s.spectral_tilt = std::uniform_real_distribution<double>(-8.0, -3.0)(rng);
  return s;
}

std::size_t PhoneSequence::total_frames() const {
  std::size_t n = 0;
  for (const auto& p : phones) n += static_cast<std::size_t>(p.duration_frames);
  return n;
}

void PhoneSequence::validate() const {
  for (const auto& p : phones) {
    if (p.id < 0 || p.id >= kNumPhones) throw ConfigError("phone id " + std::to_string(p.id) + " out of range");
    const bool is_a = p.id < kFirstPhoneB;
    if ((language == Language::A && !is_a) || (language == Language::B && is_a)) {
      throw ConfigError("phone id " + std::to_string(p.id) + " outside the range of language " +
                        std::string(to_string(language)));
    }
    if (p.duration_frames < kMinPhoneFrames) {
      throw ConfigError("phone duration " + std::to_string(p.duration_frames) + " is below 3 frames");
    }
  }
  if (total_frames() < kMinUtteranceFrames) {
    throw ConfigError("phone sequence has " + std::to_string(total_frames()) + " frames, need at least 20");
  }
}

PhoneSequence random_phone_sequence(Language lang, std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed, 0x70686f6eULL));
  std::uniform_int_distribution<int> n_phones(6, 9), dur(kMinPhoneFrames, 6), run(2, 3);
  PhoneSequence seq;
  seq.language = lang;
  const int n = n_phones(rng);
  Language current = std::uniform_int_distribution<int>(0, 1)(rng) ? Language::A : Language::B;
  int run_left = run(rng);
  while (static_cast<int>(seq.phones.size()) < n || seq.total_frames() < kMinUtteranceFrames) {
    Language pick = lang;
    if (lang == Language::Mixed) {
      if (run_left == 0) {
        current = current == Language::A ? Language::B : Language::A;
        run_left = run(rng);
      }
      --run_left;
      pick = current;
    }
    const auto [lo, hi] = phone_range(pick);
    seq.phones.push_back({std::uniform_int_distribution<int>(lo, hi)(rng), dur(rng)});
  }
  return seq;
}

Formants phone_formants(int phone_id) {
  if (phone_id < 0 || phone_id >= kNumPhones) throw IndexError("phone id out of range");
  return phone_table().formants[static_cast<std::size_t>(phone_id)];
}

dsp::Waveform synthesize_utterance(const SyntheticSpeaker& spk, const PhoneSequence& seq,
                                   std::uint64_t seed) {
  seq.validate();
  const std::size_t T = seq.total_frames();
  const std::size_t n_samples = T * dsp::kHopLength + (dsp::kWindowLength - dsp::kHopLength);
  const auto n_harm = static_cast<std::size_t>(kMaxHarmonicHz / spk.f0_hz);
  const auto& table = phone_table();

  // Harmonic amplitudes at each frame centre (sample 200 t + 400).
  std::vector<double> amp(T * n_harm);
  std::size_t t = 0;
  for (const auto& p : seq.phones) {
    const auto& fm = table.formants[static_cast<std::size_t>(p.id)];
    for (int k = 0; k < p.duration_frames; ++k, ++t) {
      for (std::size_t h = 0; h < n_harm; ++h) {
        amp[t * n_harm + h] = harmonic_amplitude(spk.f0_hz * static_cast<double>(h + 1), fm,
                                                 spk.formant_shift, spk.spectral_tilt,
                                                 table.gain[static_cast<std::size_t>(p.id)]);
      }
    }
  }

  // Schroeder phases keep the crest factor (and so the peak normalisation gain) stable;
  // the seed only adds a small per-harmonic jitter.
  std::mt19937_64 rng(mix(seed, 0x73796e74ULL));
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  std::vector<double> phase0(n_harm), omega(n_harm);
  for (std::size_t h = 0; h < n_harm; ++h) {
    const double k = static_cast<double>(h + 1);
    phase0[h] = std::numbers::pi * k * k / static_cast<double>(n_harm) + jitter(rng);
    omega[h] = 2.0 * std::numbers::pi * spk.f0_hz * k / dsp::kSampleRate;
  }

  dsp::Waveform w;
  w.samples.assign(n_samples, 0.0);
  const double centre0 = static_cast<double>(dsp::kWindowLength) / 2.0;
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double pos = std::clamp((static_cast<double>(n) - centre0) / dsp::kHopLength, 0.0,
                                  static_cast<double>(T - 1));
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, T - 1);
    const double frac = pos - static_cast<double>(lo);
    const double* alo = amp.data() + lo * n_harm;
    const double* ahi = amp.data() + hi * n_harm;
    double s = 0.0;
    for (std::size_t h = 0; h < n_harm; ++h) {
      const double a = (1.0 - frac) * alo[h] + frac * ahi[h];
      s += a * std::sin(phase0[h] + omega[h] * static_cast<double>(n));
    }
    w.samples[n] = s;
  }
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    for (auto& s : w.samples) s *= kPeakAmplitude / peak;
  }
  return w;
}

const Tensor& phone_anchors() {
  static const Tensor anchors = [] {
    Tensor a({static_cast<std::size_t>(kNumPhones), kLinguisticDim});
    std::mt19937_64 rng(kAnchorSeed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : a.values()) v = nd(rng);
    return a;
  }();
  return anchors;
}

Tensor extract_linguistic_features(const PhoneSequence& seq, std::uint64_t seed) {
  seq.validate();
  const Tensor& anchors = phone_anchors();
  Tensor out({seq.total_frames(), kLinguisticDim});
  std::mt19937_64 rng(mix(seed, 0x6c696e67ULL));
  std::normal_distribution<double> jitter(0.0, kJitterSigma);
  std::size_t t = 0;
  for (const auto& p : seq.phones) {
    const auto anchor = anchors.row(static_cast<std::size_t>(p.id));
    for (int k = 0; k < p.duration_frames; ++k, ++t) {
      for (std::size_t c = 0; c < kLinguisticDim; ++c) out.at(t, c) = anchor[c] + jitter(rng);
    }
  }
  return out;
}

// --------------------------------------------------------------------------- manifest

std::vector<std::string> Manifest::speakers() const {
  std::vector<std::string> ids;
  for (const auto& r : rows) {
    if (std::find(ids.begin(), ids.end(), r.speaker_id) == ids.end()) ids.push_back(r.speaker_id);
  }
  return ids;
}

std::string manifest_to_csv(const Manifest& m) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const auto& r : m.rows) {
    os << r.utt_id << ',' << r.speaker_id << ',' << to_string(r.language) << ',' << r.wav_path << ','
       << r.feat_path << ',' << r.frames << '\n';
  }
  return os.str();
}

Manifest parse_manifest(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader) {
    throw FormatError("manifest: header must be '" + std::string(kManifestHeader) + "'");
  }
  Manifest m;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw FormatError("manifest line " + std::to_string(lineno) + ": expected 6 fields");
    ManifestRow r;
    r.utt_id = f[0];
    r.speaker_id = f[1];
    r.language = parse_language(f[2]);
    r.wav_path = f[3];
    r.feat_path = f[4];
    try {
      r.frames = static_cast<std::size_t>(std::stoul(f[5]));
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": bad frame count '" + f[5] + "'");
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(detail::read_file_bytes(path));
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  detail::write_file_bytes(path, manifest_to_csv(m));
}

std::uint64_t corpus_speaker_seed(std::uint64_t seed, std::size_t index) {
  return seed * 1000 + static_cast<std::uint64_t>(index);
}

Manifest build_corpus(std::size_t n_speakers, std::size_t n_utts_per_speaker, std::uint64_t seed,
                      const std::filesystem::path& out_dir) {
  if (n_speakers < 2) {
    throw ConfigError("build_corpus: need at least 2 speakers, got " + std::to_string(n_speakers));
  }
  if (n_speakers > 999) throw ConfigError("build_corpus: at most 999 speakers");
  if (n_utts_per_speaker < 1) throw ConfigError("build_corpus: need at least 1 utterance per speaker");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  std::filesystem::create_directories(out_dir / "feats", ec);
  if (ec) throw IoError("cannot create corpus directories under " + out_dir.string() + ": " + ec.message());

  Manifest m;
  for (std::size_t i = 0; i < n_speakers; ++i) {
    const SyntheticSpeaker spk = generate_speaker(corpus_speaker_seed(seed, i));
    const Language lang = i < n_speakers / 2 ? Language::A : Language::B;
    for (std::size_t u = 0; u < n_utts_per_speaker; ++u) {
      const std::uint64_t utt_seed = mix(mix(seed, i), u);
      const PhoneSequence seq = random_phone_sequence(lang, utt_seed);
      char buf[32];
      std::snprintf(buf, sizeof buf, "_%03zu", u);
      ManifestRow row;
      row.utt_id = spk.id + buf;
      row.speaker_id = spk.id;
      row.language = lang;
      row.wav_path = "wav/" + row.utt_id + ".wav";
      row.feat_path = "feats/" + row.utt_id + ".ling";
      row.frames = seq.total_frames();
      dsp::write_wav(out_dir / row.wav_path, synthesize_utterance(spk, seq, utt_seed));
      write_frames(out_dir / row.feat_path, kLinguisticMagic, extract_linguistic_features(seq, utt_seed));
      m.rows.push_back(std::move(row));
    }
  }
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

// --------------------------------------------------------------------------- in-memory corpus

std::size_t LoadedCorpus::speaker_index(std::string_view id) const {
  auto it = std::find(speakers.begin(), speakers.end(), id);
  if (it == speakers.end()) throw IndexError("unknown speaker id '" + std::string(id) + "'");
  return static_cast<std::size_t>(it - speakers.begin());
}

std::vector<std::size_t> LoadedCorpus::utterances_of(std::string_view speaker_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].row.speaker_id == speaker_id) out.push_back(i);
  }
  return out;
}

const Utterance& LoadedCorpus::find(std::string_view utt_id) const {
  for (const auto& u : utterances) {
    if (u.row.utt_id == utt_id) return u;
  }
  throw IndexError("unknown utterance id '" + std::string(utt_id) + "'");
}

LoadedCorpus load_corpus(const std::filesystem::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  LoadedCorpus c;
  c.speakers = m.speakers();
  c.utterances.resize(m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    Utterance& u = c.utterances[i];
    u.row = m.rows[i];
    u.features = read_frames(base / u.row.feat_path, kLinguisticMagic, kLinguisticDim);
    u.mel = dsp::mel_spectrogram(dsp::read_wav(base / u.row.wav_path));
    if (u.features.rows() != u.mel.rows() || u.mel.rows() != u.row.frames) {
      throw FormatError("utterance " + u.row.utt_id + ": features, mel and manifest frame counts disagree");
    }
  }
  return c;
}

}  // namespace fvc::corpus
