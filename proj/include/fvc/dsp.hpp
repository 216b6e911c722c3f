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

// Acoustic front end: 16 kHz mono audio, 50 ms Hann window, 12.5 ms hop,
// 1024-point FFT, 80-band HTK mel filterbank over 0-8000 Hz, natural-log
// magnitudes floored at 1e-5. Griffin-Lim stands in for a neural vocoder.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fvc/tensor.hpp"

namespace fvc::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kWindowLength = 800;  // 50 ms
inline constexpr std::size_t kHopLength = 200;     // 12.5 ms
inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kNumBins = kFftSize / 2 + 1;
inline constexpr std::size_t kNumMels = 80;
inline constexpr double kMelFloor = 1e-5;
inline constexpr double kMinHz = 0.0;
inline constexpr double kMaxHz = 8000.0;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
};

/// 16-bit PCM mono 16 kHz only; anything else is a FormatError naming the field.
Waveform read_wav(const std::filesystem::path& path);
/// Round-half-away-from-zero of x * 32768, clamped to the int16 range.
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// Number of un-padded analysis frames: 1 + floor((n - window) / hop). Throws LengthError if n < window.
std::size_t frame_count(std::size_t num_samples);

/// Periodic Hann window of kWindowLength samples.
const std::vector<double>& hann_window();

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data, bool inverse = false);

using ComplexFrames = std::vector<std::vector<std::complex<double>>>;

/// Frame t covers samples [t*hop, t*hop + window), Hann-weighted and zero-padded to kFftSize.
/// Returns T x kNumBins one-sided spectra.
ComplexFrames stft(const Waveform& w);
ComplexFrames stft(std::span<const double> samples);
/// |stft| as a T x kNumBins tensor.
Tensor magnitude(const ComplexFrames& spec);

/// Weighted overlap-add inverse of stft(); output has (T - 1) * hop + window samples.
std::vector<double> istft(const ComplexFrames& spec);

/// 80 x kNumBins triangular filters with unit peaks at HTK-mel-spaced centres.
class MelFilterbank {
 public:
  MelFilterbank();

  const Tensor& weights() const { return weights_; }
  /// Centre frequency in Hz of filter m (edges at index -1 and kNumMels are 0 Hz and 8000 Hz).
  double center_hz(std::size_t m) const { return points_hz_[m + 1]; }
  /// kNumBins x 80 Moore-Penrose pseudo-inverse of weights().
  const Tensor& pseudo_inverse() const { return pinv_; }

  static double hz_to_mel(double hz);
  static double mel_to_hz(double mel);
  static double bin_hz(std::size_t bin) { return static_cast<double>(bin) * kSampleRate / kFftSize; }

 private:
  std::vector<double> points_hz_;
  Tensor weights_;
  Tensor pinv_;
};

/// Shared read-only instance.
const MelFilterbank& default_filterbank();

/// log(max(fb * |X|, floor)) per frame: T x 80.
Tensor mel_from_magnitude(const Tensor& mag, const MelFilterbank& fb = default_filterbank());
Tensor mel_spectrogram(const Waveform& w, const MelFilterbank& fb = default_filterbank());

/// ||(|X_est| - M)||_F / ||M||_F.
double spectral_convergence(const Tensor& target_mag, const Tensor& estimate_mag);

struct GriffinLimResult {
  Waveform waveform;
  /// Spectral convergence against the target linear magnitudes, recorded every 8 iterations
  /// (iterations 8, 16, ...) plus the final iteration.
  std::vector<std::pair<int, double>> convergence;
};

/// Mel -> linear magnitude via the pseudo-inverse (clamped at 0), then `iterations`
/// rounds of Griffin-Lim phase recovery from a seeded random initial phase.
GriffinLimResult griffin_lim(const Tensor& log_mel, const MelFilterbank& fb, int iterations,
                             std::uint64_t seed = 0);
/// Griffin-Lim directly on linear magnitudes (T x kNumBins).
GriffinLimResult griffin_lim_magnitude(const Tensor& mag, int iterations, std::uint64_t seed = 0);

/// Linear magnitudes recovered from a log-mel matrix through the pseudo-inverse.
Tensor mel_to_linear(const Tensor& log_mel, const MelFilterbank& fb = default_filterbank());

}  // namespace fvc::dsp
