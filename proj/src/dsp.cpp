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

#include "fvc/dsp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fvc/errors.hpp"

namespace fvc::dsp {

namespace {

using cd = std::complex<double>;

std::vector<cd> full_spectrum(const std::vector<cd>& half) {
  std::vector<cd> full(kFftSize);
  for (std::size_t k = 0; k < kNumBins; ++k) full[k] = half[k];
  for (std::size_t k = kNumBins; k < kFftSize; ++k) full[k] = std::conj(half[kFftSize - k]);
  return full;
}

}  // namespace

std::size_t frame_count(std::size_t num_samples) {
  if (num_samples < kWindowLength) {
    throw LengthError("signal of " + std::to_string(num_samples) +
                      " samples is shorter than one analysis window (800)");
  }
  return 1 + (num_samples - kWindowLength) / kHopLength;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWindowLength);
    for (std::size_t n = 0; n < kWindowLength; ++n) {
      v[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(kWindowLength));
    }
    return v;
  }();
  return w;
}

void fft(std::span<cd> a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        // direct twiddle evaluation keeps rounding error from compounding
        const cd w = std::polar(1.0, ang * static_cast<double>(j));
        const cd u = a[i + j];
        const cd v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

ComplexFrames stft(const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw FormatError("stft: sample_rate = " + std::to_string(w.sample_rate) + ", expected 16000");
  }
  return stft(w.samples);
}

ComplexFrames stft(std::span<const double> samples) {
  const std::size_t T = frame_count(samples.size());
  const auto& win = hann_window();
  ComplexFrames out(T);
  std::vector<cd> buf(kFftSize);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(buf.begin(), buf.end(), cd{});
    const std::size_t start = t * kHopLength;
    for (std::size_t n = 0; n < kWindowLength; ++n) buf[n] = samples[start + n] * win[n];
    fft(buf);
    out[t].assign(buf.begin(), buf.begin() + kNumBins);
  }
  return out;
}

Tensor magnitude(const ComplexFrames& spec) {
  Tensor mag({spec.size(), kNumBins});
  for (std::size_t t = 0; t < spec.size(); ++t)
    for (std::size_t k = 0; k < kNumBins; ++k) mag.at(t, k) = std::abs(spec[t][k]);
  return mag;
}

std::vector<double> istft(const ComplexFrames& spec) {
  if (spec.empty()) throw LengthError("istft: no frames");
  const std::size_t T = spec.size();
  const std::size_t n_out = (T - 1) * kHopLength + kWindowLength;
  const auto& win = hann_window();
  std::vector<double> out(n_out, 0.0), norm(n_out, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    auto full = full_spectrum(spec[t]);
    fft(full, true);
    const std::size_t start = t * kHopLength;
    for (std::size_t n = 0; n < kWindowLength; ++n) {
      out[start + n] += win[n] * full[n].real() / static_cast<double>(kFftSize);
      norm[start + n] += win[n] * win[n];
    }
  }
  for (std::size_t n = 0; n < n_out; ++n) out[n] = norm[n] > 1e-8 ? out[n] / norm[n] : 0.0;
  return out;
}

// --------------------------------------------------------------------------- mel

double MelFilterbank::hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelFilterbank::mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank() : weights_({kNumMels, kNumBins}), pinv_({kNumBins, kNumMels}) {
  const double lo = hz_to_mel(kMinHz), hi = hz_to_mel(kMaxHz);
  points_hz_.resize(kNumMels + 2);
  for (std::size_t i = 0; i < kNumMels + 2; ++i) {
    points_hz_[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kNumMels + 1));
  }
  for (std::size_t m = 0; m < kNumMels; ++m) {
    const double left = points_hz_[m], center = points_hz_[m + 1], right = points_hz_[m + 2];
    for (std::size_t k = 0; k < kNumBins; ++k) {
      const double f = bin_hz(k);
      double v = 0.0;
      if (f > left && f <= center) {
        v = (f - left) / (center - left);
      } else if (f > center && f < right) {
        v = (right - f) / (right - center);
      }
      weights_.at(m, k) = v;
    }
  }
  Eigen::MatrixXd W(kNumMels, kNumBins);
  for (std::size_t m = 0; m < kNumMels; ++m)
    for (std::size_t k = 0; k < kNumBins; ++k) W(m, k) = weights_.at(m, k);
  const Eigen::MatrixXd P = W.completeOrthogonalDecomposition().pseudoInverse();
  for (std::size_t k = 0; k < kNumBins; ++k)
    for (std::size_t m = 0; m < kNumMels; ++m) pinv_.at(k, m) = P(k, m);
}

const MelFilterbank& default_filterbank() {
  static const MelFilterbank fb;
  return fb;
}

Tensor mel_from_magnitude(const Tensor& mag, const MelFilterbank& fb) {
  if (mag.cols() != kNumBins) throw ShapeError("mel: magnitude must have 513 bins, got " + shape_to_string(mag.shape()));
  const std::size_t T = mag.rows();
  Tensor mel({T, kNumMels});
  const Tensor& W = fb.weights();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < kNumMels; ++m) {
      double s = 0.0;
      for (std::size_t k = 0; k < kNumBins; ++k) s += W.at(m, k) * mag.at(t, k);
      mel.at(t, m) = std::log(std::max(s, kMelFloor));
    }
  }
  return mel;
}

Tensor mel_spectrogram(const Waveform& w, const MelFilterbank& fb) {
  return mel_from_magnitude(magnitude(stft(w)), fb);
}

Tensor mel_to_linear(const Tensor& log_mel, const MelFilterbank& fb) {
  if (log_mel.cols() != kNumMels) {
    throw ShapeError("mel_to_linear: expected 80 mel channels, got " + shape_to_string(log_mel.shape()));
  }
  const std::size_t T = log_mel.rows();
  const Tensor& P = fb.pseudo_inverse();
  Tensor lin({T, kNumBins});
  std::vector<double> e(kNumMels);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < kNumMels; ++m) e[m] = std::exp(log_mel.at(t, m));
    for (std::size_t k = 0; k < kNumBins; ++k) {
      double s = 0.0;
      for (std::size_t m = 0; m < kNumMels; ++m) s += P.at(k, m) * e[m];
      lin.at(t, k) = std::max(s, 0.0);
    }
  }
  return lin;
}

double spectral_convergence(const Tensor& target, const Tensor& estimate) {
  if (target.shape() != estimate.shape()) throw ShapeError("spectral_convergence: shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    num += (estimate[i] - target[i]) * (estimate[i] - target[i]);
    den += target[i] * target[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

GriffinLimResult griffin_lim_magnitude(const Tensor& mag, int iterations, std::uint64_t seed) {
  if (iterations < 1) throw ConfigError("griffin_lim: iterations must be at least 1");
  if (mag.cols() != kNumBins) throw ShapeError("griffin_lim: magnitude must have 513 bins");
  const std::size_t T = mag.rows();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  ComplexFrames spec(T, std::vector<cd>(kNumBins));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < kNumBins; ++k) spec[t][k] = std::polar(mag.at(t, k), u(rng));

  GriffinLimResult result;
  std::vector<double> signal;
  for (int it = 1; it <= iterations; ++it) {
    signal = istft(spec);
    ComplexFrames est = stft(signal);
    if (it % 8 == 0 || it == iterations) {
      result.convergence.emplace_back(it, spectral_convergence(mag, magnitude(est)));
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < kNumBins; ++k) {
        const double a = std::abs(est[t][k]);
        const cd phase = a > 0.0 ? est[t][k] / a : cd{1.0, 0.0};
        spec[t][k] = mag.at(t, k) * phase;
      }
    }
  }
  result.waveform.samples = istft(spec);
  return result;
}

GriffinLimResult griffin_lim(const Tensor& log_mel, const MelFilterbank& fb, int iterations,
                             std::uint64_t seed) {
  return griffin_lim_magnitude(mel_to_linear(log_mel, fb), iterations, seed);
}

}  // namespace fvc::dsp
