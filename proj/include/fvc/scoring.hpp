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

// Verification-style scoring: cosine similarity, EER, minDCF and score histograms.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fvc {

struct Trial {
  std::string enroll_utt;
  std::string test_utt;
  bool target = false;
  std::optional<double> score;
};

struct DetMetrics {
  double eer = 0.0;
  double min_dcf = 0.0;
  double threshold_at_eer = 0.0;
};

/// a.b / (|a| |b|), clamped to [-1, 1]. Throws NumericError if a norm is below 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// FAR(t) = P(nontarget >= t), FRR(t) = P(target < t), swept over every distinct
/// score and +infinity. The EER is where the two rates cross, interpolating
/// linearly between the adjacent operating points. Throws ContractError when a
/// score is missing or only one class is present.
double compute_eer(std::span<const Trial> trials);
/// Normalised min over the same thresholds of c_miss FRR p + c_fa FAR (1 - p).
double compute_min_dcf(std::span<const Trial> trials, double p_target = 0.01, double c_miss = 1.0,
                       double c_fa = 1.0);
DetMetrics compute_det_metrics(std::span<const Trial> trials);

struct Histogram {
  static constexpr std::size_t kBins = 40;
  std::array<std::size_t, kBins> counts{};

  /// Bin k covers [-1 + k/20, -1 + (k+1)/20); a score of exactly 1 goes to the last bin.
  static double bin_low(std::size_t k);
  static double bin_high(std::size_t k);
  static std::size_t bin_of(double score);
  std::size_t total() const;
};

/// Histogram of every scored trial. Throws ContractError for a score outside [-1, 1].
Histogram score_histogram(std::span<const Trial> trials);

std::string trials_to_csv(std::span<const Trial> trials);  // enroll_utt,test_utt,label
std::string scores_to_csv(std::span<const Trial> trials);  // enroll_utt,test_utt,label,score
std::string histogram_to_csv(const Histogram& h);          // bin_low,bin_high,count
/// Parses the scores CSV (labels "target" / "nontarget"); throws FormatError.
std::vector<Trial> parse_scores_csv(const std::string& csv);

}  // namespace fvc
