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
#include <limits>
#include <random>
#include <set>

#include "fvc/errors.hpp"
#include "fvc/scoring.hpp"

namespace fvc {
namespace {

struct Rates {
  double threshold, far, frr;
};

// Quadratic reference sweep: every distinct score and +infinity, counted directly.
std::vector<Rates> brute_sweep(const std::vector<Trial>& trials) {
  std::set<double> thresholds;
  double nt = 0, nn = 0;
  for (const auto& t : trials) {
    thresholds.insert(*t.score);
    (t.target ? nt : nn) += 1;
  }
  thresholds.insert(std::numeric_limits<double>::infinity());
  std::vector<Rates> out;
  for (double th : thresholds) {
    std::size_t fa = 0, miss = 0;
    for (const auto& t : trials) {
      if (!t.target && *t.score >= th) ++fa;
      if (t.target && *t.score < th) ++miss;
    }
    out.push_back({th, static_cast<double>(fa) / nn, static_cast<double>(miss) / nt});
  }
  return out;
}

double brute_eer(const std::vector<Trial>& trials) {
  const auto pts = brute_sweep(trials);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].frr < pts[i].far) continue;
    if (pts[i].frr == pts[i].far || i == 0) return pts[i].far;
    const Rates& q = pts[i - 1];
    const double a = (q.far - q.frr) / ((q.far - q.frr) + (pts[i].frr - pts[i].far));
    return q.far + a * (pts[i].far - q.far);
  }
  return pts.back().far;
}

double brute_min_dcf(const std::vector<Trial>& trials, double p = 0.01) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : brute_sweep(trials)) best = std::min(best, r.frr * p + r.far * (1.0 - p));
  return best / std::min(p, 1.0 - p);
}

std::vector<Trial> make_trials(const std::vector<bool>& labels, const std::vector<double>& scores) {
  std::vector<Trial> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back({"e" + std::to_string(i), "t" + std::to_string(i), labels[i], scores[i]});
  }
  return out;
}

std::vector<Trial> random_trials(std::mt19937_64& rng, std::size_t n, bool ties) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> grid(-4, 4);
  std::vector<bool> labels(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i < 2 ? i == 0 : rng() % 2 == 0;
    scores[i] = ties ? grid(rng) / 4.0 : u(rng);
    if (labels[i] && !ties) scores[i] = std::clamp(scores[i] + 0.4, -1.0, 1.0);
  }
  return make_trials(labels, scores);
}

TEST(Scoring, MatchesBruteForceOnEveryLabellingUpTo12Trials) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> grid(0, 5);
  std::size_t lists = 0;
  for (std::size_t n = 2; n <= 12; ++n) {
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      std::vector<bool> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1u;
      if (mask == 0 || mask == (1u << n) - 1) continue;
      // One tied and one tie-free score assignment per labelling.
      std::vector<double> tied(n), distinct(n);
      for (std::size_t i = 0; i < n; ++i) {
        tied[i] = grid(rng) / 5.0;
        distinct[i] = static_cast<double>(i) / static_cast<double>(n);
      }
      std::shuffle(distinct.begin(), distinct.end(), rng);
      for (const auto& scores : {tied, distinct}) {
        const auto trials = make_trials(labels, scores);
        ASSERT_EQ(compute_eer(trials), brute_eer(trials)) << "n=" << n << " mask=" << mask;
        ASSERT_EQ(compute_min_dcf(trials), brute_min_dcf(trials)) << "n=" << n << " mask=" << mask;
        ++lists;
      }
    }
  }
  EXPECT_GT(lists, 16000u);
}

TEST(Scoring, MatchesBruteForceOnRandomLists) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 20; ++i) {
    const auto trials = random_trials(rng, 50 + static_cast<std::size_t>(i) * 10, i % 2 == 0);
    EXPECT_EQ(compute_eer(trials), brute_eer(trials));
    EXPECT_EQ(compute_min_dcf(trials), brute_min_dcf(trials));
  }
}

TEST(Scoring, EerIsInvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    auto trials = random_trials(rng, 40, i % 3 == 0);
    const double eer = compute_eer(trials), dcf = compute_min_dcf(trials);
    auto affine = trials, squashed = trials;
    for (auto& t : affine) t.score = 2.0 * *t.score + 1.0;
    for (auto& t : squashed) t.score = std::tanh(*t.score);
    EXPECT_EQ(compute_eer(affine), eer);
    EXPECT_EQ(compute_eer(squashed), eer);
    EXPECT_EQ(compute_min_dcf(affine), dcf);
    EXPECT_EQ(compute_min_dcf(squashed), dcf);
  }
}

TEST(Scoring, HandComputedCases) {
  // Perfect separation.
  auto perfect = make_trials({true, true, false, false}, {0.9, 0.8, 0.1, 0.2});
  EXPECT_EQ(compute_eer(perfect), 0.0);
  EXPECT_EQ(compute_min_dcf(perfect), 0.0);
  // Fully inverted.
  auto inverted = make_trials({true, true, false, false}, {0.1, 0.2, 0.9, 0.8});
  EXPECT_EQ(compute_eer(inverted), 1.0);
  // Rates meet exactly at t = 0.7: FAR = FRR = 1/3.
  auto meet = make_trials({true, true, true, false, false, false}, {0.9, 0.8, 0.3, 0.7, 0.2, 0.1});
  EXPECT_DOUBLE_EQ(compute_eer(meet), 1.0 / 3.0);
  // Crossing between (1, 0.5) and (0, 0.5): interpolated EER 0.5 at threshold 0.5.
  auto cross = make_trials({true, true, false}, {0.2, 0.6, 0.4});
  const DetMetrics m = compute_det_metrics(cross);
  EXPECT_DOUBLE_EQ(m.eer, 0.5);
  EXPECT_DOUBLE_EQ(m.threshold_at_eer, 0.5);
  // One target between two nontargets: the +infinity threshold wins with cost p, normalised to 1.
  auto dcf = make_trials({true, false, false}, {0.2, 0.1, 0.3});
  EXPECT_DOUBLE_EQ(compute_min_dcf(dcf), 1.0);
  // Balanced prior: min over {1, 0.5 (t=0.2), 1 (t=0.3), 1 (inf)} * 0.5 / 0.5.
  EXPECT_DOUBLE_EQ(compute_min_dcf(dcf, 0.5), 0.5);
}

TEST(Scoring, NormalisedMinDcfNeverExceedsOne) {
  std::mt19937_64 rng(24);
  for (int i = 0; i < 50; ++i) {
    const auto trials = random_trials(rng, 30, i % 2 == 0);
    const double d = compute_min_dcf(trials);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    const double e = compute_eer(trials);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(Scoring, ContractViolations) {
  EXPECT_THROW(compute_eer(make_trials({true, true}, {0.1, 0.2})), ContractError);
  EXPECT_THROW(compute_eer(make_trials({false, false}, {0.1, 0.2})), ContractError);
  auto missing = make_trials({true, false}, {0.1, 0.2});
  missing[0].score.reset();
  EXPECT_THROW(compute_eer(missing), ContractError);
  EXPECT_THROW(compute_min_dcf(make_trials({true, false}, {0.1, 0.2}), 0.0), ConfigError);
}

TEST(Cosine, SymmetryRangeAndScale) {
  std::mt19937_64 rng(25);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(16), b(16);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const double ab = cosine_similarity(a, b);
    EXPECT_EQ(ab, cosine_similarity(b, a));
    EXPECT_GE(ab, -1.0);
    EXPECT_LE(ab, 1.0);
    std::vector<double> a3(a);
    for (auto& v : a3) v *= 3.0;
    EXPECT_NEAR(cosine_similarity(a3, b), ab, 1e-12);
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
  }
  const std::vector<double> zero(4, 0.0), one(4, 1.0), three(3, 1.0);
  EXPECT_THROW(cosine_similarity(zero, one), NumericError);
  EXPECT_THROW(cosine_similarity(one, three), ShapeError);
}

TEST(Histogram, ConservesCountsAndMatchesCsv) {
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Trial> trials;
  for (int i = 0; i < 500; ++i) trials.push_back({"e", "t" + std::to_string(i), i % 3 == 0, u(rng)});
  trials.push_back({"e", "lo", false, -1.0});
  trials.push_back({"e", "hi", true, 1.0});
  const Histogram h = score_histogram(trials);
  EXPECT_EQ(h.total(), trials.size());
  EXPECT_EQ(Histogram::bin_of(-1.0), 0u);
  EXPECT_EQ(Histogram::bin_of(1.0), 39u);
  EXPECT_EQ(Histogram::bin_of(0.0), 20u);
  EXPECT_DOUBLE_EQ(Histogram::bin_low(0), -1.0);
  EXPECT_DOUBLE_EQ(Histogram::bin_high(39), 1.0);

  // Recompute the histogram from the scores CSV and compare with the histogram CSV.
  const auto parsed = parse_scores_csv(scores_to_csv(trials));
  ASSERT_EQ(parsed.size(), trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    EXPECT_EQ(*parsed[i].score, *trials[i].score);
    EXPECT_EQ(parsed[i].target, trials[i].target);
  }
  EXPECT_EQ(histogram_to_csv(score_histogram(parsed)), histogram_to_csv(h));
  const std::string csv = histogram_to_csv(h);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "bin_low,bin_high,count");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 41);

  trials.push_back({"e", "bad", false, 1.5});
  EXPECT_THROW(score_histogram(trials), ContractError);
  EXPECT_THROW(parse_scores_csv("enroll_utt,test_utt,label,score\na,b,maybe,0.1\n"), FormatError);
}

}  // namespace
}  // namespace fvc
