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

#include "fvc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fvc/errors.hpp"

namespace fvc {

namespace {

struct OperatingPoint {
  double threshold;
  double far;
  double frr;
};

// Operating points in increasing threshold order, from (FAR 1, FRR 0) at the lowest
// score to (FAR 0, FRR 1) at +infinity.
std::vector<OperatingPoint> sweep(std::span<const Trial> trials) {
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(trials.size());
  std::size_t n_target = 0;
  for (const auto& t : trials) {
    if (!t.score) throw ContractError("trial " + t.enroll_utt + "/" + t.test_utt + " has no score");
    if (!std::isfinite(*t.score)) throw ContractError("trial " + t.enroll_utt + "/" + t.test_utt + " has a non-finite score");
    scored.emplace_back(*t.score, t.target);
    if (t.target) ++n_target;
  }
  const std::size_t n_nontarget = scored.size() - n_target;
  if (n_target == 0 || n_nontarget == 0) {
    throw ContractError("detection metrics need at least one target and one nontarget trial");
  }
  std::sort(scored.begin(), scored.end());
  std::vector<OperatingPoint> points;
  std::size_t targets_below = 0, nontargets_below = 0;
  const double nt = static_cast<double>(n_target), nn = static_cast<double>(n_nontarget);
  for (std::size_t i = 0; i < scored.size();) {
    const double t = scored[i].first;
    points.push_back({t, static_cast<double>(n_nontarget - nontargets_below) / nn,
                      static_cast<double>(targets_below) / nt});
    for (; i < scored.size() && scored[i].first == t; ++i) {
      if (scored[i].second) {
        ++targets_below;
      } else {
        ++nontargets_below;
      }
    }
  }
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

std::pair<double, double> eer_and_threshold(std::span<const Trial> trials) {
  const auto points = sweep(trials);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.frr < p.far) continue;
    if (p.frr == p.far || i == 0) return {p.far, p.threshold};
    const auto& q = points[i - 1];
    const double a = (q.far - q.frr) / ((q.far - q.frr) + (p.frr - p.far));
    const double eer = q.far + a * (p.far - q.far);
    const double thr = std::isinf(p.threshold) ? q.threshold : q.threshold + a * (p.threshold - q.threshold);
    return {eer, thr};
  }
  return {points.back().far, points.back().threshold};
}

std::string label_name(bool target) { return target ? "target" : "nontarget"; }

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) throw NumericError("cosine_similarity: vector norm below 1e-12");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double compute_eer(std::span<const Trial> trials) { return eer_and_threshold(trials).first; }

double compute_min_dcf(std::span<const Trial> trials, double p_target, double c_miss, double c_fa) {
  if (!(p_target > 0.0 && p_target < 1.0)) throw ConfigError("p_target must be in (0, 1)");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : sweep(trials)) {
    best = std::min(best, c_miss * p.frr * p_target + c_fa * p.far * (1.0 - p_target));
  }
  return best / std::min(c_miss * p_target, c_fa * (1.0 - p_target));
}

DetMetrics compute_det_metrics(std::span<const Trial> trials) {
  const auto [eer, thr] = eer_and_threshold(trials);
  return {eer, compute_min_dcf(trials), thr};
}

double Histogram::bin_low(std::size_t k) { return (static_cast<double>(k) - 20.0) / 20.0; }
double Histogram::bin_high(std::size_t k) { return (static_cast<double>(k) - 19.0) / 20.0; }

std::size_t Histogram::bin_of(double score) {
  if (!(score >= -1.0 && score <= 1.0)) {
    throw ContractError("score " + std::to_string(score) + " is outside [-1, 1]");
  }
  const auto k = static_cast<std::size_t>(std::floor((score + 1.0) * 20.0));
  return std::min(k, kBins - 1);
}

std::size_t Histogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

Histogram score_histogram(std::span<const Trial> trials) {
  Histogram h;
  for (const auto& t : trials) {
    if (t.score) ++h.counts[Histogram::bin_of(*t.score)];
  }
  return h;
}

std::string trials_to_csv(std::span<const Trial> trials) {
  std::string out = "enroll_utt,test_utt,label\n";
  for (const auto& t : trials) out += t.enroll_utt + "," + t.test_utt + "," + label_name(t.target) + "\n";
  return out;
}

std::string scores_to_csv(std::span<const Trial> trials) {
  std::string out = "enroll_utt,test_utt,label,score\n";
  char buf[64];
  for (const auto& t : trials) {
    if (!t.score) throw ContractError("scores_to_csv: unscored trial");
    std::snprintf(buf, sizeof buf, "%.17g", *t.score);
    out += t.enroll_utt + "," + t.test_utt + "," + label_name(t.target) + "," + buf + "\n";
  }
  return out;
}

std::string histogram_to_csv(const Histogram& h) {
  std::string out = "bin_low,bin_high,count\n";
  char buf[96];
  for (std::size_t k = 0; k < Histogram::kBins; ++k) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f,%zu\n", Histogram::bin_low(k), Histogram::bin_high(k), h.counts[k]);
    out += buf;
  }
  return out;
}

std::vector<Trial> parse_scores_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "enroll_utt,test_utt,label,score") {
    throw FormatError("scores CSV: bad header");
  }
  std::vector<Trial> trials;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string enroll, test, label, score;
    if (!std::getline(ls, enroll, ',') || !std::getline(ls, test, ',') || !std::getline(ls, label, ',') ||
        !std::getline(ls, score)) {
      throw FormatError("scores CSV: malformed line '" + line + "'");
    }
    if (label != "target" && label != "nontarget") throw FormatError("scores CSV: bad label '" + label + "'");
    Trial t{enroll, test, label == "target", std::nullopt};
    try {
      t.score = std::stod(score);
    } catch (const std::exception&) {
      throw FormatError("scores CSV: bad score '" + score + "'");
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

}  // namespace fvc
