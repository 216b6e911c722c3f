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

#include "fvc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "fvc/errors.hpp"
#include "fvc/optimizer.hpp"

namespace fvc {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ULL ^ (b + 0x2545f4914f6cdd1dULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Target {
  std::string speaker;
  corpus::Language language;
  const corpus::Utterance* reference;
  Tensor conditioning;
};

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::ML:
      return "ML";
    case Condition::CL:
      return "CL";
    case Condition::CS:
      return "CS";
  }
  return "?";
}

std::string_view to_string(TargetSet s) { return s == TargetSet::InSet ? "in" : "oneshot"; }

Condition parse_condition(std::string_view s) {
  if (s == "ML") return Condition::ML;
  if (s == "CL") return Condition::CL;
  if (s == "CS") return Condition::CS;
  throw ConfigError("unknown condition '" + std::string(s) + "' (expected ML, CL or CS)");
}

TargetSet parse_target_set(std::string_view s) {
  if (s == "in") return TargetSet::InSet;
  if (s == "oneshot") return TargetSet::OneShot;
  throw ConfigError("unknown target set '" + std::string(s) + "' (expected in or oneshot)");
}

corpus::Language source_language(Condition c, corpus::Language target_language) {
  switch (c) {
    case Condition::ML:
      return target_language;
    case Condition::CL:
      return target_language == corpus::Language::A ? corpus::Language::B : corpus::Language::A;
    case Condition::CS:
      return corpus::Language::Mixed;
  }
  return target_language;
}

const corpus::Utterance& reference_utterance(const corpus::LoadedCorpus& c, const std::string& speaker) {
  const auto utts = c.utterances_of(speaker);
  if (utts.empty()) throw IndexError("speaker '" + speaker + "' has no utterances");
  return c.utterances[utts.back()];
}

SpeakerEncoder train_probe_encoder(const std::vector<const corpus::LoadedCorpus*>& corpora, std::size_t epochs,
                                   std::uint64_t seed) {
  std::vector<LabelledMel> data;
  std::size_t n_speakers = 0;
  for (const auto* c : corpora) {
    for (const auto& spk : c->speakers) {
      const auto utts = c->utterances_of(spk);
      for (std::size_t k = 0; k + 1 < utts.size(); ++k) data.push_back({&c->utterances[utts[k]].mel, n_speakers});
      ++n_speakers;
    }
  }
  EncoderTrainOptions opt;
  opt.epochs = epochs;
  opt.seed = seed;
  return train_speaker_encoder(data, SpeakerEncoderConfig::probe(n_speakers), opt).encoder;
}

double encoder_speaker_probe_accuracy(VcCheckpoint& ck, const corpus::LoadedCorpus& corpus,
                                      std::size_t holdout_per_speaker, std::size_t iterations,
                                      std::uint64_t seed) {
  const std::size_t n_spk = corpus.speakers.size();
  if (n_spk < 2) throw ConfigError("speaker probe needs at least two speakers");
  std::vector<std::vector<double>> train_rows, test_rows;
  std::vector<std::size_t> train_labels, test_labels;
  for (std::size_t s = 0; s < n_spk; ++s) {
    const auto utts = corpus.utterances_of(corpus.speakers[s]);
    if (utts.size() <= holdout_per_speaker) throw ConfigError("speaker probe needs a training utterance per speaker");
    for (std::size_t i = 0; i < utts.size(); ++i) {
      ad::Graph g(false);
      ForwardContext ctx{g, ck.params, ck.model};
      const Tensor out = encode(ctx, g.constant(corpus.utterances[utts[i]].features)).value();
      const bool held_out = i + holdout_per_speaker >= utts.size();
      for (std::size_t t = 0; t < out.rows(); ++t) {
        const auto row = out.row(t);
        (held_out ? test_rows : train_rows).emplace_back(row.begin(), row.end());
        (held_out ? test_labels : train_labels).push_back(s);
      }
    }
  }
  const std::size_t d = train_rows.front().size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& r : train_rows)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / static_cast<double>(train_rows.size());
  for (const auto& r : train_rows)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (r[j] - mu[j]) * (r[j] - mu[j]) / static_cast<double>(train_rows.size());
  for (auto& v : sd) v = std::max(std::sqrt(v), 1e-6);
  auto standardize = [&](const std::vector<std::vector<double>>& rows) {
    Tensor x({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) x.at(i, j) = (rows[i][j] - mu[j]) / sd[j];
    return x;
  };
  const Tensor x_train = standardize(train_rows), x_test = standardize(test_rows);
  Tensor onehot({train_rows.size(), n_spk}, 0.0);
  for (std::size_t i = 0; i < train_labels.size(); ++i) onehot.at(i, train_labels[i]) = 1.0;

  ParameterSet probe;
  std::mt19937_64 rng(seed);
  init_uniform_fan_in(probe.add("weight", {d, n_spk}), d, rng);
  probe.add("bias", {1, n_spk});
  probe.set_requires_grad(true);
  Adam adam(AdamConfig{1e-2, 0.9, 0.98, 1e-9});
  for (std::size_t it = 0; it < iterations; ++it) {
    probe.zero_grad();
    ad::Graph g(true);
    ad::Var logits = ad::add_bias(ad::matmul(g.constant_ref(x_train), g.parameter(probe.at("weight"))),
                                  g.parameter(probe.at("bias")));
    ad::Var loss = ad::scale(ad::sum(ad::mul(ad::log_softmax(logits), g.constant_ref(onehot))),
                             -1.0 / static_cast<double>(train_rows.size()));
    g.backward(loss);
    adam.step(probe);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    std::size_t best = 0;
    double best_v = -HUGE_VAL;
    for (std::size_t k = 0; k < n_spk; ++k) {
      double v = probe.at("bias")[k];
      for (std::size_t j = 0; j < d; ++j) v += x_test.at(i, j) * probe.at("weight").at(j, k);
      if (v > best_v) best_v = v, best = k;
    }
    correct += best == test_labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test_rows.size());
}

EvalResult evaluate_conversion(VcCheckpoint& ck, const corpus::LoadedCorpus& train_corpus,
                               const corpus::LoadedCorpus* oneshot_corpus, Condition condition,
                               TargetSet set, SpeakerEncoder& probe, const EvalOptions& opt) {
  if (opt.sources_per_target == 0) throw ConfigError("sources_per_target must be positive");
  std::vector<Target> targets;
  if (set == TargetSet::InSet) {
    for (std::size_t s = 0; s < ck.speakers.size(); ++s) {
      const auto& ref = reference_utterance(train_corpus, ck.speakers[s]);
      targets.push_back({ck.speakers[s], ref.row.language, &ref, ck.centroid(s)});
    }
  } else {
    if (oneshot_corpus == nullptr || oneshot_corpus->speakers.empty()) {
      throw ConfigError("one-shot evaluation needs a non-empty one-shot speaker set");
    }
    for (const auto& spk : oneshot_corpus->speakers) {
      if (std::find(ck.speakers.begin(), ck.speakers.end(), spk) != ck.speakers.end()) {
        throw ContractError("one-shot speaker " + spk + " was seen in training");
      }
      const auto& ref = reference_utterance(*oneshot_corpus, spk);
      targets.push_back({spk, ref.row.language, &ref, ck.encoder.extract(ref.mel)});
    }
  }

  std::vector<Tensor> reference_embeddings;
  for (const auto& t : targets) reference_embeddings.push_back(probe.extract(t.reference->mel));

  EvalResult result;
  std::vector<double> target_scores;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    for (std::size_t k = 0; k < opt.sources_per_target; ++k) {
      const std::uint64_t seed = mix(mix(opt.seed, j), k);
      const auto seq = corpus::random_phone_sequence(source_language(condition, targets[j].language), seed);
      const Tensor mel = convert(ck, corpus::extract_linguistic_features(seq, seed), targets[j].conditioning);
      const Tensor emb = probe.extract(mel);
      const std::string test_id =
          "conv_" + std::string(to_string(condition)) + "_" + targets[j].speaker + "_" + std::to_string(k);
      ++result.conversions;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        Trial t{targets[i].reference->row.utt_id, test_id, i == j,
                cosine_similarity(emb.values(), reference_embeddings[i].values())};
        if (t.target) target_scores.push_back(*t.score);
        result.trials.push_back(std::move(t));
      }
    }
  }
  double sum = 0.0;
  for (double s : target_scores) sum += s;
  result.mean_target_score = sum / static_cast<double>(target_scores.size());
  result.histogram = score_histogram(result.trials);
  if (targets.size() >= 2) result.metrics = compute_det_metrics(result.trials);
  return result;
}

}  // namespace fvc
