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
#include <filesystem>
#include <set>

#include "fvc/corpus.hpp"
#include "fvc/errors.hpp"
#include "fvc/evaluation.hpp"

namespace fvc {
namespace {

namespace fs = std::filesystem;

struct Fixture {
  corpus::LoadedCorpus train_corpus;
  corpus::LoadedCorpus oneshot_corpus;
  corpus::LoadedCorpus clash_corpus;
  VcCheckpoint ck;
  SpeakerEncoder probe;
};

// 4 training speakers (2 per language), 2 unseen speakers and a tiny base model.
Fixture& fixture() {
  static Fixture f = [] {
    Fixture out;
    const fs::path dir = fs::temp_directory_path() / "fvclab_test_evaluation";
    fs::remove_all(dir);
    corpus::build_corpus(4, 5, 11, dir / "train");
    corpus::build_corpus(2, 5, 12, dir / "oneshot");
    corpus::build_corpus(2, 4, 11, dir / "clash");
    out.train_corpus = corpus::load_corpus(dir / "train" / "manifest.csv");
    out.oneshot_corpus = corpus::load_corpus(dir / "oneshot" / "manifest.csv");
    out.clash_corpus = corpus::load_corpus(dir / "clash" / "manifest.csv");

    std::vector<LabelledMel> mels;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i : out.train_corpus.utterances_of(out.train_corpus.speakers[s]))
        mels.push_back({&out.train_corpus.utterances[i].mel, s});
    SpeakerEncoderConfig ecfg;
    ecfg.n_speakers = 4;
    EncoderTrainOptions eopt;
    eopt.epochs = 5;
    SpeakerEncoder enc = train_speaker_encoder(mels, ecfg, eopt).encoder;
    const TrainingSet data = make_training_set(out.train_corpus, enc, 1);
    ModelConfig m;
    m.d_model = 16;
    m.n_blocks = 1;
    m.conv_kernel = 3;
    m.conv_hidden = 16;
    m.prenet_hidden = 16;
    m.postnet_layers = 3;
    m.postnet_channels = 8;
    m.postnet_kernel = 3;
    TrainConfig t;
    t.max_steps = 4;
    out.ck = train(initial_state(m, enc, data, Stage::Base, t, std::nullopt), data, t);
    out.probe = train_probe_encoder({&out.train_corpus, &out.oneshot_corpus}, 10, 1);
    return out;
  }();
  return f;
}

TEST(Evaluation, ParsersAndLanguageMapping) {
  EXPECT_EQ(parse_condition("CL"), Condition::CL);
  EXPECT_EQ(parse_target_set("oneshot"), TargetSet::OneShot);
  EXPECT_THROW(parse_condition("XL"), ConfigError);
  EXPECT_THROW(parse_target_set("out"), ConfigError);
  using corpus::Language;
  EXPECT_EQ(source_language(Condition::ML, Language::B), Language::B);
  EXPECT_EQ(source_language(Condition::CL, Language::B), Language::A);
  EXPECT_EQ(source_language(Condition::CL, Language::A), Language::B);
  EXPECT_EQ(source_language(Condition::CS, Language::A), Language::Mixed);
}

TEST(Evaluation, ReferenceIsTheLastUtterance) {
  const auto& c = fixture().train_corpus;
  for (const auto& spk : c.speakers)
    EXPECT_EQ(reference_utterance(c, spk).row.utt_id, c.utterances[c.utterances_of(spk).back()].row.utt_id);
}

TEST(Evaluation, ProbeScoresNaturalSpeechHigherForTheSameSpeaker) {
  auto& f = fixture();
  EXPECT_EQ(f.probe.config().hidden, 96u);
  EXPECT_FALSE(f.probe.config().std_pooling);
  EXPECT_NE(f.probe.params().parameter_count(), f.ck.encoder.params().parameter_count());
  const auto& c = f.train_corpus;
  double same = 0, cross = 0;
  std::size_t n_same = 0, n_cross = 0;
  for (const auto& spk : c.speakers) {
    for (const auto& other : c.speakers) {
      const Tensor ref = f.probe.extract(reference_utterance(c, other).mel);
      const auto utts = c.utterances_of(spk);
      for (std::size_t k = 0; k + 1 < utts.size(); ++k) {
        const double s = cosine_similarity(f.probe.extract(c.utterances[utts[k]].mel).values(), ref.values());
        (spk == other ? same : cross) += s;
        ++(spk == other ? n_same : n_cross);
      }
    }
  }
  EXPECT_GT(same / n_same, cross / n_cross);
}

TEST(Evaluation, AllSixCombinationsProduceConsistentTables) {
  auto& f = fixture();
  EvalOptions opt;
  opt.sources_per_target = 2;
  opt.seed = 5;
  for (Condition cond : {Condition::ML, Condition::CL, Condition::CS}) {
    for (TargetSet set : {TargetSet::InSet, TargetSet::OneShot}) {
      const EvalResult r = evaluate_conversion(f.ck, f.train_corpus, &f.oneshot_corpus, cond, set, f.probe, opt);
      const std::size_t n_targets = set == TargetSet::InSet ? 4 : 2;
      EXPECT_EQ(r.conversions, n_targets * 2);
      EXPECT_EQ(r.trials.size(), n_targets * n_targets * 2);
      EXPECT_EQ(r.histogram.total(), r.trials.size());
      std::size_t targets = 0;
      std::set<std::pair<std::string, std::string>> pairs;
      double sum = 0;
      for (const auto& t : r.trials) {
        ASSERT_TRUE(t.score.has_value());
        EXPECT_GE(*t.score, -1.0);
        EXPECT_LE(*t.score, 1.0);
        EXPECT_TRUE(pairs.insert({t.enroll_utt, t.test_utt}).second);
        if (t.target) ++targets, sum += *t.score;
      }
      EXPECT_EQ(targets, r.conversions);
      EXPECT_NEAR(r.mean_target_score, sum / static_cast<double>(targets), 1e-12);
      EXPECT_GE(r.metrics.eer, 0.0);
      EXPECT_LE(r.metrics.eer, 1.0);
      EXPECT_GE(r.metrics.min_dcf, 0.0);
      EXPECT_LE(r.metrics.min_dcf, 1.0);
    }
  }
}

TEST(Evaluation, IsDeterministic) {
  auto& f = fixture();
  EvalOptions opt;
  opt.sources_per_target = 1;
  const EvalResult a = evaluate_conversion(f.ck, f.train_corpus, nullptr, Condition::CS, TargetSet::InSet, f.probe, opt);
  const EvalResult b = evaluate_conversion(f.ck, f.train_corpus, nullptr, Condition::CS, TargetSet::InSet, f.probe, opt);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(*a.trials[i].score, *b.trials[i].score);
}

TEST(Evaluation, OneShotTargetsMustBeUnseenAndPresent) {
  auto& f = fixture();
  EvalOptions opt;
  opt.sources_per_target = 1;
  EXPECT_THROW(evaluate_conversion(f.ck, f.train_corpus, &f.clash_corpus, Condition::ML, TargetSet::OneShot, f.probe, opt),
               ContractError);
  EXPECT_THROW(evaluate_conversion(f.ck, f.train_corpus, nullptr, Condition::ML, TargetSet::OneShot, f.probe, opt),
               ConfigError);
  opt.sources_per_target = 0;
  EXPECT_THROW(evaluate_conversion(f.ck, f.train_corpus, nullptr, Condition::ML, TargetSet::InSet, f.probe, opt),
               ConfigError);
}

TEST(Evaluation, EncoderProbeAccuracyIsAFraction) {
  auto& f = fixture();
  const double a = encoder_speaker_probe_accuracy(f.ck, f.train_corpus, 1, 50, 3);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
  EXPECT_EQ(a, encoder_speaker_probe_accuracy(f.ck, f.train_corpus, 1, 50, 3));
  EXPECT_THROW(encoder_speaker_probe_accuracy(f.ck, f.train_corpus, 5, 50, 3), ConfigError);
}

}  // namespace
}  // namespace fvc
