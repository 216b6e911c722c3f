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
#include <cstring>
#include <filesystem>
#include <random>

#include "fvc/corpus.hpp"
#include "fvc/errors.hpp"
#include "fvc/training.hpp"

namespace fvc {
namespace {

namespace fs = std::filesystem;

ModelConfig tiny_model() {
  ModelConfig c;
  c.d_model = 16;
  c.n_blocks = 2;
  c.n_heads = 2;
  c.conv_kernel = 3;
  c.conv_hidden = 16;
  c.prenet_hidden = 16;
  c.postnet_layers = 3;
  c.postnet_channels = 8;
  c.postnet_kernel = 3;
  c.dropout = 0.1;
  return c;
}

TrainConfig tiny_train(std::uint64_t steps) {
  TrainConfig t;
  t.batch_size = 4;
  t.max_steps = steps;
  t.seed = 3;
  return t;
}

// 2 speakers x 5 utterances, one held out per speaker; encoder trained once per binary.
struct Fixture {
  corpus::LoadedCorpus corpus;
  SpeakerEncoder encoder;
  TrainingSet data;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    const fs::path dir = fs::temp_directory_path() / "fvclab_test_training";
    fs::remove_all(dir);
    corpus::build_corpus(2, 5, 4, dir);
    out.corpus = corpus::load_corpus(dir / "manifest.csv");
    std::vector<LabelledMel> mels;
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t i : out.corpus.utterances_of(out.corpus.speakers[s])) mels.push_back({&out.corpus.utterances[i].mel, s});
    EncoderTrainOptions opt;
    opt.epochs = 5;
    out.encoder = train_speaker_encoder(mels, SpeakerEncoderConfig{}, opt).encoder;
    out.data = make_training_set(out.corpus, out.encoder, 1);
    return out;
  }();
  return f;
}

VcCheckpoint fresh(const TrainConfig& t, Stage stage = Stage::Base, const std::optional<VcCheckpoint>& init = {}) {
  return initial_state(tiny_model(), fixture().encoder, fixture().data, stage, t, init);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

double value_of(ad::Var v) { return v.value()[0]; }

// ----------------------------------------------------------------------------- losses

TEST(MelLoss, KnownValuesAndMaskInvariance) {
  const Tensor target = random_tensor({6, 80}, 1);
  ad::Graph g;
  EXPECT_EQ(value_of(mel_loss(g.constant(target), target)), 0.0);
  Tensor shifted = target;
  for (auto& v : shifted.values()) v += 1.0;
  EXPECT_NEAR(value_of(mel_loss(g.constant(shifted), target)), 1.0, 1e-12);

  Tensor padded_pred({9, 80}, 5.0), padded_target({9, 80}, -5.0);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 80; ++j) padded_pred.at(t, j) = shifted.at(t, j), padded_target.at(t, j) = target.at(t, j);
  std::vector<double> mask(9, 0.0);
  std::fill(mask.begin(), mask.begin() + 6, 1.0);
  EXPECT_NEAR(value_of(mel_loss(g.constant(padded_pred), padded_target, mask)), 1.0, 1e-12);
  EXPECT_THROW(mel_loss(g.constant(target), Tensor({5, 80})), ShapeError);
}

TEST(AdversarialLoss, UniformLogitsHandComputedAndMask) {
  ad::Graph g;
  EXPECT_NEAR(value_of(adversarial_loss(g.constant(Tensor({7, 4})), 2)), std::log(4.0), 1e-12);
  const Tensor logits = Tensor::matrix({{1.0, 2.0, 3.0}, {0.5, -1.0, 0.0}});
  const double ce0 = -(3.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  const double ce1 = -(0.0 - std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(0.0)));
  EXPECT_NEAR(value_of(adversarial_loss(g.constant(logits), 2)), 0.5 * (ce0 + ce1), 1e-12);
  const std::vector<double> mask = {1.0, 0.0};
  EXPECT_NEAR(value_of(adversarial_loss(g.constant(logits), 2, mask)), ce0, 1e-12);
  EXPECT_THROW(adversarial_loss(g.constant(logits), 3), IndexError);
}

TEST(Stage, ParsesNames) {
  EXPECT_EQ(parse_stage("base"), Stage::Base);
  EXPECT_EQ(parse_stage("ecl"), Stage::Ecl);
  EXPECT_EQ(to_string(Stage::Ecl), "ecl");
  EXPECT_THROW(parse_stage("BASE"), ConfigError);
}

TEST(LossCsv, RowsRoundTripAtFullPrecision) {
  const LossReport r{12, 0.1, 1.0 / 3.0, std::log(2.0), 0.0, 1e-17};
  const std::string row = loss_csv_row(r);
  double v[5];
  unsigned long long step = 0;
  ASSERT_EQ(std::sscanf(row.c_str(), "%llu,%lf,%lf,%lf,%lf,%lf", &step, &v[0], &v[1], &v[2], &v[3], &v[4]), 6);
  EXPECT_EQ(step, 12u);
  EXPECT_EQ(v[1], 1.0 / 3.0);
  EXPECT_EQ(v[2], std::log(2.0));
  EXPECT_EQ(v[4], 1e-17);
  EXPECT_EQ(kLossCsvHeader, "step,mel_pre,mel_post,adv,ecl,total");
}

// ----------------------------------------------------------------------------- data

TEST(TrainingSet, HoldsOutLastUtterancesAndBuildsCentroids) {
  const auto& f = fixture();
  EXPECT_EQ(f.data.examples.size(), 8u);
  ASSERT_EQ(f.data.centroids.size(), 2u);
  for (const auto& ex : f.data.examples) {
    EXPECT_EQ(ex.features.rows(), ex.mel.rows());
    EXPECT_EQ(ex.reference_embedding.shape(), (Shape{1, 64}));
    EXPECT_NE(ex.utt_id, f.corpus.utterances[f.corpus.utterances_of(f.data.speakers[ex.speaker]).back()].row.utt_id);
  }
  for (std::size_t s = 0; s < 2; ++s) {
    Tensor mean({1, 64});
    double n = 0;
    for (const auto& ex : f.data.examples)
      if (ex.speaker == s) {
        for (std::size_t j = 0; j < 64; ++j) mean[j] += ex.reference_embedding[j];
        ++n;
      }
    for (std::size_t j = 0; j < 64; ++j) EXPECT_NEAR(f.data.centroids[s][j], mean[j] / n, 1e-12);
  }
}

TEST(TrainingSet, LengthBucketsPartitionTheExamples) {
  const auto& data = fixture().data;
  const auto buckets = length_buckets(data, 3);
  EXPECT_EQ(buckets.size(), 3u);
  std::vector<int> seen(data.examples.size(), 0);
  std::size_t prev_max = 0;
  for (const auto& b : buckets) {
    EXPECT_LE(b.size(), 3u);
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t i : b) {
      ++seen[i];
      lo = std::min(lo, data.examples[i].mel.rows());
      hi = std::max(hi, data.examples[i].mel.rows());
    }
    EXPECT_GE(lo, prev_max);
    prev_max = hi;
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

// ----------------------------------------------------------------------------- trainer

TEST(Trainer, TotalIsTheSumOfItsTerms) {
  const TrainConfig t = tiny_train(3);
  Trainer tr(fresh(t), fixture().data, t);
  for (int i = 0; i < 3; ++i) {
    const LossReport r = tr.step();
    EXPECT_EQ(r.step, static_cast<std::uint64_t>(i + 1));
    EXPECT_EQ(r.ecl, 0.0);
    EXPECT_NEAR(r.total, r.mel_pre + r.mel_post + r.adv, 1e-12);
  }
}

TEST(Trainer, BaseStageNeverEvaluatesTheSpeakerEncoder) {
  const TrainConfig t = tiny_train(5);
  Trainer tr(fresh(t), fixture().data, t);
  EXPECT_EQ(tr.ecl_alpha(), 0.0);
  const std::uint64_t before = tr.state().encoder.evaluations();
  for (int i = 0; i < 5; ++i) tr.step();
  EXPECT_EQ(tr.state().encoder.evaluations(), before);
}

TEST(Trainer, FixedSeedRunsAreBitIdentical) {
  const TrainConfig t = tiny_train(6);
  std::string logs[2];
  std::uint64_t sums[2];
  for (int k = 0; k < 2; ++k) {
    const VcCheckpoint end = train(fresh(t), fixture().data, t, [&](const LossReport& r) { logs[k] += loss_csv_row(r); });
    sums[k] = end.params.checksum();
  }
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(sums[0], sums[1]);
  TrainConfig other = t;
  other.seed = 4;
  std::string log3;
  train(initial_state(tiny_model(), fixture().encoder, fixture().data, Stage::Base, other, std::nullopt), fixture().data,
        other, [&](const LossReport& r) { log3 += loss_csv_row(r); });
  EXPECT_NE(log3, logs[0]);
}

TEST(Trainer, LossDecreasesOnOneBatch) {
  TrainConfig t = tiny_train(50);
  t.batch_size = 8;
  ModelConfig m = tiny_model();
  m.dropout = 0.0;
  std::vector<double> post;
  train(initial_state(m, fixture().encoder, fixture().data, Stage::Base, t, std::nullopt), fixture().data, t,
        [&](const LossReport& r) { post.push_back(r.mel_post); });
  ASSERT_EQ(post.size(), 50u);
  EXPECT_LT(post.back(), 0.5 * post.front());
}

TEST(Trainer, EclStageReducesConsistencyLossAndLeavesEncoderUntouched) {
  TrainConfig t = tiny_train(40);
  t.batch_size = 8;
  const std::uint64_t enc_sum = fixture().encoder.checksum();
  const VcCheckpoint base = train(fresh(t), fixture().data, t);
  EXPECT_EQ(base.encoder.checksum(), enc_sum);

  TrainConfig e = t;
  e.max_steps = 40;
  VcCheckpoint start = fresh(e, Stage::Ecl, base);
  EXPECT_EQ(start.step, 0u);
  EXPECT_EQ(start.stage, Stage::Ecl);
  EXPECT_TRUE(start.optimizer_state.empty());
  std::vector<LossReport> reports;
  const VcCheckpoint end = train(start, fixture().data, e, [&](const LossReport& r) { reports.push_back(r); });
  const double alpha = end.model.ecl_alpha;
  for (const auto& r : reports) {
    EXPECT_GT(r.ecl, 0.0);
    EXPECT_NEAR(r.total, r.mel_pre + r.mel_post + r.adv + alpha * r.ecl, 1e-12);
  }
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) first += reports[i].ecl, last += reports[reports.size() - 1 - i].ecl;
  EXPECT_LT(last, first);
  EXPECT_EQ(end.encoder.checksum(), enc_sum);
  EXPECT_GT(end.encoder.evaluations(), 0u);
}

TEST(Trainer, StageContracts) {
  const TrainConfig t = tiny_train(2);
  EXPECT_THROW(fresh(t, Stage::Ecl), ConfigError);
  VcCheckpoint ecl = train(fresh(t), fixture().data, t);
  ecl.stage = Stage::Ecl;
  EXPECT_THROW(fresh(t, Stage::Base, ecl), ConfigError);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const TrainConfig full = tiny_train(10);
  std::string full_log;
  const VcCheckpoint a = train(fresh(full), fixture().data, full, [&](const LossReport& r) {
    if (r.step > 5) full_log += loss_csv_row(r);
  });

  TrainConfig half = full;
  half.max_steps = 5;
  const VcCheckpoint mid = train(fresh(half), fixture().data, half);
  const fs::path p = fs::temp_directory_path() / "fvclab_test_training_mid.fvck";
  save_vc_checkpoint(p, mid);
  const VcCheckpoint loaded = load_vc_checkpoint(p);
  std::string resumed_log;
  const VcCheckpoint b = train(fresh(full, Stage::Base, loaded), fixture().data, full,
                               [&](const LossReport& r) { resumed_log += loss_csv_row(r); });
  EXPECT_EQ(resumed_log, full_log);
  EXPECT_EQ(a.params.checksum(), b.params.checksum());
  EXPECT_EQ(b.step, 10u);
}

TEST(Checkpoint, RoundTripsBitwise) {
  const TrainConfig t = tiny_train(3);
  const VcCheckpoint ck = train(fresh(t), fixture().data, t);
  const fs::path p = fs::temp_directory_path() / "fvclab_test_training_rt.fvck";
  save_vc_checkpoint(p, ck);
  const VcCheckpoint back = load_vc_checkpoint(p);
  EXPECT_EQ(back.step, ck.step);
  EXPECT_EQ(back.stage, ck.stage);
  EXPECT_EQ(back.speakers, ck.speakers);
  EXPECT_TRUE(bitwise_equal(back.centroids, ck.centroids));
  EXPECT_EQ(back.encoder.checksum(), ck.encoder.checksum());
  ASSERT_EQ(back.params.tensors().size(), ck.params.tensors().size());
  for (const auto& [name, tensor] : ck.params.tensors()) EXPECT_TRUE(bitwise_equal(back.params.at(name), tensor)) << name;
  ASSERT_EQ(back.optimizer_state.size(), ck.optimizer_state.size());
  for (const auto& [name, tensor] : ck.optimizer_state) EXPECT_TRUE(bitwise_equal(back.optimizer_state.at(name), tensor)) << name;
  EXPECT_EQ(encode_checkpoint(to_checkpoint_file(back)), encode_checkpoint(to_checkpoint_file(ck)));
  EXPECT_EQ(back.model.d_model, 16u);

  std::string bytes = encode_checkpoint(to_checkpoint_file(ck));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Trainer, NonFiniteParametersAreReported) {
  const TrainConfig t = tiny_train(1);
  VcCheckpoint s = fresh(t);
  s.params.at("mel_proj.bias")[0] = std::nan("");
  Trainer tr(s, fixture().data, t);
  EXPECT_THROW(tr.step(), NumericError);
}

// ----------------------------------------------------------------------------- conversion

TEST(Convert, PreservesLengthAndDependsOnTarget) {
  const TrainConfig t = tiny_train(3);
  VcCheckpoint ck = train(fresh(t), fixture().data, t);
  const Tensor feats = random_tensor({50, 256}, 30);
  const Tensor a = convert(ck, feats, ck.centroid(0));
  const Tensor b = convert(ck, feats, ck.centroid(1));
  EXPECT_EQ(a.shape(), (Shape{50, 80}));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 0.0);
  EXPECT_TRUE(bitwise_equal(a, convert(ck, feats, ck.centroid(0))));
  EXPECT_EQ(ck.speaker_index(ck.speakers[1]), 1u);
  EXPECT_THROW(ck.speaker_index("nobody"), IndexError);
}

}  // namespace
}  // namespace fvc
