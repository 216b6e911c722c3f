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

#include "fvc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "fvc/errors.hpp"

namespace fvc {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ULL ^ (b + 0xd1b54a32d192ed03ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t count_valid(std::span<const double> mask, std::size_t rows) {
  if (mask.empty()) return rows;
  if (mask.size() != rows) {
    throw ShapeError("mask of length " + std::to_string(mask.size()) + " for " + std::to_string(rows) + " rows");
  }
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](double m) { return m != 0.0; }));
}

Tensor pad_rows(const Tensor& x, std::size_t rows) {
  Tensor out({rows, x.cols()});
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  return out;
}

// ModelConfig <-> "config.*" scalar tensors.
struct ConfigField {
  const char* name;
  std::size_t ModelConfig::*count = nullptr;
  double ModelConfig::*real = nullptr;
  bool ModelConfig::*flag = nullptr;
};

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      {"d_model", &ModelConfig::d_model},
      {"n_blocks", &ModelConfig::n_blocks},
      {"n_heads", &ModelConfig::n_heads},
      {"conv_kernel", &ModelConfig::conv_kernel},
      {"conv_hidden", &ModelConfig::conv_hidden},
      {"prenet_hidden", &ModelConfig::prenet_hidden},
      {"postnet_layers", &ModelConfig::postnet_layers},
      {"postnet_channels", &ModelConfig::postnet_channels},
      {"postnet_kernel", &ModelConfig::postnet_kernel},
      {"n_mels", &ModelConfig::n_mels},
      {"d_linguistic", &ModelConfig::d_linguistic},
      {"d_speaker", &ModelConfig::d_speaker},
      {"n_speakers", &ModelConfig::n_speakers},
      {"grl_lambda", nullptr, &ModelConfig::grl_lambda},
      {"ecl_alpha", nullptr, &ModelConfig::ecl_alpha},
      {"dropout", nullptr, &ModelConfig::dropout},
      {"use_grl", nullptr, nullptr, &ModelConfig::use_grl},
  };
  return fields;
}

Tensor encode_ids(const std::vector<std::string>& ids) {
  std::string joined;
  for (const auto& id : ids) joined += id + '\n';
  Tensor t({joined.size()});
  for (std::size_t i = 0; i < joined.size(); ++i) t[i] = static_cast<unsigned char>(joined[i]);
  return t;
}

std::vector<std::string> decode_ids(const Tensor& t) {
  std::vector<std::string> ids;
  std::string cur;
  for (double v : t.values()) {
    if (!(v >= 0.0 && v < 256.0)) throw FormatError("checkpoint: malformed speaker id table");
    const char c = static_cast<char>(static_cast<unsigned char>(v));
    if (c == '\n') {
      ids.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) throw FormatError("checkpoint: unterminated speaker id table");
  return ids;
}

const Tensor& require(const TensorMap& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("checkpoint is missing " + key);
  return it->second;
}

}  // namespace

std::string_view to_string(Stage s) { return s == Stage::Base ? "base" : "ecl"; }

Stage parse_stage(std::string_view s) {
  if (s == "base") return Stage::Base;
  if (s == "ecl") return Stage::Ecl;
  throw ConfigError("unknown stage '" + std::string(s) + "' (expected base or ecl)");
}

std::string loss_csv_row(const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<unsigned long long>(r.step), r.mel_pre, r.mel_post, r.adv, r.ecl, r.total);
  return buf;
}

// --------------------------------------------------------------------------- losses

ad::Var mel_loss(ad::Var pred, const Tensor& target, std::span<const double> mask) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mel_loss: prediction " + shape_to_string(pred.shape()) + " vs target " +
                     shape_to_string(target.shape()));
  }
  const std::size_t valid = count_valid(mask, pred.rows());
  if (valid == 0) throw LengthError("mel_loss: every frame is masked");
  ad::Var diff = ad::sub(pred, pred.graph().constant_ref(target));
  ad::Var sq = ad::mul(diff, diff);
  if (!mask.empty()) sq = ad::mask_rows(sq, mask);
  return ad::scale(ad::sum(sq), 1.0 / static_cast<double>(valid * pred.cols()));
}

ad::Var adversarial_loss(ad::Var logits, std::size_t speaker, std::span<const double> mask) {
  if (speaker >= logits.cols()) {
    throw IndexError("adversarial_loss: speaker " + std::to_string(speaker) + " with " +
                     std::to_string(logits.cols()) + " classes");
  }
  const std::size_t valid = count_valid(mask, logits.rows());
  if (valid == 0) throw LengthError("adversarial_loss: every frame is masked");
  ad::Var nll = ad::slice_cols(ad::log_softmax(logits), speaker, 1);
  if (!mask.empty()) nll = ad::mask_rows(nll, mask);
  return ad::scale(ad::sum(nll), -1.0 / static_cast<double>(valid));
}

// --------------------------------------------------------------------------- data

TrainingSet make_training_set(const corpus::LoadedCorpus& corpus, SpeakerEncoder& encoder,
                              std::size_t holdout_per_speaker) {
  TrainingSet data;
  data.speakers = corpus.speakers;
  if (data.speakers.size() < 2) throw ConfigError("training needs at least 2 speakers");
  for (std::size_t s = 0; s < data.speakers.size(); ++s) {
    const auto utts = corpus.utterances_of(data.speakers[s]);
    if (utts.size() <= holdout_per_speaker) {
      throw ConfigError("speaker " + data.speakers[s] + " has no utterances left after holding out " +
                        std::to_string(holdout_per_speaker));
    }
    const std::size_t n = utts.size() - holdout_per_speaker;
    Tensor centroid({1, encoder.config().embedding_dim});
    for (std::size_t k = 0; k < n; ++k) {
      const auto& u = corpus.utterances[utts[k]];
      TrainingExample ex{u.row.utt_id, s, u.features, u.mel, encoder.extract(u.mel).reshaped({1, centroid.size()})};
      for (std::size_t c = 0; c < centroid.size(); ++c) centroid[c] += ex.reference_embedding[c];
      data.examples.push_back(std::move(ex));
    }
    for (auto& v : centroid.values()) v /= static_cast<double>(n);
    data.centroids.push_back(std::move(centroid));
  }
  return data;
}

std::vector<std::vector<std::size_t>> length_buckets(const TrainingSet& data, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (data.examples.empty()) throw ConfigError("training set is empty");
  std::vector<std::size_t> order(data.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.examples[a].mel.rows() < data.examples[b].mel.rows();
  });
  std::vector<std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    buckets.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(i + batch_size, order.size())));
  }
  return buckets;
}

// --------------------------------------------------------------------------- checkpoint

Tensor VcCheckpoint::centroid(std::size_t speaker) const {
  if (speaker >= centroids.rows()) throw IndexError("speaker index " + std::to_string(speaker) + " out of range");
  auto row = centroids.row(speaker);
  return Tensor({1, row.size()}, std::vector<double>(row.begin(), row.end()));
}

std::size_t VcCheckpoint::speaker_index(std::string_view id) const {
  auto it = std::find(speakers.begin(), speakers.end(), id);
  if (it == speakers.end()) throw IndexError("speaker '" + std::string(id) + "' is not in the checkpoint");
  return static_cast<std::size_t>(it - speakers.begin());
}

CheckpointFile to_checkpoint_file(const VcCheckpoint& ck) {
  CheckpointFile f;
  for (const auto& [name, t] : ck.params.tensors()) {
    f.tensors.emplace("vc/" + name, Tensor(t.shape(), std::vector<double>(t.values().begin(), t.values().end())));
  }
  f.tensors.merge(ck.encoder.to_tensors("spkenc/"));
  f.tensors.emplace("centroids", ck.centroids);
  f.tensors.emplace("meta.speakers", encode_ids(ck.speakers));
  for (const auto& field : config_fields()) {
    double v = 0.0;
    if (field.count) v = static_cast<double>(ck.model.*field.count);
    if (field.real) v = ck.model.*field.real;
    if (field.flag) v = ck.model.*field.flag ? 1.0 : 0.0;
    f.tensors.emplace(std::string("config.") + field.name, Tensor::scalar(v));
  }
  f.optimizer = OptimizerSnapshot{ck.step, static_cast<std::uint32_t>(ck.stage), ck.optimizer_state};
  return f;
}

VcCheckpoint from_checkpoint_file(const CheckpointFile& file) {
  VcCheckpoint ck;
  for (const auto& field : config_fields()) {
    const double v = require(file.tensors, std::string("config.") + field.name)[0];
    if (field.count) {
      if (!(v >= 0.0 && v == std::floor(v))) throw FormatError(std::string("checkpoint: bad config.") + field.name);
      ck.model.*field.count = static_cast<std::size_t>(v);
    }
    if (field.real) ck.model.*field.real = v;
    if (field.flag) ck.model.*field.flag = v != 0.0;
  }
  try {
    ck.model.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  ck.params = init_vc_params(ck.model, 0);
  ck.params.load_values(file.tensors, "vc/");
  if (!ck.params.all_finite()) throw FormatError("checkpoint: non-finite parameter values");
  ck.encoder = SpeakerEncoder::from_tensors(file.tensors, "spkenc/");
  ck.centroids = require(file.tensors, "centroids");
  ck.speakers = decode_ids(require(file.tensors, "meta.speakers"));
  if (ck.speakers.size() != ck.model.n_speakers || ck.centroids.rank() != 2 ||
      ck.centroids.rows() != ck.model.n_speakers || ck.centroids.cols() != ck.model.d_speaker) {
    throw FormatError("checkpoint: speaker table does not match the model config");
  }
  if (file.optimizer) {
    ck.step = file.optimizer->step;
    if (file.optimizer->stage > 1) throw FormatError("checkpoint: unknown stage " + std::to_string(file.optimizer->stage));
    ck.stage = static_cast<Stage>(file.optimizer->stage);
    ck.optimizer_state = file.optimizer->tensors;
  }
  return ck;
}

void save_vc_checkpoint(const std::filesystem::path& path, const VcCheckpoint& ck) {
  write_checkpoint(path, to_checkpoint_file(ck));
}

VcCheckpoint load_vc_checkpoint(const std::filesystem::path& path) {
  return from_checkpoint_file(read_checkpoint(path));
}

// --------------------------------------------------------------------------- trainer

Trainer::Trainer(VcCheckpoint state, const TrainingSet& data, const TrainConfig& cfg)
    : state_(std::move(state)),
      data_(data),
      cfg_(cfg),
      adam_({cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}),
      buckets_(length_buckets(data, cfg.batch_size)) {
  state_.model.validate();
  if (data.speakers != state_.speakers) throw ConfigError("training set speakers differ from the checkpoint");
  if (!state_.encoder.frozen()) throw ContractError("the speaker encoder must be frozen before VC training");
  adam_.load_state(state_.optimizer_state, state_.step);
}

double Trainer::ecl_alpha() const { return state_.stage == Stage::Ecl ? state_.model.ecl_alpha : 0.0; }

LossReport Trainer::step() {
  const std::uint64_t step = state_.step;
  const std::size_t n_buckets = buckets_.size();
  std::vector<std::size_t> perm(n_buckets);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 order_rng(mix(cfg_.seed, step / n_buckets));
  std::shuffle(perm.begin(), perm.end(), order_rng);
  const auto& bucket = buckets_[perm[step % n_buckets]];

  std::size_t t_max = 0, frames = 0;
  for (auto i : bucket) {
    t_max = std::max(t_max, data_.examples[i].mel.rows());
    frames += data_.examples[i].mel.rows();
  }

  const double alpha = ecl_alpha();
  state_.params.zero_grad();
  ad::Graph g(true, mix(cfg_.seed ^ 0x5a5a5a5a5a5a5a5aULL, step));
  std::vector<FrameMask> masks;
  std::vector<Tensor> targets;
  masks.reserve(bucket.size());
  targets.reserve(bucket.size());
  ad::Var pre, post, adv, ecl;
  for (auto i : bucket) {
    const TrainingExample& ex = data_.examples[i];
    const std::size_t T = ex.mel.rows();
    masks.emplace_back(t_max, 0.0);
    std::fill(masks.back().begin(), masks.back().begin() + static_cast<std::ptrdiff_t>(T), 1.0);
    targets.push_back(pad_rows(ex.mel, t_max));
    ForwardContext ctx{g, state_.params, state_.model, masks.back()};
    ForwardOutputs out = forward(ctx, g.constant(pad_rows(ex.features, t_max)),
                                 g.constant_ref(data_.centroids[ex.speaker]));
    const double w = static_cast<double>(T) / static_cast<double>(frames);
    auto accumulate = [](ad::Var& acc, ad::Var term) { acc = acc.valid() ? ad::add(acc, term) : term; };
    accumulate(pre, ad::scale(mel_loss(out.mel_pre, targets.back(), masks.back()), w));
    accumulate(post, ad::scale(mel_loss(out.mel_post, targets.back(), masks.back()), w));
    accumulate(adv, ad::scale(adversarial_loss(out.adv_logits, ex.speaker, masks.back()), w));
    if (alpha > 0.0) {
      ad::Var mel = T < t_max ? ad::slice_rows(out.mel_post, 0, T) : out.mel_post;
      ad::Var e_pred = state_.encoder.embed(g, mel);
      accumulate(ecl, ad::scale(embedding_consistency_loss(e_pred, ex.reference_embedding),
                                1.0 / static_cast<double>(bucket.size())));
    }
  }
  ad::Var total = ad::add(ad::add(pre, post), adv);
  if (alpha > 0.0) total = ad::add(total, ad::scale(ecl, alpha));

  LossReport r;
  r.step = step + 1;
  r.mel_pre = pre.value()[0];
  r.mel_post = post.value()[0];
  r.adv = adv.value()[0];
  r.ecl = alpha > 0.0 ? ecl.value()[0] : 0.0;
  r.total = total.value()[0];
  const std::pair<const char*, double> terms[] = {
      {"mel_pre", r.mel_pre}, {"mel_post", r.mel_post}, {"adv", r.adv}, {"ecl", r.ecl}, {"total", r.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite " + std::string(name) + " loss at step " + std::to_string(r.step));
    }
  }
  g.backward(total);
  adam_.step(state_.params);
  state_.step = step + 1;
  return r;
}

VcCheckpoint Trainer::checkpoint() const {
  VcCheckpoint ck = state_;
  ck.optimizer_state = adam_.state();
  for (auto& [name, t] : ck.params.tensors()) t.drop_grad();
  return ck;
}

VcCheckpoint initial_state(const ModelConfig& model, const SpeakerEncoder& encoder, const TrainingSet& data,
                           Stage stage, const TrainConfig& cfg, const std::optional<VcCheckpoint>& init) {
  if (!init) {
    if (stage == Stage::Ecl) throw ConfigError("the ecl stage needs an init checkpoint (--init)");
    VcCheckpoint ck;
    ck.model = model;
    ck.model.n_speakers = data.speakers.size();
    ck.model.d_speaker = encoder.config().embedding_dim;
    ck.model.validate();
    ck.params = init_vc_params(ck.model, cfg.seed);
    ck.encoder = encoder;
    ck.speakers = data.speakers;
    ck.centroids = Tensor({data.speakers.size(), ck.model.d_speaker});
    for (std::size_t s = 0; s < data.centroids.size(); ++s) {
      std::copy(data.centroids[s].values().begin(), data.centroids[s].values().end(), ck.centroids.row(s).begin());
    }
    ck.stage = Stage::Base;
    return ck;
  }
  if (init->stage == Stage::Ecl && stage == Stage::Base) {
    throw ConfigError("cannot run the base stage from an ecl checkpoint");
  }
  if (init->speakers != data.speakers) throw ConfigError("init checkpoint was trained on different speakers");
  VcCheckpoint ck = *init;
  // Architecture comes from the checkpoint; loss weights and regularisation from this run.
  ck.model.grl_lambda = model.grl_lambda;
  ck.model.ecl_alpha = model.ecl_alpha;
  ck.model.dropout = model.dropout;
  ck.model.use_grl = model.use_grl;
  ck.model.validate();
  if (init->stage != stage) {
    ck.stage = stage;
    ck.step = 0;
    ck.optimizer_state.clear();
  }
  return ck;
}

VcCheckpoint train(VcCheckpoint start, const TrainingSet& data, const TrainConfig& cfg,
                   const std::function<void(const LossReport&)>& on_step) {
  const std::uint64_t encoder_sum = start.encoder.checksum();
  Trainer trainer(std::move(start), data, cfg);
  while (trainer.state().step < cfg.max_steps) {
    LossReport r = trainer.step();
    if (on_step) on_step(r);
  }
  if (trainer.state().encoder.checksum() != encoder_sum) {
    throw ContractError("speaker encoder parameters changed during VC training");
  }
  return trainer.checkpoint();
}

Tensor convert(VcCheckpoint& ck, const Tensor& features, const Tensor& speaker_embedding) {
  if (speaker_embedding.size() != ck.model.d_speaker) {
    throw ShapeError("convert: speaker embedding has " + std::to_string(speaker_embedding.size()) +
                     " entries, expected " + std::to_string(ck.model.d_speaker));
  }
  ad::Graph g(false);
  ForwardContext ctx{g, ck.params, ck.model};
  ForwardOutputs out = forward(ctx, g.constant_ref(features),
                               g.constant(speaker_embedding.reshaped({1, ck.model.d_speaker})));
  return out.mel_post.value();
}

}  // namespace fvc
