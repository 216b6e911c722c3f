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

// fvclab: corpus generation, training, conversion, evaluation and gradient checks.
//
// Exit codes: 0 success, 1 I/O or format error, 2 usage or configuration error,
// 3 numeric abort, 4 verification failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "fvc/corpus.hpp"
#include "fvc/dsp.hpp"
#include "fvc/errors.hpp"
#include "fvc/evaluation.hpp"
#include "fvc/gradcheck.hpp"
#include "fvc/run_config.hpp"
#include "fvc/training.hpp"

namespace fs = std::filesystem;
using namespace fvc;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerification = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

int cmd_make_corpus(std::size_t speakers, std::size_t utts, std::uint64_t seed, const std::string& out) {
  if (speakers < 2) throw UsageError("--speakers must be at least 2, got " + std::to_string(speakers));
  if (utts < 1) throw UsageError("--utts must be at least 1");
  corpus::build_corpus(speakers, utts, seed, out);
  std::cout << (fs::path(out) / "manifest.csv").string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& stage_name, const std::string& init_path) {
  const Stage stage = parse_stage(stage_name);
  if (stage == Stage::Ecl && init_path.empty()) throw UsageError("--stage ecl requires --init");
  const RunConfig cfg = read_run_config(config_path);
  const fs::path base = fs::path(config_path).parent_path();
  if (cfg.manifest.empty()) throw ConfigError("config key 'manifest' is required for training");
  const fs::path out = resolve(base, cfg.out);
  fs::create_directories(out);
  for (const auto& key : cfg.defaulted) std::cerr << "config: " << key << " not set, using default\n";
  write_text(out / ("run_config_" + std::string(to_string(stage)) + ".txt"), run_config_to_text(cfg));

  const corpus::LoadedCorpus corp = corpus::load_corpus(resolve(base, cfg.manifest));
  std::optional<VcCheckpoint> init;
  SpeakerEncoder encoder;
  if (!init_path.empty()) {
    init = load_vc_checkpoint(init_path);
    encoder = init->encoder;
  } else {
    std::vector<LabelledMel> data;
    for (std::size_t s = 0; s < corp.speakers.size(); ++s) {
      const auto utts = corp.utterances_of(corp.speakers[s]);
      for (std::size_t k = 0; k + cfg.holdout_per_speaker < utts.size(); ++k) {
        data.push_back({&corp.utterances[utts[k]].mel, s});
      }
    }
    SpeakerEncoderConfig ecfg;
    ecfg.n_speakers = corp.speakers.size();
    EncoderTrainOptions eopt;
    eopt.epochs = cfg.encoder_epochs;
    eopt.seed = cfg.train.seed;
    EncoderTrainResult enc = train_speaker_encoder(data, ecfg, eopt);
    std::cerr << "speaker encoder: held-out accuracy " << enc.heldout_accuracy << " on " << enc.heldout_count
              << " utterances\n";
    encoder = enc.encoder;
  }
  const TrainingSet data = make_training_set(corp, encoder, cfg.holdout_per_speaker);
  VcCheckpoint start = initial_state(cfg.model, encoder, data, stage, cfg.train, init);

  const fs::path loss_path = out / ("loss_" + std::string(to_string(stage)) + ".csv");
  std::ofstream loss(loss_path, std::ios::binary);
  if (!loss) throw IoError("cannot write " + loss_path.string());
  loss << kLossCsvHeader << "\n";
  VcCheckpoint done = train(std::move(start), data, cfg.train, [&](const LossReport& r) {
    loss << loss_csv_row(r) << "\n";
  });
  loss.flush();
  if (!loss) throw IoError("write failed: " + loss_path.string());
  const fs::path ckpt = out / (std::string(to_string(stage)) + ".fvck");
  save_vc_checkpoint(ckpt, done);
  std::cout << ckpt.string() << "\n";
  return 0;
}

int cmd_convert(const std::string& ckpt_path, const std::string& source_utt, const std::string& target_spk,
                const std::string& manifest, const std::string& out, std::size_t iters, std::uint64_t seed) {
  VcCheckpoint ck = load_vc_checkpoint(ckpt_path);
  const corpus::LoadedCorpus corp = corpus::load_corpus(manifest);
  const corpus::Utterance* src = nullptr;
  for (const auto& u : corp.utterances) {
    if (u.row.utt_id == source_utt) src = &u;
  }
  if (src == nullptr) throw UsageError("unknown source utterance '" + source_utt + "'");
  Tensor embedding;
  if (std::find(ck.speakers.begin(), ck.speakers.end(), target_spk) != ck.speakers.end()) {
    embedding = ck.centroid(ck.speaker_index(target_spk));
  } else if (std::find(corp.speakers.begin(), corp.speakers.end(), target_spk) != corp.speakers.end()) {
    embedding = ck.encoder.extract(reference_utterance(corp, target_spk).mel);
  } else {
    throw UsageError("unknown target speaker '" + target_spk + "'");
  }
  const Tensor mel = convert(ck, src->features, embedding);
  dsp::GriffinLimResult gl = dsp::griffin_lim(mel, dsp::default_filterbank(), static_cast<int>(iters), seed);
  dsp::write_wav(out, gl.waveform);
  std::cout << out << " " << mel.rows() << " frames, spectral convergence "
            << gl.convergence.back().second << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& condition_name, const std::string& set_name,
                 const std::string& out, const std::string& manifest, const std::string& oneshot_manifest,
                 std::size_t sources, std::size_t probe_epochs, std::uint64_t seed) {
  const Condition condition = parse_condition(condition_name);
  const TargetSet set = parse_target_set(set_name);
  if (set == TargetSet::OneShot && oneshot_manifest.empty()) {
    throw UsageError("--set oneshot requires --oneshot-manifest");
  }
  VcCheckpoint ck = load_vc_checkpoint(ckpt_path);
  const corpus::LoadedCorpus train_corpus = corpus::load_corpus(manifest);
  std::optional<corpus::LoadedCorpus> oneshot;
  if (!oneshot_manifest.empty()) oneshot = corpus::load_corpus(oneshot_manifest);
  if (set == TargetSet::OneShot && oneshot->speakers.empty()) throw UsageError("the one-shot speaker set is empty");

  std::vector<const corpus::LoadedCorpus*> corpora = {&train_corpus};
  if (oneshot) corpora.push_back(&*oneshot);
  SpeakerEncoder probe = train_probe_encoder(corpora, probe_epochs, seed);
  EvalOptions opt;
  opt.sources_per_target = sources;
  opt.seed = seed;
  const EvalResult r =
      evaluate_conversion(ck, train_corpus, oneshot ? &*oneshot : nullptr, condition, set, probe, opt);
  fs::create_directories(out);
  write_text(fs::path(out) / "trials.csv", trials_to_csv(r.trials));
  write_text(fs::path(out) / "scores.csv", scores_to_csv(r.trials));
  write_text(fs::path(out) / "histogram.csv", histogram_to_csv(r.histogram));
  std::printf("# mean_target_score eer min_dcf (%zu conversions, %zu trials)\n", r.conversions, r.trials.size());
  std::printf("%.6f %.6f %.6f\n", r.mean_target_score, r.metrics.eer, r.metrics.min_dcf);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials, const std::string& corrupt_op) {
  const auto ops = ad::differentiable_ops();
  if (!corrupt_op.empty() && std::find(ops.begin(), ops.end(), corrupt_op) == ops.end()) {
    throw UsageError("--corrupt-op: unknown op '" + corrupt_op + "'");
  }
  if (trials < 1) throw UsageError("--trials must be positive");
  ad::testing::set_corrupted_op(corrupt_op);
  const auto results = gradcheck::run_suite(seed, trials);
  ad::testing::set_corrupted_op("");
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-28s worst %.3e  tol %.0e  trials %3d  %s\n", r.name.c_str(), r.worst_error, r.tolerance, r.trials,
                r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  for (auto op : ops) {
    const bool covered = std::any_of(results.begin(), results.end(), [&](const auto& r) { return r.name == op; });
    if (!covered) {
      std::printf("missing check for op %s\n", std::string(op).c_str());
      ok = false;
    }
  }
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fvclab: desk-scale non-autoregressive voice conversion"};
  app.require_subcommand(1);

  std::size_t speakers = 0, utts = 0;
  std::uint64_t corpus_seed = 0;
  std::string corpus_out;
  auto* mk = app.add_subcommand("make-corpus", "Generate a synthetic two-language corpus");
  mk->add_option("--speakers", speakers, "Number of speakers")->required();
  mk->add_option("--utts", utts, "Utterances per speaker")->required();
  mk->add_option("--seed", corpus_seed, "Corpus seed")->required();
  mk->add_option("--out", corpus_out, "Output directory")->required();

  std::string config, stage = "base", init;
  auto* tr = app.add_subcommand("train", "Train the conversion model");
  tr->add_option("--config", config, "Run configuration (key=value)")->required();
  tr->add_option("--stage", stage, "base or ecl");
  tr->add_option("--init", init, "Checkpoint to start from");

  std::string ckpt, source_utt, target_spk, manifest, wav_out;
  std::size_t gl_iters = 32;
  std::uint64_t convert_seed = 0;
  auto* cv = app.add_subcommand("convert", "Convert one utterance and vocode it with Griffin-Lim");
  cv->add_option("--ckpt", ckpt)->required();
  cv->add_option("--source-utt", source_utt)->required();
  cv->add_option("--target-spk", target_spk)->required();
  cv->add_option("--manifest", manifest)->required();
  cv->add_option("--out", wav_out)->required();
  cv->add_option("--iters", gl_iters, "Griffin-Lim iterations");
  cv->add_option("--seed", convert_seed, "Initial phase seed");

  std::string eval_ckpt, condition, target_set, eval_out, eval_manifest, oneshot_manifest;
  std::size_t sources = 4, probe_epochs = 30;
  std::uint64_t eval_seed = 0;
  auto* ev = app.add_subcommand("evaluate", "Score conversions with a probe speaker encoder");
  ev->add_option("--ckpt", eval_ckpt)->required();
  ev->add_option("--condition", condition, "ML, CL or CS")->required();
  ev->add_option("--set", target_set, "in or oneshot")->required();
  ev->add_option("--out", eval_out)->required();
  ev->add_option("--manifest", eval_manifest, "Training corpus manifest")->required();
  ev->add_option("--oneshot-manifest", oneshot_manifest, "Manifest of unseen speakers");
  ev->add_option("--sources", sources, "Source sentences per target speaker");
  ev->add_option("--probe-epochs", probe_epochs, "Probe encoder training epochs");
  ev->add_option("--seed", eval_seed);

  std::uint64_t gc_seed = 0;
  int gc_trials = 100;
  std::string corrupt_op;
  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--trials", gc_trials, "Trials per op");
  gc->add_option("--corrupt-op", corrupt_op, "Test hook: perturb the backward pass of one op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*mk) return cmd_make_corpus(speakers, utts, corpus_seed, corpus_out);
    if (*tr) return cmd_train(config, stage, init);
    if (*cv) return cmd_convert(ckpt, source_utt, target_spk, manifest, wav_out, gl_iters, convert_seed);
    if (*ev) {
      return cmd_evaluate(eval_ckpt, condition, target_set, eval_out, eval_manifest, oneshot_manifest, sources,
                          probe_epochs, eval_seed);
    }
    if (*gc) return cmd_gradcheck(gc_seed, gc_trials, corrupt_op);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IndexError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
