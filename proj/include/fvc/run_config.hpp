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

// Flat key=value run configuration. One key per line, '#' starts a comment.
// Every ModelConfig and TrainConfig field is a key; unknown or repeated keys
// are rejected and absent keys keep their defaults.

#include <filesystem>
#include <string>
#include <vector>

#include "fvc/model.hpp"
#include "fvc/training.hpp"

namespace fvc {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  /// Training corpus manifest and optional one-shot manifest, relative to the config file.
  std::string manifest;
  std::string oneshot_manifest;
  /// Output directory, relative to the config file.
  std::string out = "run";
  std::size_t holdout_per_speaker = 1;
  std::size_t encoder_epochs = 30;
  std::size_t probe_epochs = 30;
  std::size_t sources_per_target = 4;
  std::size_t griffin_lim_iters = 32;

  /// Keys that were not given and kept their default.
  std::vector<std::string> defaulted;
};

/// Throws ConfigError naming the offending line.
RunConfig parse_run_config(const std::string& text);
RunConfig read_run_config(const std::filesystem::path& path);
/// Every key with its resolved value, one per line, in a fixed order.
std::string run_config_to_text(const RunConfig& cfg);
/// All recognised keys in output order.
std::vector<std::string> run_config_keys();

}  // namespace fvc
