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

#include "fvc/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "fvc/errors.hpp"

namespace fvc {

namespace {

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key " + key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("config key " + key + ": '" + v + "' is not a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": '" + v + "' is not a boolean");
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
Key count_key(const std::string& name, T RunConfig::*group, std::size_t T::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { c.*group.*field = parse_uint(name, v); },
          [=](const RunConfig& c) { return std::to_string(c.*group.*field); }};
}

template <typename T>
Key u64_key(const std::string& name, T RunConfig::*group, std::uint64_t T::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { c.*group.*field = parse_uint(name, v); },
          [=](const RunConfig& c) { return std::to_string(c.*group.*field); }};
}

template <typename T>
Key real_key(const std::string& name, T RunConfig::*group, double T::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { c.*group.*field = parse_real(name, v); },
          [=](const RunConfig& c) { return real_text(c.*group.*field); }};
}

Key top_count(const std::string& name, std::size_t RunConfig::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { c.*field = parse_uint(name, v); },
          [=](const RunConfig& c) { return std::to_string(c.*field); }};
}

Key top_string(const std::string& name, std::string RunConfig::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { c.*field = v; },
          [=](const RunConfig& c) { return c.*field; }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      top_string("manifest", &RunConfig::manifest),
      top_string("oneshot_manifest", &RunConfig::oneshot_manifest),
      top_string("out", &RunConfig::out),
      u64_key("seed", &RunConfig::train, &TrainConfig::seed),
      count_key("d_model", &RunConfig::model, &ModelConfig::d_model),
      count_key("n_blocks", &RunConfig::model, &ModelConfig::n_blocks),
      count_key("n_heads", &RunConfig::model, &ModelConfig::n_heads),
      count_key("conv_kernel", &RunConfig::model, &ModelConfig::conv_kernel),
      count_key("conv_hidden", &RunConfig::model, &ModelConfig::conv_hidden),
      count_key("prenet_hidden", &RunConfig::model, &ModelConfig::prenet_hidden),
      count_key("postnet_layers", &RunConfig::model, &ModelConfig::postnet_layers),
      count_key("postnet_channels", &RunConfig::model, &ModelConfig::postnet_channels),
      count_key("postnet_kernel", &RunConfig::model, &ModelConfig::postnet_kernel),
      real_key("grl_lambda", &RunConfig::model, &ModelConfig::grl_lambda),
      real_key("ecl_alpha", &RunConfig::model, &ModelConfig::ecl_alpha),
      real_key("dropout", &RunConfig::model, &ModelConfig::dropout),
      {"use_grl", [](RunConfig& c, const std::string& v) { c.model.use_grl = parse_bool("use_grl", v); },
       [](const RunConfig& c) { return std::string(c.model.use_grl ? "true" : "false"); }},
      real_key("learning_rate", &RunConfig::train, &TrainConfig::learning_rate),
      real_key("adam_beta1", &RunConfig::train, &TrainConfig::adam_beta1),
      real_key("adam_beta2", &RunConfig::train, &TrainConfig::adam_beta2),
      real_key("adam_eps", &RunConfig::train, &TrainConfig::adam_eps),
      count_key("batch_size", &RunConfig::train, &TrainConfig::batch_size),
      u64_key("max_steps", &RunConfig::train, &TrainConfig::max_steps),
      top_count("holdout_per_speaker", &RunConfig::holdout_per_speaker),
      top_count("encoder_epochs", &RunConfig::encoder_epochs),
      top_count("probe_epochs", &RunConfig::probe_epochs),
      top_count("sources_per_target", &RunConfig::sources_per_target),
      top_count("griffin_lim_iters", &RunConfig::griffin_lim_iters),
  };
  return k;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const Key* match = nullptr;
    for (const auto& k : keys()) {
      if (k.name == key) match = &k;
    }
    if (match == nullptr) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key + "' given twice");
    }
    match->set(cfg, value);
  }
  for (const auto& k : keys()) {
    if (!seen.count(k.name)) cfg.defaulted.push_back(k.name);
  }
  cfg.model.validate();
  if (cfg.train.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  return parse_run_config(detail::read_file_bytes(path));
}

std::string run_config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> names;
  for (const auto& k : keys()) names.push_back(k.name);
  return names;
}

}  // namespace fvc
