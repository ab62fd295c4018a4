// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: every knob of every command, addressable by a dotted
// key ("train.learning_rate"). Values are layered defaults < file < overrides.
//
// File format is JSON with one object per section:
//
//   { "model": { "patch_size": 2 }, "train": { "epochs": 5 } }
//
// Unknown sections or keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "serpent/degrade.hpp"
#include "serpent/harness.hpp"
#include "serpent/model.hpp"

namespace serpent {

struct PathsConfig {
  std::string data_dir = "data";
  std::string out_dir = "runs/serpent";
  std::string checkpoint;  // empty: <out_dir>/best.ckpt
};

struct EvalConfig {
  std::string split = "all";  // "all" or "val"
  bool dump_images = false;
};

struct ProfileConfig {
  std::vector<int64_t> resolutions{64, 128, 256};
};

struct BenchConfig {
  std::vector<int64_t> lengths{64, 128, 256, 512, 1024, 2048};
  int64_t channels = 8;
  int64_t state_dim = 4;
  int64_t chunk = 16;
  int64_t repeats = 3;
  uint64_t seed = 0;
};

struct SynthConfig {
  int64_t count = 200;
  int64_t size = 64;
  uint64_t seed = 0;
};

struct RunConfig {
  SerpentConfig model = default_model();
  TrainConfig train;
  DegradationSpec degrade;
  PathsConfig paths;
  EvalConfig eval;
  ProfileConfig profile;
  BenchConfig bench;
  SynthConfig synth;

  /// 2 scales, the largest network that trains in minutes on one core.
  static SerpentConfig default_model();

  /// Checks every section; throws ConfigError naming the offending key.
  void validate() const;
  fs::path checkpoint_path() const;
  EvalSplit eval_split() const;
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;  // JSON text
  std::string unit;
  std::string help;
};

/// Every accepted key with its default, in display order.
std::vector<ConfigKeyInfo> config_keys();

/// Applies a nested JSON object on top of `config`.
void apply_config_json(RunConfig& config, const std::string& json_text, const std::string& origin);
/// Loads a config file on top of `config`.
void apply_config_file(RunConfig& config, const fs::path& path);
/// Applies "dotted.key=value". The value is read as JSON when it parses,
/// otherwise as a bare string.
void apply_override(RunConfig& config, const std::string& assignment);

/// Fully resolved config as nested JSON (every key present).
std::string config_to_json(const RunConfig& config);

}  // namespace serpent
