// lightdvae/config.h

// Copyright 2026  The lightdvae Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Run configuration: one JSON document with sections model, optim, train,
// stft, data and eval, plus "section.key=value" overrides. Unknown keys and
// ill-typed values are rejected with dvae::ConfigError naming the key.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lightdvae/dsp.h"
#include "lightdvae/model.h"
#include "lightdvae/training.h"

namespace dvae {

struct DataConfig {
  // Directory of 16 kHz mono WAV files.
  std::string dataset;
  // Optional pre-built manifest; built from `dataset` when empty.
  std::string manifest;
  int segment_frames = 50;
  double silence_db = 30.0;
  double valid_fraction = 0.05;
  double test_fraction = 0.05;
  std::uint64_t split_seed = 0;

  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  // "TF" or "GEN".
  std::string mode = "TF";
  std::uint64_t seed = 0;
  int griffin_lim_iters = 100;
  int generate_count = 4;
  int generate_frames = 200;

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  std::uint64_t init_seed = 0;
  OptimizerConfig optim;
  TrainConfig train;
  StftConfig stft;
  DataConfig data;
  EvalConfig eval;

  // Sets model.bins from the STFT size and checks every section.
  void finalize();
  FeedbackMode feedback_mode() const;

  // Pretty-printed JSON of every field (model.bins is derived, not listed).
  std::string to_json() const;
  // Missing keys keep their defaults. Calls finalize().
  static RunConfig from_json(const std::string& text);
  // "model.d_model=32"; the value is parsed as JSON when possible and as a
  // plain string otherwise. Calls finalize().
  void apply_override(const std::string& assignment);
  // Applies every assignment, then finalizes once, so dependent keys such as
  // stft.window_length and stft.hop may change together. On error the
  // config is left unchanged.
  void apply_overrides(const std::vector<std::string>& assignments);

  bool operator==(const RunConfig&) const = default;
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace dvae
