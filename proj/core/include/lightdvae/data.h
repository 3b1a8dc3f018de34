// lightdvae/data.h

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

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lightdvae/dsp.h"

namespace dvae {

// 16-bit PCM, mono, 16 kHz. Anything else is rejected with dvae::FormatError.
inline constexpr int kSampleRate = 16000;

Waveform load_wav(const std::filesystem::path& path);
// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void save_wav(const std::filesystem::path& path, const Waveform& wav);

enum class Split { kTrain, kValid, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct ManifestEntry {
  std::filesystem::path path;
  double duration = 0.0;  // seconds
  Split split = Split::kTrain;
};

// One entry per line: path<TAB>duration<TAB>split, UTF-8, lexicographic by
// path.
struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> select(Split split) const;
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);
};

// Either explicit file lists (relative path or file name -> split; unlisted
// files are dropped) or seeded fractions.
struct SplitSpec {
  std::map<std::string, Split> explicit_splits;
  double train = 1.0;
  double valid = 0.0;
  double test = 0.0;
  std::uint64_t seed = 0;
};

// Scans `root` recursively for .wav files. Throws dvae::Error when none exist.
Manifest build_manifest(const std::filesystem::path& root,
                        const SplitSpec& spec);

// Harmonic test signals: 3 to 5 harmonics of a random 100-300 Hz fundamental
// with a slow amplitude envelope and pitch drift, plus noise 30 dB below the
// signal. Peak amplitude 0.95. Deterministic in `seed`.
std::vector<Waveform> synth_corpus(int count, double duration,
                                   std::uint64_t seed,
                                   int sample_rate = kSampleRate);

// B sequences of T frames and F bins stored as (B*T) x F, rows grouped by
// sequence (frame-major within each sequence).
struct Batch {
  int batch = 0;
  int frames = 0;
  int bins = 0;
  Eigen::MatrixXd rows;

  PowerSpectrogram sequence(int b) const;
};

// Throws dvae::Error unless every spectrogram has the same shape.
Batch make_batch(const std::vector<PowerSpectrogram>& sequences);
Batch make_batch(const PowerSpectrogram& sequence);

// preprocess -> stft -> power -> segment, per utterance.
std::vector<PowerSpectrogram> prepare_segments(
    const std::vector<Waveform>& utterances, const StftConfig& cfg,
    int segment_frames, double threshold_db = 30.0);

// Shuffles segments with a seeded permutation per epoch and emits batches of
// `batch_size`; the last batch of an epoch may be smaller.
class BatchIterator {
 public:
  BatchIterator(std::vector<PowerSpectrogram> segments, int batch_size,
                std::uint64_t seed);

  // Next batch of the current epoch; false when the epoch is exhausted.
  bool next(Batch& out);
  // Next batch, rolling into a fresh epoch when needed.
  Batch next_cycling();

  // Positions the iterator at `batch_index` of `epoch`.
  void seek(std::uint64_t epoch, std::size_t batch_index);
  std::uint64_t epoch() const { return epoch_; }
  std::size_t batch_index() const { return batch_index_; }
  std::size_t batches_per_epoch() const;
  std::size_t num_segments() const { return segments_.size(); }

 private:
  void shuffle();

  std::vector<PowerSpectrogram> segments_;
  int batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t batch_index_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace dvae
