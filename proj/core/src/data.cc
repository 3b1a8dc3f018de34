// data.cc

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

#include "lightdvae/data.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lightdvae/error.h"
#include "random_util.h"

namespace dvae {

namespace {

using internal::gaussian;
using internal::permute;
using internal::seeded;
using internal::uniform;

bool has_wav_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw FormatError("unknown split '" + name + "' (expected train, valid or test)");
}

std::vector<ManifestEntry> Manifest::select(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

void Manifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest " + path.string());
  out.precision(17);
  for (const auto& e : entries)
    out << e.path.string() << '\t' << e.duration << '\t' << to_string(e.split)
        << '\n';
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected path<TAB>duration<TAB>split");
    ManifestEntry e;
    e.path = line.substr(0, t1);
    try {
      e.duration = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": bad duration");
    }
    if (!(e.duration > 0.0))
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": duration must be positive");
    e.split = parse_split(line.substr(t2 + 1));
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest build_manifest(const std::filesystem::path& root,
                        const SplitSpec& spec) {
  if (!std::filesystem::is_directory(root))
    throw Error("build_manifest: not a directory: " + root.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
    if (entry.is_regular_file() && has_wav_extension(entry.path()))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw Error("build_manifest: no .wav files under " + root.string());

  Manifest m;
  if (!spec.explicit_splits.empty()) {
    for (const auto& f : files) {
      const std::string rel = std::filesystem::relative(f, root).generic_string();
      auto it = spec.explicit_splits.find(rel);
      if (it == spec.explicit_splits.end())
        it = spec.explicit_splits.find(f.filename().string());
      if (it == spec.explicit_splits.end()) continue;
      const Waveform wav = load_wav(f);
      m.entries.push_back({f, static_cast<double>(wav.size()) / wav.sample_rate,
                           it->second});
    }
    if (m.entries.empty())
      throw Error("build_manifest: no listed file found under " + root.string());
    return m;
  }

  const double total = spec.train + spec.valid + spec.test;
  if (spec.train < 0 || spec.valid < 0 || spec.test < 0 || total <= 0.0)
    throw Error("build_manifest: split fractions must be nonnegative");
  const std::size_t n = files.size();
  const auto n_train = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::llround(n * spec.train / total)));
  const auto n_valid = std::min<std::size_t>(
      n - n_train, static_cast<std::size_t>(std::llround(n * spec.valid / total)));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto rng = seeded(spec.seed, 0x6d616e6966657374ULL);
  permute(order, rng);
  std::vector<Split> assignment(n, Split::kTest);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train)
      assignment[order[k]] = Split::kTrain;
    else if (k < n_train + n_valid)
      assignment[order[k]] = Split::kValid;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Waveform wav = load_wav(files[i]);
    m.entries.push_back({files[i],
                         static_cast<double>(wav.size()) / wav.sample_rate,
                         assignment[i]});
  }
  return m;
}

std::vector<Waveform> synth_corpus(int count, double duration,
                                   std::uint64_t seed, int sample_rate) {
  if (count < 1) throw Error("synth_corpus: count must be >= 1");
  if (!(duration > 0.0)) throw Error("synth_corpus: duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<Waveform> corpus;
  corpus.reserve(count);
  for (int u = 0; u < count; ++u) {
    auto rng = seeded(seed, static_cast<std::uint64_t>(u));
    const double f0 = uniform(rng, 100.0, 300.0);
    const int harmonics = 3 + static_cast<int>(rng() % 3);
    std::vector<double> amp(harmonics);
    for (int k = 0; k < harmonics; ++k) amp[k] = uniform(rng, 0.5, 1.0) / (k + 1);
    const double env_rate = uniform(rng, 2.0, 5.0);
    const double env_phase = uniform(rng, 0.0, two_pi);
    const double drift_rate = uniform(rng, 0.2, 1.0);
    const double drift_phase = uniform(rng, 0.0, two_pi);
    const double drift_depth = 0.03;

    Waveform wav;
    wav.sample_rate = sample_rate;
    wav.samples.resize(n);
    double phase = 0.0;
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double f = f0 * (1.0 + drift_depth * std::sin(two_pi * drift_rate * t + drift_phase));
      phase += two_pi * f / sample_rate;
      const double s = 0.5 + 0.5 * std::sin(two_pi * env_rate * t + env_phase);
      const double env = 0.2 + 0.8 * s * s;
      double x = 0.0;
      for (int k = 0; k < harmonics; ++k)
        if ((k + 1) * f < 0.5 * sample_rate) x += amp[k] * std::sin((k + 1) * phase);
      wav.samples[i] = env * x;
      energy += wav.samples[i] * wav.samples[i];
    }
    const double noise_std = std::sqrt(energy / n) * std::pow(10.0, -30.0 / 20.0);
    for (double& x : wav.samples) x += noise_std * gaussian(rng);
    const double peak = wav.peak();
    for (double& x : wav.samples) x *= 0.95 / peak;
    corpus.push_back(std::move(wav));
  }
  return corpus;
}

PowerSpectrogram Batch::sequence(int b) const {
  if (b < 0 || b >= batch) throw Error("Batch::sequence: index out of range");
  PowerSpectrogram p;
  p.values = rows.middleRows(static_cast<Eigen::Index>(b) * frames, frames).transpose();
  return p;
}

Batch make_batch(const std::vector<PowerSpectrogram>& sequences) {
  if (sequences.empty()) throw Error("make_batch: no sequences");
  Batch out;
  out.batch = static_cast<int>(sequences.size());
  out.frames = sequences.front().frames();
  out.bins = sequences.front().bins();
  out.rows.resize(static_cast<Eigen::Index>(out.batch) * out.frames, out.bins);
  for (int b = 0; b < out.batch; ++b) {
    const auto& s = sequences[b];
    if (s.frames() != out.frames || s.bins() != out.bins)
      throw Error("make_batch: sequences differ in shape");
    out.rows.middleRows(static_cast<Eigen::Index>(b) * out.frames, out.frames) =
        s.values.transpose();
  }
  return out;
}

Batch make_batch(const PowerSpectrogram& sequence) {
  return make_batch(std::vector<PowerSpectrogram>{sequence});
}

std::vector<PowerSpectrogram> prepare_segments(
    const std::vector<Waveform>& utterances, const StftConfig& cfg,
    int segment_frames, double threshold_db) {
  std::vector<PowerSpectrogram> out;
  for (const auto& wav : utterances) {
    const Waveform clean = preprocess_waveform(wav, threshold_db);
    if (clean.size() < static_cast<std::size_t>(cfg.window_length)) continue;
    for (auto& s : segment(power_spectrogram(stft(clean, cfg)), segment_frames))
      out.push_back(std::move(s));
  }
  return out;
}

BatchIterator::BatchIterator(std::vector<PowerSpectrogram> segments,
                             int batch_size, std::uint64_t seed)
    : segments_(std::move(segments)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ < 1) throw Error("BatchIterator: batch size must be >= 1");
  if (segments_.empty()) throw Error("BatchIterator: no segments");
  shuffle();
}

void BatchIterator::shuffle() {
  order_.resize(segments_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  auto rng = seeded(seed_, epoch_);
  permute(order_, rng);
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (segments_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& out) {
  const std::size_t begin = batch_index_ * batch_size_;
  if (begin >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), begin + batch_size_);
  std::vector<PowerSpectrogram> picked;
  picked.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) picked.push_back(segments_[order_[i]]);
  out = make_batch(picked);
  ++batch_index_;
  return true;
}

Batch BatchIterator::next_cycling() {
  Batch b;
  if (next(b)) return b;
  seek(epoch_ + 1, 0);
  next(b);
  return b;
}

void BatchIterator::seek(std::uint64_t epoch, std::size_t batch_index) {
  epoch_ = epoch;
  batch_index_ = batch_index;
  shuffle();
}

}  // namespace dvae
