// lightdvae/metrics.h

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

// Waveform and spectrogram evaluation metrics.

#include <filesystem>
#include <string>
#include <vector>

#include "lightdvae/dsp.h"

namespace dvae {

// sqrt(mean((ref - est)^2)) over the first min(len) samples. Throws
// dvae::Error on mismatched sample rates or an empty overlap.
double rmse(const Waveform& ref, const Waveform& est);

// Scale-invariant SDR in dB after truncation to the shorter length.
// alpha = <est, ref> / |ref|^2; returns +inf for an exactly zero residual and
// -inf for alpha == 0. Throws dvae::Error for an all-zero reference.
double si_sdr(const Waveform& ref, const Waveform& est);

// Mean over frames of sqrt(mean over bins of (10 log10(ref / est))^2), in dB.
// Throws dvae::Error on shape mismatch.
double log_spectral_distance(const PowerSpectrogram& ref,
                             const PowerSpectrogram& est);

// Waveform from the phase of `reference` and magnitude sqrt(power).
Waveform resynthesize_waveform(const ComplexSpectrogram& reference,
                               const PowerSpectrogram& power,
                               int sample_rate);

struct UtteranceMetrics {
  std::string name;
  double rmse = 0.0;
  double si_sdr = 0.0;
  double lsd = 0.0;
};

struct MetricReport {
  std::vector<UtteranceMetrics> utterances;

  // Arithmetic means over utterances (NaN when empty).
  UtteranceMetrics mean() const;

  // One row per utterance plus a final "mean" row, tab-separated with header
  // "name\trmse\tsi_sdr_db\tlsd_db".
  void write_tsv(const std::filesystem::path& path) const;
  // {"count", "mean": {"rmse", "si_sdr_db", "lsd_db"}, "utterances": [...]};
  // infinities are written as the strings "inf" / "-inf".
  void write_json(const std::filesystem::path& path) const;
};

}  // namespace dvae
