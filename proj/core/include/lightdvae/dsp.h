// lightdvae/dsp.h

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

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace dvae {

// Floor applied to every power spectrogram entry. The IS divergence takes
// log(|s|^2), so exact zeros are not representable.
inline constexpr double kPowerFloor = 1e-10;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double peak() const;
};

enum class WindowShape { kSine };

struct StftConfig {
  int window_length = 1024;
  int hop = 256;
  WindowShape window = WindowShape::kSine;

  int num_bins() const { return window_length / 2 + 1; }
  // Frames produced from `num_samples` samples without center padding.
  int num_frames(std::size_t num_samples) const;
  // Length of the signal covered by `frames` frames.
  std::size_t num_samples(int frames) const;
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

// F x T, rows are frequency bins.
struct ComplexSpectrogram {
  Eigen::MatrixXcd values;
  StftConfig config;

  int bins() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

// F x T, nonnegative and floored at kPowerFloor.
struct PowerSpectrogram {
  Eigen::MatrixXd values;

  int bins() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

// Periodic sine window w[n] = sin(pi (n + 1/2) / N). Its square satisfies
// constant overlap-add at hop N/4 (sum == 2 on the interior).
std::vector<double> sine_window(int length);

// Trims leading and trailing 32 ms frames whose energy is more than
// `threshold_db` below the loudest frame, then peak-normalizes to 1.
// Throws dvae::Error when the signal is empty or entirely silent.
Waveform preprocess_waveform(const Waveform& wav, double threshold_db = 30.0);

// Unscaled analysis: X[f, t] = sum_n w[n] x[n + t hop] exp(-2 pi i f n / N).
ComplexSpectrogram stft(const Waveform& wav, const StftConfig& cfg);

// Weighted overlap-add with the sine synthesis window, normalized by the
// summed squared window. This is the least-squares inverse of stft().
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               int sample_rate = 16000);

PowerSpectrogram power_spectrogram(const ComplexSpectrogram& spec);

// Element-wise sqrt of a power spectrogram.
Eigen::MatrixXd magnitude(const PowerSpectrogram& power);

// Non-overlapping segments of exactly `segment_frames` frames; the trailing
// remainder is dropped.
std::vector<PowerSpectrogram> segment(const PowerSpectrogram& power,
                                      int segment_frames);

// ||  |spec| - magnitude ||_F / ||magnitude||_F (0 when magnitude is zero).
double spectral_convergence(const Eigen::MatrixXd& magnitude,
                            const ComplexSpectrogram& spec);

struct GriffinLimResult {
  Waveform waveform;
  // Spectral convergence of the estimate after each iteration.
  std::vector<double> convergence;
};

// Phase reconstruction by alternating projections, starting from zero phase.
GriffinLimResult griffin_lim(const Eigen::MatrixXd& magnitude,
                             const StftConfig& cfg, int iterations = 100,
                             int sample_rate = 16000);

// Replaces the magnitude of `spec` with `magnitude`, keeping its phase.
ComplexSpectrogram with_magnitude(const ComplexSpectrogram& spec,
                                  const Eigen::MatrixXd& magnitude);

}  // namespace dvae
