// dsp.cc

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

#include "lightdvae/dsp.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "lightdvae/error.h"

namespace dvae {

namespace {

// FFTW plans are created once per size and executed through the new-array
// interface, which is thread-safe. Only planning needs the lock.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::vector<double> in(n);
    std::vector<fftw_complex> out(n / 2 + 1);
    forward_ = fftw_plan_dft_r2c_1d(n, in.data(), out.data(),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse_ = fftw_plan_dft_c2r_1d(n, out.data(), in.data(),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (forward_ == nullptr || inverse_ == nullptr)
      throw Error("FFTW planning failed for size " + std::to_string(n));
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  // out has n/2 + 1 entries.
  void forward(const double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(forward_, const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
  }

  // Unnormalized inverse; `in` is clobbered.
  void inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex*>(in), out);
  }

  int size() const { return n_; }

 private:
  int n_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

const RealFft& fft_for(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<RealFft>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

}  // namespace

double Waveform::peak() const {
  double m = 0.0;
  for (double x : samples) m = std::max(m, std::abs(x));
  return m;
}

int StftConfig::num_frames(std::size_t num_samples) const {
  if (num_samples < static_cast<std::size_t>(window_length)) return 0;
  return 1 + static_cast<int>((num_samples - window_length) / hop);
}

std::size_t StftConfig::num_samples(int frames) const {
  if (frames <= 0) return 0;
  return static_cast<std::size_t>(frames - 1) * hop + window_length;
}

void StftConfig::validate() const {
  if (window_length < 2 || window_length % 2 != 0)
    throw Error("STFT window length must be even and >= 2, got " +
                std::to_string(window_length));
  if (hop < 1 || window_length % hop != 0)
    throw Error("STFT hop must divide the window length (window " +
                std::to_string(window_length) + ", hop " +
                std::to_string(hop) + ")");
}

std::vector<double> sine_window(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n)
    w[n] = std::sin(std::numbers::pi * (n + 0.5) / length);
  return w;
}

Waveform preprocess_waveform(const Waveform& wav, double threshold_db) {
  if (wav.empty()) throw Error("preprocess_waveform: empty signal");
  if (wav.sample_rate <= 0) throw Error("preprocess_waveform: bad sample rate");

  const std::size_t frame =
      std::max<std::size_t>(1, std::lround(0.032 * wav.sample_rate));
  const std::size_t n = wav.size();
  const std::size_t num_frames = (n + frame - 1) / frame;

  std::vector<double> energy(num_frames, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    energy[i / frame] += wav.samples[i] * wav.samples[i];
  const double max_energy = *std::max_element(energy.begin(), energy.end());
  if (max_energy <= 0.0)
    throw Error("preprocess_waveform: signal is entirely silent");

  const double threshold = max_energy * std::pow(10.0, -threshold_db / 10.0);
  std::size_t first = 0;
  while (energy[first] < threshold) ++first;
  std::size_t last = num_frames - 1;
  while (energy[last] < threshold) --last;

  const std::size_t begin = first * frame;
  const std::size_t end = std::min(n, (last + 1) * frame);

  Waveform out;
  out.sample_rate = wav.sample_rate;
  out.samples.assign(wav.samples.begin() + begin, wav.samples.begin() + end);
  const double peak = out.peak();
  for (double& x : out.samples) x /= peak;
  return out;
}

ComplexSpectrogram stft(const Waveform& wav, const StftConfig& cfg) {
  cfg.validate();
  const int n = cfg.window_length;
  if (wav.size() < static_cast<std::size_t>(n))
    throw Error("stft: signal of " + std::to_string(wav.size()) +
                " samples is shorter than one window (" + std::to_string(n) +
                ")");
  const int frames = cfg.num_frames(wav.size());
  const int bins = cfg.num_bins();
  const auto window = sine_window(n);
  const RealFft& fft = fft_for(n);

  ComplexSpectrogram spec;
  spec.config = cfg;
  spec.values.resize(bins, frames);
  std::vector<double> buffer(n);
  for (int t = 0; t < frames; ++t) {
    const double* x = wav.samples.data() + static_cast<std::size_t>(t) * cfg.hop;
    for (int i = 0; i < n; ++i) buffer[i] = window[i] * x[i];
    fft.forward(buffer.data(), spec.values.col(t).data());
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               int sample_rate) {
  cfg.validate();
  if (!(spec.config == cfg))
    throw Error("istft: spectrogram was produced with a different config");
  if (spec.bins() != cfg.num_bins())
    throw Error("istft: expected " + std::to_string(cfg.num_bins()) +
                " bins, got " + std::to_string(spec.bins()));
  const int n = cfg.window_length;
  const int frames = spec.frames();
  const auto window = sine_window(n);
  const RealFft& fft = fft_for(n);

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(cfg.num_samples(frames), 0.0);
  std::vector<double> norm(out.samples.size(), 0.0);
  std::vector<std::complex<double>> scratch(cfg.num_bins());
  std::vector<double> frame(n);
  for (int t = 0; t < frames; ++t) {
    auto col = spec.values.col(t);
    std::copy(col.data(), col.data() + col.size(), scratch.begin());
    fft.inverse(scratch.data(), frame.data());
    const std::size_t offset = static_cast<std::size_t>(t) * cfg.hop;
    for (int i = 0; i < n; ++i) {
      out.samples[offset + i] += window[i] * frame[i] / n;
      norm[offset + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < norm.size(); ++i)
    if (norm[i] > 0.0) out.samples[i] /= norm[i];
  return out;
}

PowerSpectrogram power_spectrogram(const ComplexSpectrogram& spec) {
  PowerSpectrogram p;
  p.values = spec.values.cwiseAbs2().cwiseMax(kPowerFloor);
  return p;
}

Eigen::MatrixXd magnitude(const PowerSpectrogram& power) {
  return power.values.cwiseSqrt();
}

std::vector<PowerSpectrogram> segment(const PowerSpectrogram& power,
                                      int segment_frames) {
  if (segment_frames < 1) throw Error("segment: segment length must be >= 1");
  std::vector<PowerSpectrogram> out;
  const int count = power.frames() / segment_frames;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    PowerSpectrogram s;
    s.values = power.values.middleCols(i * segment_frames, segment_frames);
    out.push_back(std::move(s));
  }
  return out;
}

double spectral_convergence(const Eigen::MatrixXd& magnitude,
                            const ComplexSpectrogram& spec) {
  const double denom = magnitude.norm();
  if (denom == 0.0) return 0.0;
  return (spec.values.cwiseAbs() - magnitude).norm() / denom;
}

ComplexSpectrogram with_magnitude(const ComplexSpectrogram& spec,
                                  const Eigen::MatrixXd& magnitude) {
  if (magnitude.rows() != spec.values.rows() ||
      magnitude.cols() != spec.values.cols())
    throw Error("with_magnitude: shape mismatch");
  ComplexSpectrogram out;
  out.config = spec.config;
  out.values.resize(spec.values.rows(), spec.values.cols());
  for (Eigen::Index j = 0; j < spec.values.cols(); ++j) {
    for (Eigen::Index i = 0; i < spec.values.rows(); ++i) {
      const std::complex<double> x = spec.values(i, j);
      const double a = std::abs(x);
      const std::complex<double> phase = a > 0.0 ? x / a : 1.0;
      out.values(i, j) = magnitude(i, j) * phase;
    }
  }
  return out;
}

GriffinLimResult griffin_lim(const Eigen::MatrixXd& magnitude,
                             const StftConfig& cfg, int iterations,
                             int sample_rate) {
  cfg.validate();
  if (iterations < 1) throw Error("griffin_lim: iterations must be >= 1");
  if (magnitude.rows() != cfg.num_bins())
    throw Error("griffin_lim: magnitude has " +
                std::to_string(magnitude.rows()) + " bins, config expects " +
                std::to_string(cfg.num_bins()));

  ComplexSpectrogram estimate;
  estimate.config = cfg;
  estimate.values = magnitude.cast<std::complex<double>>();

  GriffinLimResult result;
  result.waveform = istft(estimate, cfg, sample_rate);
  estimate = stft(result.waveform, cfg);
  result.convergence.reserve(iterations);
  for (int k = 0; k < iterations; ++k) {
    result.waveform = istft(with_magnitude(estimate, magnitude), cfg, sample_rate);
    estimate = stft(result.waveform, cfg);
    result.convergence.push_back(spectral_convergence(magnitude, estimate));
  }
  return result;
}

}  // namespace dvae
