// metrics.cc

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

#include "lightdvae/metrics.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "lightdvae/error.h"

namespace dvae {

namespace {

std::size_t overlap(const Waveform& a, const Waveform& b, const char* what) {
  if (a.sample_rate != b.sample_rate)
    throw Error(std::string(what) + ": sample rates differ");
  const std::size_t n = std::min(a.samples.size(), b.samples.size());
  if (n == 0) throw Error(std::string(what) + ": empty overlap");
  return n;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return fmt(v);
}

}  // namespace

double rmse(const Waveform& ref, const Waveform& est) {
  const std::size_t n = overlap(ref, est, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = ref.samples[i] - est.samples[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

double si_sdr(const Waveform& ref, const Waveform& est) {
  const std::size_t n = overlap(ref, est, "si_sdr");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += est.samples[i] * ref.samples[i];
    ref_energy += ref.samples[i] * ref.samples[i];
  }
  if (ref_energy == 0.0) throw Error("si_sdr: reference is all zeros");
  const double alpha = dot / ref_energy;
  if (alpha == 0.0) return -std::numeric_limits<double>::infinity();
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = alpha * ref.samples[i];
    const double e = t - est.samples[i];
    target += t * t;
    residual += e * e;
  }
  if (residual == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(target / residual);
}

double log_spectral_distance(const PowerSpectrogram& ref,
                             const PowerSpectrogram& est) {
  if (ref.values.rows() != est.values.rows() ||
      ref.values.cols() != est.values.cols())
    throw Error("log_spectral_distance: shape mismatch");
  if (ref.values.size() == 0) throw Error("log_spectral_distance: empty input");
  const Eigen::Index F = ref.values.rows(), T = ref.values.cols();
  double acc = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    double frame = 0.0;
    for (Eigen::Index f = 0; f < F; ++f) {
      const double d = 10.0 * std::log10(ref.values(f, t) / est.values(f, t));
      frame += d * d;
    }
    acc += std::sqrt(frame / static_cast<double>(F));
  }
  return acc / static_cast<double>(T);
}

Waveform resynthesize_waveform(const ComplexSpectrogram& reference,
                               const PowerSpectrogram& power,
                               int sample_rate) {
  const Eigen::MatrixXd mag = power.values.array().sqrt().matrix();
  return istft(with_magnitude(reference, mag), reference.config, sample_rate);
}

UtteranceMetrics MetricReport::mean() const {
  UtteranceMetrics m;
  m.name = "mean";
  if (utterances.empty()) {
    m.rmse = m.si_sdr = m.lsd = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  for (const UtteranceMetrics& u : utterances) {
    m.rmse += u.rmse;
    m.si_sdr += u.si_sdr;
    m.lsd += u.lsd;
  }
  const double n = static_cast<double>(utterances.size());
  m.rmse /= n;
  m.si_sdr /= n;
  m.lsd /= n;
  return m;
}

void MetricReport::write_tsv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "name\trmse\tsi_sdr_db\tlsd_db\n";
  auto row = [&](const UtteranceMetrics& u) {
    os << u.name << '\t' << fmt(u.rmse) << '\t' << fmt(u.si_sdr) << '\t'
       << fmt(u.lsd) << '\n';
  };
  for (const UtteranceMetrics& u : utterances) row(u);
  row(mean());
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  const UtteranceMetrics m = mean();
  nlohmann::json j;
  j["count"] = utterances.size();
  j["mean"] = {{"rmse", json_number(m.rmse)},
               {"si_sdr_db", json_number(m.si_sdr)},
               {"lsd_db", json_number(m.lsd)}};
  j["utterances"] = nlohmann::json::array();
  for (const UtteranceMetrics& u : utterances)
    j["utterances"].push_back({{"name", u.name},
                               {"rmse", json_number(u.rmse)},
                               {"si_sdr_db", json_number(u.si_sdr)},
                               {"lsd_db", json_number(u.lsd)}});
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace dvae
