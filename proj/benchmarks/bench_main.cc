// benchmarks/bench_main.cc

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

#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "lightdvae/data.h"
#include "lightdvae/dsp.h"
#include "lightdvae/model.h"
#include "lightdvae/nn.h"
#include "lightdvae/training.h"

namespace {

using namespace dvae;

Waveform noise_wave(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Waveform w;
  w.samples.resize(n);
  for (double& x : w.samples) x = g(rng);
  return w;
}

void BM_Stft(benchmark::State& state) {
  StftConfig cfg;
  const Waveform w = noise_wave(static_cast<std::size_t>(state.range(0)) * 16000);
  for (auto _ : state) benchmark::DoNotOptimize(stft(w, cfg));
  state.SetLabel("1024/256 sine window");
}
BENCHMARK(BM_Stft)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Istft(benchmark::State& state) {
  StftConfig cfg;
  const ComplexSpectrogram spec = stft(noise_wave(4 * 16000), cfg);
  for (auto _ : state) benchmark::DoNotOptimize(istft(spec, cfg, 16000));
}
BENCHMARK(BM_Istft)->Unit(benchmark::kMillisecond);

void BM_GriffinLim(benchmark::State& state) {
  StftConfig cfg;
  const Eigen::MatrixXd mag = stft(noise_wave(16000), cfg).values.cwiseAbs();
  for (auto _ : state) benchmark::DoNotOptimize(griffin_lim(mag, cfg, 10));
}
BENCHMARK(BM_GriffinLim)->Unit(benchmark::kMillisecond);

// Forward and backward through one causal attention block at the published
// width; the argument is the sequence length.
void BM_Attention(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  LayerConfig lc;
  lc.d_model = 256;
  lc.n_heads = 1;
  lc.d_ff = 1024;
  ParameterStore store;
  Rng init(2);
  MultiHeadAttention mha(store, "mha", lc, init);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  ad::Matrix x(4 * T, 256);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  const auto mask = build_causal_mask(T, true);
  for (auto _ : state) {
    store.zero_grad();
    ad::Tape tape;
    const ad::Var in = tape.constant(x);
    tape.backward(ad::sum(mha(in, in, mask, T)));
  }
  state.SetItemsProcessed(state.iterations() * 4 * T);
}
BENCHMARK(BM_Attention)->Arg(50)->Arg(150)->Unit(benchmark::kMillisecond);

// One optimizer iteration (forward, backward, AdamW) at desk scale (first
// argument 0) or at the published model size with a batch of 4 (argument 1).
void BM_TrainStep(benchmark::State& state) {
  const bool published = state.range(0) == 1;
  ModelConfig mc;
  StftConfig sc;
  int batch = 4, frames = 150;
  if (!published) {
    sc.window_length = 128;
    sc.hop = 32;
    mc.d_model = 32;
    mc.n_layers = 2;
    mc.d_ff = 128;
    mc.latent_z = 4;
    mc.latent_w = 8;
    mc.rnn_hidden = 32;
    batch = 32;
    frames = 50;
  }
  mc.bins = sc.num_bins();
  Dvae model(mc, 0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 1.0);
  std::vector<PowerSpectrogram> segs(static_cast<std::size_t>(batch));
  for (PowerSpectrogram& s : segs) {
    s.values.resize(mc.bins, frames);
    for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = std::exp(u(rng));
  }
  OptimizerConfig oc;
  TrainConfig tc;
  tc.batch_size = batch;
  Trainer trainer(model, segs, oc, tc);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
  state.SetLabel(published ? "published size, B=4, T=150" : "desk size, B=32, T=50");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
