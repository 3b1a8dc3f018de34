// lightdvae/training.h

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

// Negative-ELBO assembly, AdamW, the learning-rate schedule and the training
// loop.

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lightdvae/checkpoint.h"
#include "lightdvae/data.h"
#include "lightdvae/model.h"

namespace dvae {

// Batch means of the summed per-sequence terms, in nats.
struct LossBreakdown {
  double total = 0.0;
  double recon_is = 0.0;
  double kl_z = 0.0;
  double kl_w = 0.0;
};

struct ElboLoss {
  ad::Var total;  // differentiable scalar, same value as values.total
  LossBreakdown values;
};

// total = recon_is + beta_z * kl_z + beta_w * kl_w, evaluated in exactly that
// order so the scalar graph and the breakdown agree bit for bit.
ElboLoss elbo_loss(const ForwardOutput& out, const Batch& batch, double beta_w,
                   double beta_z);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-9;
  double weight_decay = 1e-5;
  double lr_max = 5e-5;
  double lr_min = 1e-8;
  std::int64_t warmup_iters = 5000;
  std::int64_t cosine_iters = 20000;
  // Global-norm gradient clipping; <= 0 disables.
  double clip_norm = 5.0;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

// Linear warmup from 0, cosine annealing to lr_min, then constant lr_min.
double lr_at(std::int64_t iter, const OptimizerConfig& cfg);

struct AdamState {
  std::int64_t step = 0;
  std::vector<ad::Matrix> m;
  std::vector<ad::Matrix> v;
};

// One AdamW update of every parameter from its accumulated `grad`:
//   p <- p (1 - lr wd)
//   p <- p - lr m_hat / (sqrt(v_hat) + eps)
void adamw_step(std::span<ad::Parameter* const> params, AdamState& state,
                double lr, const OptimizerConfig& cfg);

// Scales all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm);

struct TrainConfig {
  std::int64_t iterations = 25000;
  int batch_size = 32;
  double beta_w = 1e-2;
  double beta_z = 1e-2;
  std::uint64_t seed = 0;
  // Periodic checkpoint cadence in iterations; 0 disables.
  std::int64_t checkpoint_every = 1000;
  // Validation cadence in iterations; 0 disables.
  std::int64_t valid_every = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Column order of the training log.
inline constexpr const char* kTrainLogHeader =
    "iteration\tlr\ttotal\trecon_is\tkl_z\tkl_w\twall_time";

class Trainer {
 public:
  Trainer(Dvae& model, std::vector<PowerSpectrogram> segments,
          const OptimizerConfig& optim, const TrainConfig& train);

  // One iteration on the next batch. Throws dvae::NumericalError naming the
  // iteration and the first non-finite term.
  LossBreakdown step();

  // Steps until `iteration() == train.iterations`. Rows are appended to `log`
  // (if non-null) as they are produced; `on_checkpoint` runs every
  // checkpoint_every iterations and `on_valid` every valid_every iterations.
  void run(std::ostream* log,
           const std::function<void(Trainer&)>& on_checkpoint = {},
           const std::function<void(Trainer&)>& on_valid = {});

  // Mean loss over `segments` with a fixed noise seed; no parameter update.
  LossBreakdown evaluate(const std::vector<PowerSpectrogram>& segments,
                         std::uint64_t noise_seed) const;

  std::int64_t iteration() const { return iteration_; }
  Dvae& model() { return model_; }
  const AdamState& optimizer_state() const { return adam_; }
  const OptimizerConfig& optimizer_config() const { return optim_; }
  const TrainConfig& train_config() const { return train_; }
  const LossBreakdown& last_loss() const { return last_; }
  double last_lr() const { return last_lr_; }

  // Parameters, Adam moments, iteration, noise and batch-order state.
  // `metadata` must be a JSON object; the trainer adds its own keys.
  CheckpointData checkpoint(const std::string& metadata = "{}") const;
  // Restores everything `checkpoint` saved. The model must have the same
  // parameter names and shapes.
  void restore(const CheckpointData& data);

  static std::string format_log_row(std::int64_t iteration, double lr,
                                    const LossBreakdown& loss,
                                    double wall_time);

 private:
  Dvae& model_;
  OptimizerConfig optim_;
  TrainConfig train_;
  BatchIterator batches_;
  NoiseSource noise_;
  AdamState adam_;
  std::int64_t iteration_ = 0;
  LossBreakdown last_;
  double last_lr_ = 0.0;
  std::chrono::steady_clock::time_point start_;
};

// Copies "param/<name>" tensors of `data` into the model's parameters.
void load_parameters(Dvae& model, const CheckpointData& data);
// "param/<name>" tensors for every model parameter.
std::vector<NamedTensor> parameter_tensors(const Dvae& model);

}  // namespace dvae
