// training.cc

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

#include "lightdvae/training.h"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "json.hpp"
#include "lightdvae/error.h"

namespace dvae {

ElboLoss elbo_loss(const ForwardOutput& out, const Batch& batch, double beta_w,
                   double beta_z) {
  if (batch.rows.rows() != out.log_v_s.rows() ||
      batch.rows.cols() != out.log_v_s.cols())
    throw Error("elbo_loss: batch and model output shapes differ");
  const double inv_b = 1.0 / batch.batch;
  const ad::Var recon =
      ad::scale(ad::itakura_saito_sum(batch.rows, out.log_v_s), inv_b);
  const ad::Var kl_z =
      ad::scale(ad::kl_gaussian_sum(out.q_z.mean, out.q_z.log_var,
                                    out.p_z.mean, out.p_z.log_var),
                inv_b);
  const ad::Var kl_w =
      ad::scale(ad::kl_standard_sum(out.q_w.mean, out.q_w.log_var), inv_b);
  ElboLoss loss;
  loss.total = ad::add(ad::add(recon, ad::scale(kl_z, beta_z)),
                       ad::scale(kl_w, beta_w));
  loss.values.recon_is = recon.value()(0, 0);
  loss.values.kl_z = kl_z.value()(0, 0);
  loss.values.kl_w = kl_w.value()(0, 0);
  loss.values.total = loss.total.value()(0, 0);
  return loss;
}

void OptimizerConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("optim.beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("optim.beta2 must be in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("optim.eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be >= 0");
  if (!(lr_min >= 0.0)) throw ConfigError("optim.lr_min must be >= 0");
  if (!(lr_min <= lr_max)) throw ConfigError("optim.lr_min must not exceed optim.lr_max");
  if (warmup_iters < 0) throw ConfigError("optim.warmup_iters must be >= 0");
  if (cosine_iters < 0) throw ConfigError("optim.cosine_iters must be >= 0");
}

double lr_at(std::int64_t iter, const OptimizerConfig& cfg) {
  if (iter < 0) throw Error("lr_at: negative iteration");
  if (iter <= cfg.warmup_iters) {
    if (cfg.warmup_iters == 0) return cfg.lr_max;
    return cfg.lr_max * static_cast<double>(iter) /
           static_cast<double>(cfg.warmup_iters);
  }
  const std::int64_t k = iter - cfg.warmup_iters;
  if (k <= cfg.cosine_iters) {
    const double phase = std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(cfg.cosine_iters);
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
  }
  return cfg.lr_min;
}

void adamw_step(std::span<ad::Parameter* const> params, AdamState& state,
                double lr, const OptimizerConfig& cfg) {
  if (state.m.empty()) {
    for (const ad::Parameter* p : params) {
      state.m.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size())
    throw Error("adamw_step: optimizer state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    ad::Matrix& m = state.m[i];
    ad::Matrix& v = state.v[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw Error("adamw_step: state shape mismatch for " + p.name);
    if (p.grad.size() == 0) p.zero_grad();
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    p.value *= decay;
    p.value.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const ad::Parameter* p : params)
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (ad::Parameter* p : params)
      if (p->grad.size() != 0) p->grad *= s;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(beta_w >= 0.0)) throw ConfigError("train.beta_w must be >= 0");
  if (!(beta_z >= 0.0)) throw ConfigError("train.beta_z must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (valid_every < 0) throw ConfigError("train.valid_every must be >= 0");
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

constexpr std::uint64_t kNoiseStream = 0x7472616e;

void check_finite(std::int64_t iteration, const LossBreakdown& l) {
  const char* bad = nullptr;
  if (!std::isfinite(l.recon_is))
    bad = "recon_is";
  else if (!std::isfinite(l.kl_z))
    bad = "kl_z";
  else if (!std::isfinite(l.kl_w))
    bad = "kl_w";
  else if (!std::isfinite(l.total))
    bad = "total";
  if (bad)
    throw NumericalError("non-finite loss at iteration " +
                         std::to_string(iteration) + " (term " + bad + ")");
}

}  // namespace

Trainer::Trainer(Dvae& model, std::vector<PowerSpectrogram> segments,
                 const OptimizerConfig& optim, const TrainConfig& train)
    : model_(model),
      optim_(optim),
      train_(train),
      batches_(std::move(segments), train.batch_size, train.seed),
      noise_(train.seed ^ kNoiseStream),
      start_(std::chrono::steady_clock::now()) {
  optim_.validate();
  train_.validate();
}

LossBreakdown Trainer::step() {
  const std::int64_t it = iteration_ + 1;
  const Batch batch = batches_.next_cycling();
  ParameterStore& store = model_.parameters();
  store.zero_grad();
  ad::Tape tape;
  const ForwardOutput out = model_.forward_tf(tape, batch, noise_);
  const ElboLoss loss = elbo_loss(out, batch, train_.beta_w, train_.beta_z);
  check_finite(it, loss.values);
  tape.backward(loss.total);
  const std::span<ad::Parameter* const> params(store.all());
  const double gnorm = clip_grad_norm(params, optim_.clip_norm);
  if (!std::isfinite(gnorm))
    throw NumericalError("non-finite gradient norm at iteration " +
                         std::to_string(it));
  last_lr_ = lr_at(it, optim_);
  adamw_step(params, adam_, last_lr_, optim_);
  iteration_ = it;
  last_ = loss.values;
  return last_;
}

void Trainer::run(std::ostream* log,
                  const std::function<void(Trainer&)>& on_checkpoint,
                  const std::function<void(Trainer&)>& on_valid) {
  while (iteration_ < train_.iterations) {
    const LossBreakdown l = step();
    if (log) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
              .count();
      *log << format_log_row(iteration_, last_lr_, l, wall) << '\n';
      log->flush();
    }
    if (on_valid && train_.valid_every > 0 &&
        iteration_ % train_.valid_every == 0)
      on_valid(*this);
    if (on_checkpoint && train_.checkpoint_every > 0 &&
        iteration_ % train_.checkpoint_every == 0)
      on_checkpoint(*this);
  }
}

LossBreakdown Trainer::evaluate(const std::vector<PowerSpectrogram>& segments,
                                std::uint64_t noise_seed) const {
  LossBreakdown mean;
  if (segments.empty()) return mean;
  NoiseSource noise(noise_seed);
  for (const PowerSpectrogram& s : segments) {
    ad::Tape tape(false);
    const Batch b = make_batch(s);
    const ForwardOutput out = model_.forward_tf(tape, b, noise);
    const LossBreakdown l =
        elbo_loss(out, b, train_.beta_w, train_.beta_z).values;
    mean.total += l.total;
    mean.recon_is += l.recon_is;
    mean.kl_z += l.kl_z;
    mean.kl_w += l.kl_w;
  }
  const double n = static_cast<double>(segments.size());
  mean.total /= n;
  mean.recon_is /= n;
  mean.kl_z /= n;
  mean.kl_w /= n;
  return mean;
}

std::string Trainer::format_log_row(std::int64_t iteration, double lr,
                                    const LossBreakdown& l, double wall_time) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.3f",
                static_cast<long long>(iteration), lr, l.total, l.recon_is,
                l.kl_z, l.kl_w, wall_time);
  return buf;
}

std::vector<NamedTensor> parameter_tensors(const Dvae& model) {
  std::vector<NamedTensor> out;
  for (const ad::Parameter* p : model.parameters().all())
    out.push_back({"param/" + p->name, p->value});
  return out;
}

void load_parameters(Dvae& model, const CheckpointData& data) {
  for (ad::Parameter* p : model.parameters().all()) {
    const ad::Matrix& v = data.tensor("param/" + p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw FormatError("checkpoint tensor " + p->name + " has wrong shape");
    p->value = v;
  }
}

CheckpointData Trainer::checkpoint(const std::string& metadata) const {
  nlohmann::json meta = nlohmann::json::parse(metadata);
  if (!meta.is_object()) throw Error("checkpoint metadata must be an object");
  meta["trainer"] = {{"iteration", iteration_},
                     {"adam_step", adam_.step},
                     {"noise_state", noise_.state()},
                     {"batch_epoch", batches_.epoch()},
                     {"batch_index", batches_.batch_index()}};
  CheckpointData data;
  data.metadata = meta.dump();
  data.tensors = parameter_tensors(model_);
  const auto& params = model_.parameters().all();
  for (std::size_t i = 0; i < adam_.m.size(); ++i) {
    data.tensors.push_back({"adam_m/" + params[i]->name, adam_.m[i]});
    data.tensors.push_back({"adam_v/" + params[i]->name, adam_.v[i]});
  }
  return data;
}

void Trainer::restore(const CheckpointData& data) {
  load_parameters(model_, data);
  nlohmann::json t;
  try {
    t = nlohmann::json::parse(data.metadata).at("trainer");
    iteration_ = t.at("iteration").get<std::int64_t>();
    adam_.step = t.at("adam_step").get<std::int64_t>();
    noise_.set_state(t.at("noise_state").get<std::string>());
    batches_.seek(t.at("batch_epoch").get<std::uint64_t>(),
                  t.at("batch_index").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint lacks trainer state: ") + e.what());
  }
  adam_.m.clear();
  adam_.v.clear();
  if (adam_.step > 0) {
    for (const ad::Parameter* p : model_.parameters().all()) {
      adam_.m.push_back(data.tensor("adam_m/" + p->name));
      adam_.v.push_back(data.tensor("adam_v/" + p->name));
    }
  }
}

}  // namespace dvae
