// model.cc

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

#include "lightdvae/model.h"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "lightdvae/error.h"
#include "random_util.h"
#include "scalar_math.h"

namespace dvae {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

ad::Var add_positional(const ad::Var& x, Eigen::Index block) {
  const ad::Matrix pe =
      positional_encoding(static_cast<int>(block), static_cast<int>(x.cols()));
  return ad::add_constant(x, pe.replicate(x.rows() / block, 1));
}

ad::Var sample(const GaussianVars& g, const ad::Matrix& eps) {
  ad::Tape& t = g.mean.tape();
  return ad::add(g.mean,
                 ad::mul(ad::exp(ad::scale(g.log_var, 0.5)), t.constant(eps)));
}

ad::Matrix sample_value(const GaussianVars& g, const ad::Matrix& eps) {
  return sample(g, eps).value();
}

}  // namespace

ad::Matrix log_features(const ad::Matrix& power) {
  return internal::log_of(power.cwiseMax(kPowerFloor));
}

// ---------------------------------------------------------------------------
// ModelConfig

std::string ModelConfig::variant() const {
  std::string name = architecture == Architecture::kHiT ? "HiT" : "LigHT";
  if (ablation == Ablation::kInvS) name += "-Inv-s";
  if (ablation == Ablation::kInvSNR) name += "-Inv-s-NR";
  return name;
}

void ModelConfig::set_variant(const std::string& name) {
  const std::string n = lower(name);
  std::string rest;
  if (n.rfind("light", 0) == 0) {
    architecture = Architecture::kLigHT;
    rest = n.substr(5);
  } else if (n.rfind("hit", 0) == 0) {
    architecture = Architecture::kHiT;
    rest = n.substr(3);
  } else {
    throw ConfigError("unknown model variant '" + name + "'");
  }
  if (rest.empty())
    ablation = Ablation::kNone;
  else if (rest == "-inv-s")
    ablation = Ablation::kInvS;
  else if (rest == "-inv-s-nr")
    ablation = Ablation::kInvSNR;
  else
    throw ConfigError("unknown model variant '" + name + "'");
}

LayerConfig ModelConfig::layer_config() const {
  LayerConfig c;
  c.d_model = d_model;
  c.n_heads = n_heads;
  c.d_ff = d_ff;
  return c;
}

void ModelConfig::validate() const {
  if (bins < 1) throw ConfigError("model.bins must be >= 1");
  if (n_layers < 1) throw ConfigError("model.n_layers must be >= 1");
  if (latent_z < 1 || latent_w < 1)
    throw ConfigError("latent dimensions must be >= 1");
  if (rnn_hidden < 1) throw ConfigError("model.rnn_hidden must be >= 1");
  if (d_model % 2 != 0) throw ConfigError("model.d_model must be even");
  try {
    layer_config().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// NoiseSource

NoiseSource::NoiseSource(std::uint64_t seed)
    : rng_(internal::seeded(seed, 0x6e6f697365ULL)) {}

ad::Matrix NoiseSource::normal(Eigen::Index rows, Eigen::Index cols) {
  ad::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = internal::gaussian(rng_);
  return m;
}

std::string NoiseSource::state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void NoiseSource::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> rng_;
  if (!is) throw FormatError("bad noise generator state");
}

ad::Matrix ForwardOutput::v_s() const {
  return internal::exp_of(log_v_s.value());
}

// ---------------------------------------------------------------------------
// DecoderStack

DecoderStack::DecoderStack(ParameterStore& store, const std::string& name,
                           const ModelConfig& cfg, Rng& rng)
    : positional_(cfg.positional_encoding),
      latent_embed_(store, name + ".latent_embed", cfg.latent_z + cfg.latent_w,
                    cfg.d_model, rng),
      observed_embed_(store, name + ".observed_embed", cfg.bins, cfg.d_model,
                      rng) {
  const LayerConfig lc = cfg.layer_config();
  for (int i = 0; i < cfg.n_layers; ++i)
    layers_.emplace_back(store, name + ".layer" + std::to_string(i), lc, rng);
}

ad::Var DecoderStack::embed_latent(const ad::Var& latent,
                                   Eigen::Index block) const {
  ad::Var h = latent_embed_(latent);
  return positional_ ? add_positional(h, block) : h;
}

ad::Var DecoderStack::embed_observed(const ad::Var& features,
                                     Eigen::Index block) const {
  ad::Var h = observed_embed_(features);
  return positional_ ? add_positional(h, block) : h;
}

ad::Var DecoderStack::run(const ad::Var& stream, const ad::Var& memory,
                          const AttentionMask& mask, Eigen::Index block,
                          bool residual) const {
  ad::Var h = stream;
  for (const DecoderLayer& layer : layers_)
    h = layer(h, memory, mask, mask, block, residual);
  return h;
}

std::size_t DecoderStack::num_params() const {
  std::size_t n = latent_embed_.num_params() + observed_embed_.num_params();
  for (const DecoderLayer& layer : layers_) n += layer.num_params();
  return n;
}

// ---------------------------------------------------------------------------
// Dvae

Dvae::Dvae(const ModelConfig& cfg, std::uint64_t init_seed) : config_(cfg) {
  config_.validate();
  Rng rng = internal::seeded(init_seed, 0x696e6974ULL);
  const ModelConfig& c = config_;
  const LayerConfig lc = c.layer_config();

  w_rnn_ = Gru(store_, "encoder.w.rnn", c.bins, c.rnn_hidden, rng);
  w_head_ = Linear(store_, "encoder.w.head", c.rnn_hidden, 2 * c.latent_w, rng);
  z_embed_ = Linear(store_, "encoder.z.embed", c.bins + c.latent_w, c.d_model,
                    rng);
  for (int i = 0; i < c.n_layers; ++i)
    z_layers_.emplace_back(store_, "encoder.z.layer" + std::to_string(i), lc,
                           rng);
  z_head_ = Linear(store_, "encoder.z.head", c.d_model, 2 * c.latent_z, rng);

  if (c.architecture == Architecture::kLigHT) {
    shared_or_prior_ =
        std::make_unique<DecoderStack>(store_, "decoder.shared", c, rng);
    prior_decoder_ = observation_decoder_ = shared_or_prior_.get();
  } else {
    shared_or_prior_ =
        std::make_unique<DecoderStack>(store_, "decoder.prior", c, rng);
    observation_only_ =
        std::make_unique<DecoderStack>(store_, "decoder.observation", c, rng);
    prior_decoder_ = shared_or_prior_.get();
    observation_decoder_ = observation_only_.get();
  }
  prior_head_ = Linear(store_, "head.prior", c.d_model, 2 * c.latent_z, rng);
  observation_head_ = Linear(store_, "head.observation", c.d_model, c.bins, rng);
}

ad::Var Dvae::positional(const ad::Var& x, Eigen::Index block) const {
  return config_.positional_encoding ? add_positional(x, block) : x;
}

GaussianVars Dvae::split_gaussian(const ad::Var& out, Eigen::Index dim) const {
  return {ad::slice_cols(out, 0, dim),
          ad::clamp(ad::slice_cols(out, dim, dim), kLogVarMin, kLogVarMax)};
}

GaussianVars Dvae::encode_w(const ad::Var& features,
                            Eigen::Index frames) const {
  return split_gaussian(w_head_(w_rnn_.final_state(features, frames)),
                        config_.latent_w);
}

GaussianVars Dvae::encode_z(const ad::Var& features, const ad::Var& w,
                            Eigen::Index frames) const {
  const AttentionMask mask = AttentionMask::full(static_cast<int>(frames));
  ad::Var h = positional(
      z_embed_(ad::hcat(features, ad::repeat_rows(w, frames))), frames);
  for (const EncoderLayer& layer : z_layers_) h = layer(h, mask, frames);
  return split_gaussian(z_head_(h), config_.latent_z);
}

GaussianVars Dvae::decode_prior(const ad::Var& z, const ad::Var& w,
                                const ad::Var& feedback,
                                Eigen::Index frames) const {
  const AttentionMask mask = AttentionMask::causal(static_cast<int>(frames));
  const DecoderStack& stack = *prior_decoder_;
  const ad::Var wz = ad::repeat_rows(w, frames);
  const ad::Var stream =
      stack.embed_latent(ad::hcat(ad::shift_rows(z, frames), wz), frames);
  const ad::Var memory =
      stack.embed_observed(ad::shift_rows(feedback, frames), frames);
  return split_gaussian(prior_head_(stack.run(stream, memory, mask, frames, true)),
                        config_.latent_z);
}

namespace {

ad::Var observation_pass(const DecoderStack& stack, const ModelConfig& cfg,
                         const ad::Var& latent_in, const ad::Var& observed,
                         const AttentionMask& mask, Eigen::Index frames) {
  const ad::Var latent = stack.embed_latent(latent_in, frames);
  if (cfg.ablation == Ablation::kNone)
    return stack.run(latent, observed, mask, frames, true);
  return stack.run(observed, latent, mask, frames,
                   cfg.ablation != Ablation::kInvSNR);
}

}  // namespace

ad::Var Dvae::decode_observation(const ad::Var& z, const ad::Var& w,
                                 const ad::Var& feedback,
                                 Eigen::Index frames) const {
  const AttentionMask mask = AttentionMask::causal(static_cast<int>(frames));
  const DecoderStack& stack = *observation_decoder_;
  const ad::Var observed =
      stack.embed_observed(ad::shift_rows(feedback, frames), frames);
  const ad::Var h =
      observation_pass(stack, config_, ad::hcat(z, ad::repeat_rows(w, frames)),
                       observed, mask, frames);
  return ad::clamp(observation_head_(h), kLogVarMin, kLogVarMax);
}

Dvae::Decoded Dvae::decode(const ad::Var& z, const ad::Var& w,
                           const ad::Var& feedback, Eigen::Index frames) const {
  const AttentionMask mask = AttentionMask::causal(static_cast<int>(frames));
  const ad::Var wz = ad::repeat_rows(w, frames);
  const ad::Var fb_shift = ad::shift_rows(feedback, frames);

  const DecoderStack& prior = *prior_decoder_;
  const ad::Var prior_observed = prior.embed_observed(fb_shift, frames);
  const ad::Var stream =
      prior.embed_latent(ad::hcat(ad::shift_rows(z, frames), wz), frames);
  Decoded out;
  out.p_z = split_gaussian(
      prior_head_(prior.run(stream, prior_observed, mask, frames, true)),
      config_.latent_z);

  const DecoderStack& obs = *observation_decoder_;
  const ad::Var observed = &obs == &prior
                               ? prior_observed
                               : obs.embed_observed(fb_shift, frames);
  const ad::Var h = observation_pass(obs, config_, ad::hcat(z, wz), observed,
                                     mask, frames);
  out.log_v_s = ad::clamp(observation_head_(h), kLogVarMin, kLogVarMax);
  return out;
}

ForwardOutput Dvae::forward_tf(ad::Tape& tape, const Batch& batch,
                               NoiseSource& noise) const {
  if (batch.bins != config_.bins)
    throw Error("forward_tf: batch has " + std::to_string(batch.bins) +
                " bins, model expects " + std::to_string(config_.bins));
  if (batch.frames < 1 || batch.batch < 1)
    throw Error("forward_tf: empty batch");
  const Eigen::Index T = batch.frames;
  ForwardOutput out;
  out.batch = batch.batch;
  out.frames = batch.frames;

  const ad::Var features = tape.constant(log_features(batch.rows));
  out.q_w = encode_w(features, T);
  out.w = sample(out.q_w, noise.normal(batch.batch, config_.latent_w));
  out.q_z = encode_z(features, out.w, T);
  out.z = sample(out.q_z, noise.normal(batch.batch * T, config_.latent_z));
  Decoded d = decode(out.z, out.w, features, T);
  out.p_z = d.p_z;
  out.log_v_s = d.log_v_s;
  return out;
}

DiagGaussianParams Dvae::encode_w(const PowerSpectrogram& s) const {
  ad::Tape tape(false);
  const Eigen::Index T = s.values.cols();
  const GaussianVars g =
      encode_w(tape.constant(log_features(s.values.transpose())), T);
  return DiagGaussianParams(g.mean.value().row(0).transpose(),
                            g.log_var.value().row(0).transpose());
}

std::vector<DiagGaussianParams> Dvae::encode_z(const PowerSpectrogram& s,
                                               const Eigen::VectorXd& w) const {
  if (w.size() != config_.latent_w) throw Error("encode_z: w has wrong size");
  ad::Tape tape(false);
  const Eigen::Index T = s.values.cols();
  const GaussianVars g =
      encode_z(tape.constant(log_features(s.values.transpose())),
               tape.constant(w.transpose()), T);
  std::vector<DiagGaussianParams> out;
  out.reserve(T);
  for (Eigen::Index t = 0; t < T; ++t)
    out.emplace_back(g.mean.value().row(t).transpose(),
                     g.log_var.value().row(t).transpose());
  return out;
}

Dvae::Latents Dvae::infer(const PowerSpectrogram& s, NoiseSource& noise) const {
  if (s.values.rows() != config_.bins)
    throw Error("infer: spectrogram has wrong number of bins");
  ad::Tape tape(false);
  const Eigen::Index T = s.values.cols();
  const ad::Var features = tape.constant(log_features(s.values.transpose()));
  const GaussianVars qw = encode_w(features, T);
  const ad::Matrix w = sample_value(qw, noise.normal(1, config_.latent_w));
  const GaussianVars qz = encode_z(features, tape.constant(w), T);
  const ad::Matrix z = sample_value(qz, noise.normal(T, config_.latent_z));
  return {z.transpose(), w.row(0).transpose()};
}

PowerSpectrogram Dvae::decode_teacher_forced(const Latents& latents,
                                             const PowerSpectrogram& s) const {
  const Eigen::Index T = latents.z.cols();
  if (s.values.cols() != T || s.values.rows() != config_.bins)
    throw Error("decode_teacher_forced: shape mismatch");
  ad::Tape tape(false);
  const ad::Var lv = decode_observation(
      tape.constant(latents.z.transpose()),
      tape.constant(latents.w.transpose()),
      tape.constant(log_features(s.values.transpose())), T);
  PowerSpectrogram out;
  out.values = internal::exp_of(lv.value()).transpose();
  return out;
}

PowerSpectrogram Dvae::decode_generated(const Latents& latents) const {
  const Eigen::Index T = latents.z.cols();
  const Eigen::Index F = config_.bins;
  // Rows past the current frame are placeholders; causality keeps them out of
  // every output up to and including frame t.
  ad::Matrix feedback = ad::Matrix::Zero(T, F);
  const ad::Matrix z = latents.z.transpose();
  const ad::Matrix w = latents.w.transpose();
  PowerSpectrogram out;
  out.values.resize(F, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    ad::Tape tape(false);
    const ad::Var lv = decode_observation(
        tape.constant(z), tape.constant(w), tape.constant(feedback), T);
    const ad::Matrix v = internal::exp_of(lv.value().row(t));
    out.values.col(t) = v.transpose();
    feedback.row(t) = log_features(v);
  }
  return out;
}

PowerSpectrogram Dvae::resynthesize(const PowerSpectrogram& s,
                                    FeedbackMode mode,
                                    NoiseSource& noise) const {
  const Latents latents = infer(s, noise);
  return mode == FeedbackMode::kTeacherForcing
             ? decode_teacher_forced(latents, s)
             : decode_generated(latents);
}

PowerSpectrogram Dvae::generate(int frames, NoiseSource& noise,
                                const std::optional<Eigen::VectorXd>& w) const {
  if (frames < 1) throw Error("generate: frames must be >= 1");
  const Eigen::Index T = frames;
  const Eigen::Index F = config_.bins;
  ad::Matrix wv;
  if (w) {
    if (w->size() != config_.latent_w) throw Error("generate: w has wrong size");
    wv = w->transpose();
  } else {
    wv = noise.normal(1, config_.latent_w);
  }
  ad::Matrix z = ad::Matrix::Zero(T, config_.latent_z);
  ad::Matrix feedback = ad::Matrix::Zero(T, F);
  PowerSpectrogram out;
  out.values.resize(F, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    {
      ad::Tape tape(false);
      const GaussianVars p =
          decode_prior(tape.constant(z), tape.constant(wv),
                       tape.constant(feedback), T);
      const ad::Matrix eps = noise.normal(1, config_.latent_z);
      z.row(t) = p.mean.value().row(t).array() +
                 internal::exp_of(0.5 * p.log_var.value().row(t)).array() * eps.array();
    }
    ad::Tape tape(false);
    const ad::Var lv = decode_observation(
        tape.constant(z), tape.constant(wv), tape.constant(feedback), T);
    const ad::Matrix v = internal::exp_of(lv.value().row(t));
    out.values.col(t) = v.transpose();
    feedback.row(t) = log_features(v);
  }
  return out;
}

ParameterCounts Dvae::parameter_counts() const {
  ParameterCounts c;
  c.w_encoder = store_.count("encoder.w.");
  c.z_encoder = store_.count("encoder.z.");
  c.decoders = store_.count("decoder.");
  c.heads = store_.count("head.");
  c.total = store_.count();
  return c;
}

}  // namespace dvae
