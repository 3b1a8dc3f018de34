// lightdvae/model.h

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

// Transformer dynamical VAE with a sequence-level latent w and frame-level
// latents z_t. Generative model:
//   p(w) = N(0, I)
//   p(z_t | z_{1:t-1}, s_{1:t-1}, w)  (prior decoder pass)
//   p(s_t | z_{1:t},   s_{1:t-1}, w) = N_c(0, diag(v_s,t))  (observation pass)
// Inference model:
//   q(w | s_{1:T}) from a GRU's last state, q(z_t | s_{1:T}, w) from a
//   non-causal Transformer encoder.
//
// LigHT runs both decoder passes through one decoder stack; HiT owns one stack
// per pass. The Inv-s ablations swap query and key/value sources in the
// observation pass, and Inv-s-NR also drops its residual connections.
//
// Networks see log-power features; the IS loss sees the raw power.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lightdvae/autodiff.h"
#include "lightdvae/data.h"
#include "lightdvae/distributions.h"
#include "lightdvae/dsp.h"
#include "lightdvae/nn.h"

namespace dvae {

enum class Architecture { kHiT, kLigHT };
enum class Ablation { kNone, kInvS, kInvSNR };

struct ModelConfig {
  int bins = 513;
  int d_model = 256;
  int n_layers = 4;
  int d_ff = 1024;
  int n_heads = 1;
  int latent_z = 16;
  int latent_w = 32;
  int rnn_hidden = 256;
  Architecture architecture = Architecture::kLigHT;
  Ablation ablation = Ablation::kNone;
  // Diagnostic switch; always on for real models.
  bool positional_encoding = true;

  // "LigHT", "HiT", "LigHT-Inv-s", "HiT-Inv-s-NR", ...
  std::string variant() const;
  // Throws dvae::ConfigError for unknown names (case-insensitive).
  void set_variant(const std::string& name);
  LayerConfig layer_config() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Standard-normal draws for the reparameterization trick.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed);

  ad::Matrix normal(Eigen::Index rows, Eigen::Index cols);
  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 rng_;
};

struct GaussianVars {
  ad::Var mean;
  ad::Var log_var;  // clamped
};

// Everything produced by one teacher-forced pass over a batch. Sequence
// quantities use the stacked (B*T) x dim layout.
struct ForwardOutput {
  int batch = 0;
  int frames = 0;
  GaussianVars q_w;  // B x L_w
  ad::Var w;         // B x L_w
  GaussianVars q_z;  // (B*T) x L_z
  ad::Var z;         // (B*T) x L_z
  GaussianVars p_z;  // (B*T) x L_z
  ad::Var log_v_s;   // (B*T) x F, clamped

  // exp(log_v_s), (B*T) x F.
  ad::Matrix v_s() const;
};

// Input embeddings for the latent stream [z; w] and the observation stream,
// followed by the decoder layers. This is the unit shared by LigHT.
class DecoderStack {
 public:
  DecoderStack(ParameterStore& store, const std::string& name,
               const ModelConfig& cfg, Rng& rng);

  ad::Var embed_latent(const ad::Var& latent, Eigen::Index block) const;
  ad::Var embed_observed(const ad::Var& features, Eigen::Index block) const;
  ad::Var run(const ad::Var& stream, const ad::Var& memory,
              const AttentionMask& mask, Eigen::Index block,
              bool residual) const;
  std::size_t num_params() const;

 private:
  bool positional_;
  Linear latent_embed_;
  Linear observed_embed_;
  std::vector<DecoderLayer> layers_;
};

enum class FeedbackMode { kTeacherForcing, kGeneration };

struct ParameterCounts {
  std::size_t w_encoder = 0;
  std::size_t z_encoder = 0;
  std::size_t decoders = 0;
  std::size_t heads = 0;
  std::size_t total = 0;
};

class Dvae {
 public:
  explicit Dvae(const ModelConfig& cfg, std::uint64_t init_seed = 0);
  Dvae(const Dvae&) = delete;
  Dvae& operator=(const Dvae&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const DecoderStack& prior_decoder() const { return *prior_decoder_; }
  const DecoderStack& observation_decoder() const {
    return *observation_decoder_;
  }

  // ---- graph level, stacked layout; `features` are log-power rows ----

  GaussianVars encode_w(const ad::Var& features, Eigen::Index frames) const;
  GaussianVars encode_z(const ad::Var& features, const ad::Var& w,
                        Eigen::Index frames) const;
  // p(z_t | z_{1:t-1}, s_{1:t-1}, w).
  GaussianVars decode_prior(const ad::Var& z, const ad::Var& w,
                            const ad::Var& feedback,
                            Eigen::Index frames) const;
  // Clamped log v_s,t given z_{1:t}, s_{1:t-1}, w.
  ad::Var decode_observation(const ad::Var& z, const ad::Var& w,
                             const ad::Var& feedback,
                             Eigen::Index frames) const;
  // Both passes; the LigHT observation embedding is computed once.
  struct Decoded {
    GaussianVars p_z;
    ad::Var log_v_s;
  };
  Decoded decode(const ad::Var& z, const ad::Var& w, const ad::Var& feedback,
                 Eigen::Index frames) const;

  // encode_w -> sample w -> encode_z -> sample z -> decode with ground-truth
  // feedback. Noise is drawn for w (B x L_w) and then z ((B*T) x L_z).
  ForwardOutput forward_tf(ad::Tape& tape, const Batch& batch,
                           NoiseSource& noise) const;

  // ---- value level, one sequence ----

  DiagGaussianParams encode_w(const PowerSpectrogram& s) const;
  // One posterior per frame.
  std::vector<DiagGaussianParams> encode_z(const PowerSpectrogram& s,
                                           const Eigen::VectorXd& w) const;

  struct Latents {
    Eigen::MatrixXd z;  // L_z x T
    Eigen::VectorXd w;
  };
  // Samples w and z from the inference model.
  Latents infer(const PowerSpectrogram& s, NoiseSource& noise) const;

  // v_s with ground-truth feedback.
  PowerSpectrogram decode_teacher_forced(const Latents& latents,
                                         const PowerSpectrogram& s) const;
  // v_s with the model's own previous outputs as feedback, frame by frame.
  PowerSpectrogram decode_generated(const Latents& latents) const;

  // Latents from the inference model, then TF or GEN decoding.
  PowerSpectrogram resynthesize(const PowerSpectrogram& s, FeedbackMode mode,
                                NoiseSource& noise) const;

  // Ancestral sampling of `frames` frames; w ~ N(0, I) unless given.
  PowerSpectrogram generate(int frames, NoiseSource& noise,
                            const std::optional<Eigen::VectorXd>& w = {}) const;

  std::size_t count_params() const { return store_.count(); }
  ParameterCounts parameter_counts() const;

 private:
  ad::Var positional(const ad::Var& x, Eigen::Index block) const;
  GaussianVars split_gaussian(const ad::Var& head_out, Eigen::Index dim) const;

  ModelConfig config_;
  ParameterStore store_;
  Gru w_rnn_;
  Linear w_head_;
  Linear z_embed_;
  std::vector<EncoderLayer> z_layers_;
  Linear z_head_;
  std::unique_ptr<DecoderStack> shared_or_prior_;
  std::unique_ptr<DecoderStack> observation_only_;
  const DecoderStack* prior_decoder_ = nullptr;
  const DecoderStack* observation_decoder_ = nullptr;
  Linear prior_head_;
  Linear observation_head_;
};

// log(max(power, kPowerFloor)), element-wise.
ad::Matrix log_features(const ad::Matrix& power);

}  // namespace dvae
