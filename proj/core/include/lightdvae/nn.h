// lightdvae/nn.h

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

// Transformer building blocks on top of the autodiff tape.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lightdvae/attention_mask.h"
#include "lightdvae/autodiff.h"

namespace dvae {

using Rng = std::mt19937_64;

// Owns named parameters in creation order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  // Zero-initialized; throws dvae::Error if the name exists.
  ad::Parameter& create(const std::string& name, Eigen::Index rows,
                        Eigen::Index cols);
  ad::Parameter& get(const std::string& name);
  const ad::Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<ad::Parameter*>& all() const { return order_; }
  // Total scalar count. Each tensor is stored once, so shared tensors are
  // counted once.
  std::size_t count() const;
  // Scalar count of tensors whose name starts with `prefix`.
  std::size_t count(const std::string& prefix) const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<ad::Parameter>> params_;
  std::vector<ad::Parameter*> order_;
  std::map<std::string, ad::Parameter*, std::less<>> index_;
};

struct LayerConfig {
  int d_model = 256;
  int n_heads = 1;
  int d_ff = 1024;
  bool residual_enabled = true;

  void validate() const;
};

// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
// Throws dvae::Error for odd d.
ad::Matrix positional_encoding(int frames, int d);

// y = x W + b, W and b uniform in [-1/sqrt(in), 1/sqrt(in)]. Without a bias,
// y = x W.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out,
         Rng& rng, bool bias = true);

  ad::Var operator()(const ad::Var& x) const;
  std::size_t num_params() const;
  ad::Parameter& weight() const { return *weight_; }
  bool has_bias() const { return bias_ != nullptr; }
  ad::Parameter& bias() const { return *bias_; }

 private:
  ad::Parameter* weight_ = nullptr;
  ad::Parameter* bias_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim);

  ad::Var operator()(const ad::Var& x) const;
  std::size_t num_params() const;

 private:
  ad::Parameter* gain_ = nullptr;
  ad::Parameter* bias_ = nullptr;
};

// Linear(d_model -> d_ff), ReLU, Linear(d_ff -> d_model).
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name,
              const LayerConfig& cfg, Rng& rng);

  ad::Var operator()(const ad::Var& x) const;
  std::size_t num_params() const;

 private:
  Linear in_;
  Linear out_;
};

// Scaled dot-product attention with query/key/value/output projections. The
// key projection has no bias: a per-row constant shift of the scores leaves
// the softmax unchanged, so such a bias would never receive gradient.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name,
                     const LayerConfig& cfg, Rng& rng);

  // Queries from `query`, keys and values from `key_value`; both are
  // (B*block) x d_model.
  ad::Var operator()(const ad::Var& query, const ad::Var& key_value,
                     const AttentionMask& mask, Eigen::Index block) const;
  std::size_t num_params() const;

  Linear& query_proj() { return q_; }
  Linear& key_proj() { return k_; }
  Linear& value_proj() { return v_; }
  Linear& output_proj() { return o_; }

 private:
  int heads_ = 1;
  Linear q_, k_, v_, o_;
};

// x -> NL(x + MHA(x, x, x)) -> NL(. + FF(.)).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterStore& store, const std::string& name,
               const LayerConfig& cfg, Rng& rng);

  ad::Var operator()(const ad::Var& x, const AttentionMask& mask,
                     Eigen::Index block) const;
  std::size_t num_params() const;

 private:
  MultiHeadAttention attention_;
  LayerNorm norm1_;
  FeedForward ff_;
  LayerNorm norm2_;
};

// Self-attention over the decoder stream, cross-attention with queries from
// the stream and keys/values from `memory`, then feed-forward; each sub-block
// is followed by NL, with a skip connection only when `residual` is set.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(ParameterStore& store, const std::string& name,
               const LayerConfig& cfg, Rng& rng);

  ad::Var operator()(const ad::Var& x, const ad::Var& memory,
                     const AttentionMask& self_mask,
                     const AttentionMask& cross_mask, Eigen::Index block,
                     bool residual) const;
  std::size_t num_params() const;

 private:
  MultiHeadAttention self_attention_;
  LayerNorm norm1_;
  MultiHeadAttention cross_attention_;
  LayerNorm norm2_;
  FeedForward ff_;
  LayerNorm norm3_;
};

// Single-layer unidirectional GRU (gate order r, z, n).
class Gru {
 public:
  Gru() = default;
  Gru(ParameterStore& store, const std::string& name, int input, int hidden,
      Rng& rng);

  // Hidden state after the last frame of each block: (B*block) x in -> B x H.
  ad::Var final_state(const ad::Var& x, Eigen::Index block) const;
  std::size_t num_params() const;
  int hidden() const { return hidden_; }

 private:
  int hidden_ = 0;
  ad::Parameter* w_input_ = nullptr;
  ad::Parameter* w_hidden_ = nullptr;
  ad::Parameter* b_input_ = nullptr;
  ad::Parameter* b_hidden_ = nullptr;
};

// Functions checked by grad_check build a scalar from tape inputs.
using ScalarFn =
    std::function<ad::Var(ad::Tape&, std::span<const ad::Var> inputs)>;
using ParamScalarFn = std::function<ad::Var(ad::Tape&)>;

// Denominator floor of the relative error. Below it the comparison is
// effectively absolute; finite-difference round-off on exactly-zero gradients
// (dead ReLU units) is around 1e-10.
inline constexpr double kGradCheckFloor = 1e-6;

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|,
// kGradCheckFloor), where numeric is the five-point central difference at
// step `eps`, `eps / 10` or `eps / 100`, whichever agrees best (narrower
// steps avoid ReLU kinks that fall inside a wider stencil).
double grad_check(const ScalarFn& f, std::vector<ad::Matrix> inputs,
                  double eps = 1e-4);

// Same, over every scalar of `params` (their values are restored).
double grad_check(const ParamScalarFn& f, std::span<ad::Parameter* const> params,
                  double eps = 1e-4);

}  // namespace dvae
