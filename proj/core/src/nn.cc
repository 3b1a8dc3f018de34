// nn.cc

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

#include "lightdvae/nn.h"

#include <algorithm>
#include <cmath>

#include "lightdvae/error.h"

namespace dvae {

namespace {

void fill_uniform(ad::Matrix& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

ad::Var skip(const ad::Var& x, const ad::Var& sub_block, bool residual) {
  return residual ? ad::add(x, sub_block) : sub_block;
}

}  // namespace

ad::Parameter& ParameterStore::create(const std::string& name,
                                      Eigen::Index rows, Eigen::Index cols) {
  if (index_.contains(name))
    throw Error("ParameterStore: duplicate parameter '" + name + "'");
  auto p = std::make_unique<ad::Parameter>();
  p->name = name;
  p->value = ad::Matrix::Zero(rows, cols);
  p->grad = ad::Matrix::Zero(rows, cols);
  ad::Parameter* raw = p.get();
  params_.push_back(std::move(p));
  order_.push_back(raw);
  index_.emplace(name, raw);
  return *raw;
}

ad::Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw Error("ParameterStore: no parameter named '" + name + "'");
  return *it->second;
}

const ad::Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw Error("ParameterStore: no parameter named '" + name + "'");
  return *it->second;
}

bool ParameterStore::contains(const std::string& name) const {
  return index_.contains(name);
}

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const auto* p : order_) n += static_cast<std::size_t>(p->size());
  return n;
}

std::size_t ParameterStore::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto* p : order_)
    if (p->name.starts_with(prefix)) n += static_cast<std::size_t>(p->size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto* p : order_) p->zero_grad();
}

void LayerConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || d_ff < 1)
    throw Error("LayerConfig: widths must be >= 1");
  if (d_model % n_heads != 0)
    throw Error("LayerConfig: d_model (" + std::to_string(d_model) +
                ") is not divisible by n_heads (" + std::to_string(n_heads) +
                ")");
}

ad::Matrix positional_encoding(int frames, int d) {
  if (d % 2 != 0)
    throw Error("positional_encoding: width must be even, got " +
                std::to_string(d));
  ad::Matrix pe(frames, d);
  for (int pos = 0; pos < frames; ++pos) {
    for (int i = 0; i < d / 2; ++i) {
      const double angle =
          pos / std::pow(10000.0, 2.0 * i / static_cast<double>(d));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out,
               Rng& rng, bool bias)
    : weight_(&store.create(name + ".weight", in, out)),
      bias_(bias ? &store.create(name + ".bias", 1, out) : nullptr) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill_uniform(weight_->value, bound, rng);
  if (bias_) fill_uniform(bias_->value, bound, rng);
}

ad::Var Linear::operator()(const ad::Var& x) const {
  ad::Tape& t = x.tape();
  const ad::Var y = ad::matmul(x, t.param(*weight_));
  return bias_ ? ad::add_row(y, t.param(*bias_)) : y;
}

std::size_t Linear::num_params() const {
  return static_cast<std::size_t>(weight_->size() + (bias_ ? bias_->size() : 0));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim)
    : gain_(&store.create(name + ".gain", 1, dim)),
      bias_(&store.create(name + ".bias", 1, dim)) {
  gain_->value.setOnes();
}

ad::Var LayerNorm::operator()(const ad::Var& x) const {
  ad::Tape& t = x.tape();
  return ad::layer_norm(x, t.param(*gain_), t.param(*bias_));
}

std::size_t LayerNorm::num_params() const {
  return static_cast<std::size_t>(gain_->size() + bias_->size());
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name,
                         const LayerConfig& cfg, Rng& rng)
    : in_(store, name + ".in", cfg.d_model, cfg.d_ff, rng),
      out_(store, name + ".out", cfg.d_ff, cfg.d_model, rng) {}

ad::Var FeedForward::operator()(const ad::Var& x) const {
  return out_(ad::relu(in_(x)));
}

std::size_t FeedForward::num_params() const {
  return in_.num_params() + out_.num_params();
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store,
                                       const std::string& name,
                                       const LayerConfig& cfg, Rng& rng)
    : heads_(cfg.n_heads),
      q_(store, name + ".query", cfg.d_model, cfg.d_model, rng),
      k_(store, name + ".key", cfg.d_model, cfg.d_model, rng, false),
      v_(store, name + ".value", cfg.d_model, cfg.d_model, rng),
      o_(store, name + ".output", cfg.d_model, cfg.d_model, rng) {
  cfg.validate();
}

ad::Var MultiHeadAttention::operator()(const ad::Var& query,
                                       const ad::Var& key_value,
                                       const AttentionMask& mask,
                                       Eigen::Index block) const {
  if (query.cols() != key_value.cols() || query.rows() != key_value.rows())
    throw Error("multi_head_attention: query and key/value shapes differ");
  const ad::Var q = q_(query);
  const ad::Var k = k_(key_value);
  const ad::Var v = v_(key_value);
  if (heads_ == 1) return o_(ad::scaled_dot_attention(q, k, v, mask, block));

  const Eigen::Index width = q.cols() / heads_;
  ad::Var merged;
  for (int h = 0; h < heads_; ++h) {
    const ad::Var head = ad::scaled_dot_attention(
        ad::slice_cols(q, h * width, width), ad::slice_cols(k, h * width, width),
        ad::slice_cols(v, h * width, width), mask, block);
    merged = h == 0 ? head : ad::hcat(merged, head);
  }
  return o_(merged);
}

std::size_t MultiHeadAttention::num_params() const {
  return q_.num_params() + k_.num_params() + v_.num_params() + o_.num_params();
}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name,
                           const LayerConfig& cfg, Rng& rng)
    : attention_(store, name + ".attention", cfg, rng),
      norm1_(store, name + ".norm1", cfg.d_model),
      ff_(store, name + ".ff", cfg, rng),
      norm2_(store, name + ".norm2", cfg.d_model) {}

ad::Var EncoderLayer::operator()(const ad::Var& x, const AttentionMask& mask,
                                 Eigen::Index block) const {
  const ad::Var h = norm1_(ad::add(x, attention_(x, x, mask, block)));
  return norm2_(ad::add(h, ff_(h)));
}

std::size_t EncoderLayer::num_params() const {
  return attention_.num_params() + norm1_.num_params() + ff_.num_params() +
         norm2_.num_params();
}

DecoderLayer::DecoderLayer(ParameterStore& store, const std::string& name,
                           const LayerConfig& cfg, Rng& rng)
    : self_attention_(store, name + ".self_attention", cfg, rng),
      norm1_(store, name + ".norm1", cfg.d_model),
      cross_attention_(store, name + ".cross_attention", cfg, rng),
      norm2_(store, name + ".norm2", cfg.d_model),
      ff_(store, name + ".ff", cfg, rng),
      norm3_(store, name + ".norm3", cfg.d_model) {}

ad::Var DecoderLayer::operator()(const ad::Var& x, const ad::Var& memory,
                                 const AttentionMask& self_mask,
                                 const AttentionMask& cross_mask,
                                 Eigen::Index block, bool residual) const {
  const ad::Var h1 =
      norm1_(skip(x, self_attention_(x, x, self_mask, block), residual));
  const ad::Var h2 = norm2_(
      skip(h1, cross_attention_(h1, memory, cross_mask, block), residual));
  return norm3_(skip(h2, ff_(h2), residual));
}

std::size_t DecoderLayer::num_params() const {
  return self_attention_.num_params() + norm1_.num_params() +
         cross_attention_.num_params() + norm2_.num_params() +
         ff_.num_params() + norm3_.num_params();
}

Gru::Gru(ParameterStore& store, const std::string& name, int input, int hidden,
         Rng& rng)
    : hidden_(hidden),
      w_input_(&store.create(name + ".weight_input", input, 3 * hidden)),
      w_hidden_(&store.create(name + ".weight_hidden", hidden, 3 * hidden)),
      b_input_(&store.create(name + ".bias_input", 1, 3 * hidden)),
      b_hidden_(&store.create(name + ".bias_hidden", 1, 3 * hidden)) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(w_input_->value, bound, rng);
  fill_uniform(w_hidden_->value, bound, rng);
  fill_uniform(b_input_->value, bound, rng);
  fill_uniform(b_hidden_->value, bound, rng);
}

ad::Var Gru::final_state(const ad::Var& x, Eigen::Index block) const {
  ad::Tape& t = x.tape();
  if (block < 1 || x.rows() % block != 0)
    throw Error("Gru: rows are not a multiple of the block length");
  const Eigen::Index batch = x.rows() / block;
  const Eigen::Index hdim = hidden_;
  const ad::Var w_hidden = t.param(*w_hidden_);
  const ad::Var b_hidden = t.param(*b_hidden_);
  const ad::Var projected =
      ad::add_row(ad::matmul(x, t.param(*w_input_)), t.param(*b_input_));

  ad::Var h = t.constant(ad::Matrix::Zero(batch, hdim));
  for (Eigen::Index step = 0; step < block; ++step) {
    const ad::Var xs = ad::gather_rows(projected, block, step);
    const ad::Var hs = ad::add_row(ad::matmul(h, w_hidden), b_hidden);
    const ad::Var r = ad::sigmoid(
        ad::add(ad::slice_cols(xs, 0, hdim), ad::slice_cols(hs, 0, hdim)));
    const ad::Var z = ad::sigmoid(ad::add(ad::slice_cols(xs, hdim, hdim),
                                          ad::slice_cols(hs, hdim, hdim)));
    const ad::Var n = ad::tanh(ad::add(ad::slice_cols(xs, 2 * hdim, hdim),
                                       ad::mul(r, ad::slice_cols(hs, 2 * hdim, hdim))));
    h = ad::add(ad::mul(ad::affine(z, -1.0, 1.0), n), ad::mul(z, h));
  }
  return h;
}

std::size_t Gru::num_params() const {
  return static_cast<std::size_t>(w_input_->size() + w_hidden_->size() +
                                  b_input_->size() + b_hidden_->size());
}

namespace {

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

// (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h; truncation error O(h^4).
template <typename F>
double five_point(F&& f, double x, double h) {
  const double a = f(x + 2.0 * h), b = f(x + h), c = f(x - h), d = f(x - 2.0 * h);
  return (-a + 8.0 * b - 8.0 * c + d) / (12.0 * h);
}

// Relative error over the step ladder h, h/10, h/100, keeping the smallest.
// A wrong derivative disagrees at every step; a ReLU kink inside a wider
// stencil, or round-off at a narrower one, only at some.
template <typename F>
double checked_error(F&& f, double x, double h, double analytic) {
  double best = relative_error(analytic, five_point(f, x, h));
  for (int k = 1; k < 3 && best >= 1e-6; ++k) {
    h *= 0.1;
    best = std::min(best, relative_error(analytic, five_point(f, x, h)));
  }
  return best;
}

}  // namespace

double grad_check(const ScalarFn& f, std::vector<ad::Matrix> inputs,
                  double eps) {
  auto evaluate = [&](bool with_grad, std::vector<ad::Matrix>* grads) {
    ad::Tape tape(with_grad);
    std::vector<ad::Var> vars;
    vars.reserve(inputs.size());
    for (const auto& m : inputs) vars.push_back(tape.leaf(m));
    const ad::Var out = f(tape, vars);
    if (with_grad) {
      tape.backward(out);
      for (const auto& v : vars) grads->push_back(tape.grad(v));
    }
    return out.value()(0, 0);
  };

  std::vector<ad::Matrix> analytic;
  evaluate(true, &analytic);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      double& x = inputs[k].data()[i];
      const double saved = x;
      const double err = checked_error(
          [&](double at) {
            x = at;
            return evaluate(false, nullptr);
          },
          saved, eps, analytic[k].data()[i]);
      x = saved;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double grad_check(const ParamScalarFn& f, std::span<ad::Parameter* const> params,
                  double eps) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(f(tape));
  }
  std::vector<ad::Matrix> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto evaluate = [&] {
    ad::Tape tape(false);
    return f(tape).value()(0, 0);
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Matrix& value = params[k]->value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      const double err = checked_error(
          [&](double at) {
            value.data()[i] = at;
            return evaluate();
          },
          saved, eps, analytic[k].data()[i]);
      value.data()[i] = saved;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dvae
