// lightdvae/autodiff.h

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

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Values live on the tape
// and are addressed through lightweight Var handles, so a Var must not outlive
// its Tape. Sequence batches use a stacked layout: B sequences of T frames are
// a (B*T) x d matrix whose rows [b*T, (b+1)*T) belong to sequence b. Ops that
// care about sequence boundaries take that block length explicitly.

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace dvae {
class AttentionMask;
}

namespace dvae::ad {

using Matrix = Eigen::MatrixXd;

// A trainable tensor. `grad` accumulates across backward passes until it is
// explicitly zeroed.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  int index_ = -1;
};

class Tape {
 public:
  // Receives the gradient flowing into the node; must accumulate into inputs.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  // With record_gradients == false no backward closures are kept and
  // backward() is unavailable. Used for inference.
  explicit Tape(bool record_gradients = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // A free input that receives a gradient (read it back with grad()).
  Var leaf(Matrix value);
  // Binds a parameter; binding it again returns the same node. backward()
  // adds the node gradient into Parameter::grad.
  Var param(Parameter& p);

  const Matrix& value(const Var& v) const { return nodes_[v.index()].value; }
  // Zero-filled when no gradient reached the node.
  Matrix grad(const Var& v) const;
  bool requires_grad(const Var& v) const {
    return nodes_[v.index()].requires_grad;
  }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Appends a node computed from `inputs`.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.index()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  // Seeds d(root)/d(root) = 1 and propagates. `root` must be 1 x 1.
  void backward(const Var& root);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_;
  bool recording_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// Products.
Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);

// Element-wise arithmetic; shapes must match.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// s * a + c
Var affine(const Var& a, double s, double c);
// x + c for a constant matrix c.
Var add_constant(const Var& x, const Matrix& c);
// x + row broadcast over every row of x; `row` is 1 x cols.
Var add_row(const Var& x, const Var& row);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var exp(const Var& x);
// Natural log; x must be positive.
Var log(const Var& x);
// Gradient passes only where lo < x < hi.
Var clamp(const Var& x, double lo, double hi);

// Shape manipulation.
Var hcat(const Var& a, const Var& b);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
// Row `offset` of every block of `block` rows: (B*block) x d -> B x d.
Var gather_rows(const Var& x, Eigen::Index block, Eigen::Index offset);
// Within each block, row t takes row t-1 and row 0 becomes zero.
Var shift_rows(const Var& x, Eigen::Index block);
// Each row of x repeated `times` times consecutively: B x d -> (B*times) x d.
Var repeat_rows(const Var& x, Eigen::Index times);

// Sum of all entries, 1 x 1.
Var sum(const Var& x);

// Row-wise normalization followed by a per-column affine map.
Var layer_norm(const Var& x, const Var& gain, const Var& bias,
               double eps = 1e-8);

// softmax(q k^T / sqrt(d) restricted to mask) v, applied independently to
// each block of `block` rows. The mask is block x block.
Var scaled_dot_attention(const Var& q, const Var& k, const Var& v,
                         const AttentionMask& mask, Eigen::Index block);

// sum over entries of d_IS(x, exp(log_var)); x is a constant.
Var itakura_saito_sum(const Matrix& x, const Var& log_var);
// sum over entries of KL(N(mq, e^lq) || N(mp, e^lp)).
Var kl_gaussian_sum(const Var& mean_q, const Var& log_var_q,
                    const Var& mean_p, const Var& log_var_p);
// sum over entries of KL(N(mq, e^lq) || N(0, 1)).
Var kl_standard_sum(const Var& mean_q, const Var& log_var_q);

}  // namespace dvae::ad
