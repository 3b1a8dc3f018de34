// autodiff.cc

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

#include "lightdvae/autodiff.h"

#include <cmath>
#include <string>

#include "lightdvae/attention_mask.h"
#include "lightdvae/distributions.h"
#include "lightdvae/error.h"
#include "scalar_math.h"

namespace dvae {

AttentionMask::AttentionMask(BoolMatrix allowed) : allowed_(std::move(allowed)) {
  if (allowed_.rows() != allowed_.cols())
    throw Error("AttentionMask: mask must be square");
  for (Eigen::Index t = 0; t < allowed_.rows(); ++t)
    if (!allowed_.row(t).any())
      throw Error("AttentionMask: row " + std::to_string(t) +
                  " has no allowed key");
}

AttentionMask AttentionMask::full(int frames) {
  return AttentionMask(BoolMatrix::Constant(frames, frames, true));
}

AttentionMask AttentionMask::causal(int frames) {
  BoolMatrix m(frames, frames);
  for (int t = 0; t < frames; ++t)
    for (int tau = 0; tau < frames; ++tau) m(t, tau) = tau <= t;
  return AttentionMask(std::move(m));
}

AttentionMask build_causal_mask(int frames, bool inclusive) {
  if (frames < 1) throw Error("build_causal_mask: frames must be >= 1");
  if (!inclusive)
    throw Error(
        "build_causal_mask: an exclusive mask has an empty first row; shift "
        "the attended sequence right and use the inclusive mask");
  return AttentionMask::causal(frames);
}

}  // namespace dvae

namespace dvae::ad {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch (" +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
}

Tape& tape_of(const Var& a) { return a.tape(); }

}  // namespace

Tape::Tape(bool record_gradients) : recording_(record_gradients) {
  nodes_.reserve(1024);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, recording_});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, &p, recording_});
  const int id = static_cast<int>(nodes_.size()) - 1;
  bound_.emplace(&p, id);
  return Var(this, id);
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.index()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn fn) {
  bool needs = false;
  if (recording_)
    for (const Var& in : inputs) needs = needs || nodes_[in.index()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{},
                        nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& root) {
  if (!recording_) throw Error("Tape::backward: tape does not record gradients");
  if (root.rows() != 1 || root.cols() != 1)
    throw Error("Tape::backward: root must be a scalar");
  if (!nodes_[root.index()].requires_grad) return;
  nodes_[root.index()].grad = Matrix::Ones(1, 1);
  for (int i = root.index(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0)
        n.param->grad = n.grad;
      else
        n.param->grad += n.grad;
    }
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw Error("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + ")");
  Matrix out = a.value() * b.value();
  return tape_of(a).record(std::move(out), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             if (t.requires_grad(a))
                               t.accumulate(a, g * t.value(b).transpose());
                             if (t.requires_grad(b))
                               t.accumulate(b, t.value(a).transpose() * g);
                           });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols())
    throw Error("matmul_nt: column counts differ");
  Matrix out = a.value() * b.value().transpose();
  return tape_of(a).record(std::move(out), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             if (t.requires_grad(a))
                               t.accumulate(a, g * t.value(b));
                             if (t.requires_grad(b))
                               t.accumulate(b, g.transpose() * t.value(a));
                           });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return tape_of(a).record(a.value() + b.value(), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             t.accumulate(a, g);
                             t.accumulate(b, g);
                           });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return tape_of(a).record(a.value() - b.value(), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             t.accumulate(a, g);
                             t.accumulate(b, -g);
                           });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return tape_of(a).record(
      a.value().cwiseProduct(b.value()), {a, b},
      [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
        if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
      });
}

Var scale(const Var& a, double s) {
  return tape_of(a).record(a.value() * s, {a},
                           [a, s](Tape& t, const Matrix& g) {
                             t.accumulate(a, g * s);
                           });
}

Var affine(const Var& a, double s, double c) {
  Matrix out = (a.value().array() * s + c).matrix();
  return tape_of(a).record(std::move(out), {a},
                           [a, s](Tape& t, const Matrix& g) {
                             t.accumulate(a, g * s);
                           });
}

Var add_constant(const Var& x, const Matrix& c) {
  if (x.rows() != c.rows() || x.cols() != c.cols())
    throw Error("add_constant: shape mismatch");
  return tape_of(x).record(x.value() + c, {x},
                           [x](Tape& t, const Matrix& g) { t.accumulate(x, g); });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    throw Error("add_row: row must be 1 x " + std::to_string(x.cols()));
  Matrix out = x.value().rowwise() + row.value().row(0);
  return tape_of(x).record(std::move(out), {x, row},
                           [x, row](Tape& t, const Matrix& g) {
                             t.accumulate(x, g);
                             if (t.requires_grad(row))
                               t.accumulate(row, g.colwise().sum());
                           });
}

Var relu(const Var& x) {
  Matrix out = x.value().cwiseMax(0.0);
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, (t.value(x).array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(const Var& x) {
  Matrix out = internal::sigmoid_of(x.value());
  return tape_of(x).record(out, {x}, [x, out](Tape& t, const Matrix& g) {
    const auto s = out.array();
    t.accumulate(x, (g.array() * s * (1.0 - s)).matrix());
  });
}

Var tanh(const Var& x) {
  Matrix out = internal::tanh_of(x.value());
  return tape_of(x).record(out, {x}, [x, out](Tape& t, const Matrix& g) {
    const auto th = out.array();
    t.accumulate(x, (g.array() * (1.0 - th * th)).matrix());
  });
}

Var exp(const Var& x) {
  Matrix out = internal::exp_of(x.value());
  return tape_of(x).record(out, {x}, [x, out](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(out));
  });
}

Var log(const Var& x) {
  if ((x.value().array() <= 0.0).any()) throw Error("log: non-positive input");
  Matrix out = internal::log_of(x.value());
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseQuotient(t.value(x)));
  });
}

Var clamp(const Var& x, double lo, double hi) {
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
  return tape_of(x).record(
      std::move(out), {x}, [x, lo, hi](Tape& t, const Matrix& g) {
        const auto v = t.value(x).array();
        t.accumulate(x, ((v > lo) && (v < hi)).select(g, 0.0));
      });
}

Var hcat(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw Error("hcat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return tape_of(a).record(std::move(out), {a, b},
                           [a, b, ca, cb](Tape& t, const Matrix& g) {
                             t.accumulate(a, g.leftCols(ca));
                             t.accumulate(b, g.rightCols(cb));
                           });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols())
    throw Error("slice_cols: range out of bounds");
  Matrix out = x.value().middleCols(start, count);
  return tape_of(x).record(
      std::move(out), {x}, [x, start, count](Tape& t, const Matrix& g) {
        Matrix full = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
        full.middleCols(start, count) = g;
        t.accumulate(x, full);
      });
}

Var gather_rows(const Var& x, Eigen::Index block, Eigen::Index offset) {
  if (block < 1 || x.rows() % block != 0 || offset < 0 || offset >= block)
    throw Error("gather_rows: bad block layout");
  const Eigen::Index batch = x.rows() / block;
  Matrix out(batch, x.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    out.row(b) = x.value().row(b * block + offset);
  return tape_of(x).record(
      std::move(out), {x}, [x, block, offset, batch](Tape& t, const Matrix& g) {
        Matrix full = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
        for (Eigen::Index b = 0; b < batch; ++b)
          full.row(b * block + offset) = g.row(b);
        t.accumulate(x, full);
      });
}

Var shift_rows(const Var& x, Eigen::Index block) {
  if (block < 1 || x.rows() % block != 0)
    throw Error("shift_rows: bad block layout");
  const Eigen::Index batch = x.rows() / block;
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    out.middleRows(b * block + 1, block - 1) =
        x.value().middleRows(b * block, block - 1);
  return tape_of(x).record(
      std::move(out), {x}, [x, block, batch](Tape& t, const Matrix& g) {
        Matrix full = Matrix::Zero(g.rows(), g.cols());
        for (Eigen::Index b = 0; b < batch; ++b)
          full.middleRows(b * block, block - 1) =
              g.middleRows(b * block + 1, block - 1);
        t.accumulate(x, full);
      });
}

Var repeat_rows(const Var& x, Eigen::Index times) {
  if (times < 1) throw Error("repeat_rows: times must be >= 1");
  const Eigen::Index batch = x.rows();
  Matrix out(batch * times, x.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    out.middleRows(b * times, times) =
        x.value().row(b).replicate(times, 1);
  return tape_of(x).record(
      std::move(out), {x}, [x, times, batch](Tape& t, const Matrix& g) {
        Matrix acc(batch, g.cols());
        for (Eigen::Index b = 0; b < batch; ++b)
          acc.row(b) = g.middleRows(b * times, times).colwise().sum();
        t.accumulate(x, acc);
      });
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(),
                                     g(0, 0)));
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 ||
      bias.cols() != d)
    throw Error("layer_norm: gain and bias must be 1 x " + std::to_string(d));
  const Matrix& xv = x.value();
  Eigen::VectorXd inv_std(xv.rows());
  Matrix xhat(xv.rows(), d);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mean = xv.row(i).mean();
    const auto centered = xv.row(i).array() - mean;
    const double var = centered.square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std[i];
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array())
                   .rowwise() +
               bias.value().row(0).array();
  return tape_of(x).record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Matrix& g) {
        if (t.requires_grad(gain))
          t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
        if (!t.requires_grad(x)) return;
        const Eigen::Index dim = xhat.cols();
        const Matrix dxhat =
            (g.array().rowwise() * t.value(gain).row(0).array()).matrix();
        Matrix dx(xhat.rows(), dim);
        for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
          const double m1 = dxhat.row(i).mean();
          const double m2 = dxhat.row(i).dot(xhat.row(i)) / dim;
          dx.row(i) = inv_std[i] *
                      (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
        }
        t.accumulate(x, dx);
      });
}

Var scaled_dot_attention(const Var& q, const Var& k, const Var& v,
                         const AttentionMask& mask, Eigen::Index block) {
  if (q.cols() != k.cols()) throw Error("attention: query/key widths differ");
  if (q.rows() != k.rows() || k.rows() != v.rows())
    throw Error("attention: query, key and value row counts differ");
  if (block < 1 || q.rows() % block != 0)
    throw Error("attention: rows are not a multiple of the block length");
  if (mask.frames() != block)
    throw Error("attention: mask covers " + std::to_string(mask.frames()) +
                " frames, block has " + std::to_string(block));
  const Eigen::Index batch = q.rows() / block;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const auto& allowed = mask.matrix();

  std::vector<Matrix> probs(batch);
  Matrix out(q.rows(), v.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto qb = q.value().middleRows(b * block, block);
    const auto kb = k.value().middleRows(b * block, block);
    Matrix p = (qb * kb.transpose()) * inv_sqrt_d;
    for (Eigen::Index i = 0; i < block; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < block; ++j)
        if (allowed(i, j)) m = std::max(m, p(i, j));
      if (!std::isfinite(m)) throw Error("attention: empty or non-finite row");
      double z = 0.0;
      for (Eigen::Index j = 0; j < block; ++j) {
        const double e = allowed(i, j) ? std::exp(p(i, j) - m) : 0.0;
        p(i, j) = e;
        z += e;
      }
      p.row(i) /= z;
    }
    out.middleRows(b * block, block) = p * v.value().middleRows(b * block, block);
    probs[b] = std::move(p);
  }
  return tape_of(q).record(
      std::move(out), {q, k, v},
      [q, k, v, block, batch, inv_sqrt_d, probs = std::move(probs)](
          Tape& t, const Matrix& g) {
        Matrix dq(t.value(q).rows(), t.value(q).cols());
        Matrix dk(t.value(k).rows(), t.value(k).cols());
        Matrix dv(t.value(v).rows(), t.value(v).cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
          const Matrix& p = probs[b];
          const auto gb = g.middleRows(b * block, block);
          const auto qb = t.value(q).middleRows(b * block, block);
          const auto kb = t.value(k).middleRows(b * block, block);
          const auto vb = t.value(v).middleRows(b * block, block);
          dv.middleRows(b * block, block).noalias() = p.transpose() * gb;
          const Matrix dp = gb * vb.transpose();
          const Eigen::VectorXd row_dot =
              (dp.array() * p.array()).rowwise().sum();
          const Matrix ds =
              (p.array() * (dp.colwise() - row_dot).array()).matrix() *
              inv_sqrt_d;
          dq.middleRows(b * block, block).noalias() = ds * kb;
          dk.middleRows(b * block, block).noalias() = ds.transpose() * qb;
        }
        t.accumulate(q, dq);
        t.accumulate(k, dk);
        t.accumulate(v, dv);
      });
}

Var itakura_saito_sum(const Matrix& x, const Var& log_var) {
  if (x.rows() != log_var.rows() || x.cols() != log_var.cols())
    throw Error("itakura_saito_sum: shape mismatch");
  const Matrix var = internal::exp_of(log_var.value());
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      total += kernel::is_term(x(i, j), var(i, j));
  Matrix out(1, 1);
  out(0, 0) = total;
  return tape_of(log_var).record(
      std::move(out), {log_var}, [log_var, x, var](Tape& t, const Matrix& g) {
        // d/d(log v) = v * d/dv
        Matrix d(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          for (Eigen::Index i = 0; i < x.rows(); ++i)
            d(i, j) = g(0, 0) * kernel::is_term_dv(x(i, j), var(i, j)) *
                      var(i, j);
        t.accumulate(log_var, d);
      });
}

Var kl_gaussian_sum(const Var& mean_q, const Var& log_var_q, const Var& mean_p,
                    const Var& log_var_p) {
  require_same_shape(mean_q, log_var_q, "kl_gaussian_sum");
  require_same_shape(mean_q, mean_p, "kl_gaussian_sum");
  require_same_shape(mean_q, log_var_p, "kl_gaussian_sum");
  const Matrix& mq = mean_q.value();
  const Matrix& lq = log_var_q.value();
  const Matrix& mp = mean_p.value();
  const Matrix& lp = log_var_p.value();
  double total = 0.0;
  for (Eigen::Index j = 0; j < mq.cols(); ++j)
    for (Eigen::Index i = 0; i < mq.rows(); ++i)
      total += kernel::kl_term(mq(i, j), lq(i, j), mp(i, j), lp(i, j));
  Matrix out(1, 1);
  out(0, 0) = total;
  return tape_of(mean_q).record(
      std::move(out), {mean_q, log_var_q, mean_p, log_var_p},
      [mean_q, log_var_q, mean_p, log_var_p](Tape& t, const Matrix& g) {
        const Matrix& mq = t.value(mean_q);
        const Matrix& lq = t.value(log_var_q);
        const Matrix& mp = t.value(mean_p);
        const Matrix& lp = t.value(log_var_p);
        Matrix dmq(mq.rows(), mq.cols()), dlq(mq.rows(), mq.cols()),
            dmp(mq.rows(), mq.cols()), dlp(mq.rows(), mq.cols());
        for (Eigen::Index j = 0; j < mq.cols(); ++j) {
          for (Eigen::Index i = 0; i < mq.rows(); ++i) {
            const auto d =
                kernel::kl_term_grad(mq(i, j), lq(i, j), mp(i, j), lp(i, j));
            dmq(i, j) = g(0, 0) * d.mq;
            dlq(i, j) = g(0, 0) * d.lq;
            dmp(i, j) = g(0, 0) * d.mp;
            dlp(i, j) = g(0, 0) * d.lp;
          }
        }
        t.accumulate(mean_q, dmq);
        t.accumulate(log_var_q, dlq);
        t.accumulate(mean_p, dmp);
        t.accumulate(log_var_p, dlp);
      });
}

Var kl_standard_sum(const Var& mean_q, const Var& log_var_q) {
  require_same_shape(mean_q, log_var_q, "kl_standard_sum");
  const Matrix& mq = mean_q.value();
  const Matrix& lq = log_var_q.value();
  double total = 0.0;
  for (Eigen::Index j = 0; j < mq.cols(); ++j)
    for (Eigen::Index i = 0; i < mq.rows(); ++i)
      total += kernel::kl_term(mq(i, j), lq(i, j), 0.0, 0.0);
  Matrix out(1, 1);
  out(0, 0) = total;
  return tape_of(mean_q).record(
      std::move(out), {mean_q, log_var_q},
      [mean_q, log_var_q](Tape& t, const Matrix& g) {
        const Matrix& mq = t.value(mean_q);
        const Matrix& lq = t.value(log_var_q);
        Matrix dmq(mq.rows(), mq.cols()), dlq(mq.rows(), mq.cols());
        for (Eigen::Index j = 0; j < mq.cols(); ++j) {
          for (Eigen::Index i = 0; i < mq.rows(); ++i) {
            const auto d = kernel::kl_term_grad(mq(i, j), lq(i, j), 0.0, 0.0);
            dmq(i, j) = g(0, 0) * d.mq;
            dlq(i, j) = g(0, 0) * d.lq;
          }
        }
        t.accumulate(mean_q, dmq);
        t.accumulate(log_var_q, dlq);
      });
}

}  // namespace dvae::ad
