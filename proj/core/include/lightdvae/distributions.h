// lightdvae/distributions.h

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

#include <cmath>

#include <Eigen/Dense>

namespace dvae {

// Network heads emit log-variances; they are clamped to this range before
// exponentiation.
inline constexpr double kLogVarMin = -15.0;
inline constexpr double kLogVarMax = 15.0;

inline double clamp_log_var(double lv) {
  return lv < kLogVarMin ? kLogVarMin : (lv > kLogVarMax ? kLogVarMax : lv);
}

// Diagonal Gaussian N(mean, diag(exp(log_var))).
struct DiagGaussianParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_var;

  DiagGaussianParams() = default;
  // Throws dvae::Error on length mismatch; clamps log_var.
  DiagGaussianParams(Eigen::VectorXd mean, Eigen::VectorXd log_var);

  static DiagGaussianParams standard(Eigen::Index dim);

  Eigen::Index dim() const { return mean.size(); }
  Eigen::VectorXd variance() const { return log_var.array().exp().matrix(); }
};

// Per-bin variance of a circularly-symmetric zero-mean complex Gaussian.
struct ComplexGaussianVariance {
  Eigen::VectorXd variance;

  explicit ComplexGaussianVariance(Eigen::VectorXd v);
};

// Scalar kernels shared with the autodiff loss nodes. Arguments are
// log-variances; no clamping happens here.
namespace kernel {

// KL(N(mq, e^lq) || N(mp, e^lp)) for one coordinate. Written in terms of
// expm1 so the result is exactly 0 when q == p and never negative.
inline double kl_term(double mq, double lq, double mp, double lp) {
  const double d = mq - mp;
  const double r = lq - lp;
  return 0.5 * ((std::expm1(r) - r) + d * d * std::exp(-lp));
}

struct KlTermGrad {
  double mq, lq, mp, lp;
};

inline KlTermGrad kl_term_grad(double mq, double lq, double mp, double lp) {
  const double d = mq - mp;
  const double inv_vp = std::exp(-lp);
  const double e = std::expm1(lq - lp);
  return {d * inv_vp, 0.5 * e, -d * inv_vp, -0.5 * (e + d * d * inv_vp)};
}

// d_IS(x, v) for one bin.
inline double is_term(double x, double v) {
  const double r = x / v;
  return (r - 1.0) - std::log(r);
}

// d/dv d_IS(x, v).
inline double is_term_dv(double x, double v) { return (v - x) / (v * v); }

// d/dx d_IS(x, v).
inline double is_term_dx(double x, double v) { return 1.0 / v - 1.0 / x; }

}  // namespace kernel

// mean + exp(log_var / 2) * noise. Throws dvae::Error on length mismatch.
Eigen::VectorXd reparam_sample(const DiagGaussianParams& params,
                               const Eigen::VectorXd& noise);

double kl_diag_gaussian(const DiagGaussianParams& q,
                        const DiagGaussianParams& p);

// Same value as kl_diag_gaussian(q, standard(q.dim())), bit for bit.
double kl_to_standard_normal(const DiagGaussianParams& q);

struct KlGradient {
  Eigen::VectorXd mean_q, log_var_q, mean_p, log_var_p;
};
KlGradient kl_diag_gaussian_grad(const DiagGaussianParams& q,
                                 const DiagGaussianParams& p);

// sum_f x_f / v_f - log(x_f / v_f) - 1. Throws dvae::Error for non-positive
// v or mismatched lengths.
double itakura_saito(const Eigen::VectorXd& x, const Eigen::VectorXd& v);

struct ItakuraSaitoGradient {
  Eigen::VectorXd x, v;
};
ItakuraSaitoGradient itakura_saito_grad(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& v);

// -log N_c(s; 0, diag(v)) = sum_f log(pi v_f) + |s_f|^2 / v_f.
double complex_gaussian_nll(const Eigen::VectorXcd& s,
                            const ComplexGaussianVariance& v);

}  // namespace dvae
