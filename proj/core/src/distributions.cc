// distributions.cc

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

#include "lightdvae/distributions.h"

#include <numbers>
#include <string>

#include "lightdvae/error.h"
#include "scalar_math.h"

namespace dvae {

namespace {

void check_same_length(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b)
    throw Error(std::string(what) + ": length mismatch (" + std::to_string(a) +
                " vs " + std::to_string(b) + ")");
}

}  // namespace

DiagGaussianParams::DiagGaussianParams(Eigen::VectorXd m, Eigen::VectorXd lv)
    : mean(std::move(m)), log_var(std::move(lv)) {
  check_same_length(mean.size(), log_var.size(), "DiagGaussianParams");
  log_var = log_var.unaryExpr([](double x) { return clamp_log_var(x); });
}

DiagGaussianParams DiagGaussianParams::standard(Eigen::Index dim) {
  return DiagGaussianParams(Eigen::VectorXd::Zero(dim),
                            Eigen::VectorXd::Zero(dim));
}

ComplexGaussianVariance::ComplexGaussianVariance(Eigen::VectorXd v)
    : variance(std::move(v)) {
  for (Eigen::Index i = 0; i < variance.size(); ++i)
    if (!(variance[i] > 0.0))
      throw Error("ComplexGaussianVariance: entries must be positive");
}

Eigen::VectorXd reparam_sample(const DiagGaussianParams& params,
                               const Eigen::VectorXd& noise) {
  check_same_length(params.dim(), noise.size(), "reparam_sample");
  return params.mean +
         internal::exp_of(0.5 * params.log_var).cwiseProduct(noise);
}

double kl_diag_gaussian(const DiagGaussianParams& q,
                        const DiagGaussianParams& p) {
  check_same_length(q.dim(), p.dim(), "kl_diag_gaussian");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < q.dim(); ++i)
    sum += kernel::kl_term(q.mean[i], q.log_var[i], p.mean[i], p.log_var[i]);
  return sum;
}

double kl_to_standard_normal(const DiagGaussianParams& q) {
  // A hand-specialized loop lets the compiler fold the zero prior and contract
  // differently, which breaks bitwise agreement with the general form.
  return kl_diag_gaussian(q, DiagGaussianParams::standard(q.dim()));
}

KlGradient kl_diag_gaussian_grad(const DiagGaussianParams& q,
                                 const DiagGaussianParams& p) {
  check_same_length(q.dim(), p.dim(), "kl_diag_gaussian_grad");
  const Eigen::Index n = q.dim();
  KlGradient g{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n),
               Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto t =
        kernel::kl_term_grad(q.mean[i], q.log_var[i], p.mean[i], p.log_var[i]);
    g.mean_q[i] = t.mq;
    g.log_var_q[i] = t.lq;
    g.mean_p[i] = t.mp;
    g.log_var_p[i] = t.lp;
  }
  return g;
}

double itakura_saito(const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
  check_same_length(x.size(), v.size(), "itakura_saito");
  double sum = 0.0;
  for (Eigen::Index f = 0; f < x.size(); ++f) {
    if (!(v[f] > 0.0))
      throw Error("itakura_saito: variance must be positive at bin " +
                  std::to_string(f));
    sum += kernel::is_term(x[f], v[f]);
  }
  return sum;
}

ItakuraSaitoGradient itakura_saito_grad(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& v) {
  check_same_length(x.size(), v.size(), "itakura_saito_grad");
  ItakuraSaitoGradient g{Eigen::VectorXd(x.size()), Eigen::VectorXd(x.size())};
  for (Eigen::Index f = 0; f < x.size(); ++f) {
    if (!(v[f] > 0.0))
      throw Error("itakura_saito_grad: variance must be positive");
    g.x[f] = kernel::is_term_dx(x[f], v[f]);
    g.v[f] = kernel::is_term_dv(x[f], v[f]);
  }
  return g;
}

double complex_gaussian_nll(const Eigen::VectorXcd& s,
                            const ComplexGaussianVariance& v) {
  check_same_length(s.size(), v.variance.size(), "complex_gaussian_nll");
  double nll = 0.0;
  for (Eigen::Index f = 0; f < s.size(); ++f)
    nll += std::log(std::numbers::pi * v.variance[f]) +
           std::norm(s[f]) / v.variance[f];
  return nll;
}

}  // namespace dvae
