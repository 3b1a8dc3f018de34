// scalar_math.h

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

// Element-wise transcendentals evaluated one coefficient at a time with the
// C library. Eigen's vectorized versions round differently in SIMD lanes and
// in the scalar tail, so a coefficient's value would depend on its position
// in the matrix.

#include <cmath>

#include <Eigen/Dense>

namespace dvae::internal {

template <typename Derived>
Eigen::MatrixXd exp_of(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return std::exp(v); });
}

template <typename Derived>
Eigen::MatrixXd log_of(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return std::log(v); });
}

template <typename Derived>
Eigen::MatrixXd tanh_of(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

template <typename Derived>
Eigen::MatrixXd sigmoid_of(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace dvae::internal
