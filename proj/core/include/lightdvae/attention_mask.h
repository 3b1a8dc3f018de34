// lightdvae/attention_mask.h

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

#include <Eigen/Dense>

namespace dvae {

// allowed(t, tau): may query position t attend to key position tau.
class AttentionMask {
 public:
  using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

  AttentionMask() = default;
  // Throws dvae::Error unless square with every row non-empty.
  explicit AttentionMask(BoolMatrix allowed);

  // Every position sees every position.
  static AttentionMask full(int frames);
  // tau <= t.
  static AttentionMask causal(int frames);

  int frames() const { return static_cast<int>(allowed_.rows()); }
  bool allowed(int query, int key) const { return allowed_(query, key); }
  const BoolMatrix& matrix() const { return allowed_; }

 private:
  BoolMatrix allowed_;
};

// Inclusive causal mask over `frames` positions. Exclusive dependencies
// (tau < t) are expressed by shifting the attended sequence one step to the
// right and using the inclusive mask, since a strict mask leaves the first
// row empty; asking for one throws dvae::Error.
AttentionMask build_causal_mask(int frames, bool inclusive);

}  // namespace dvae
