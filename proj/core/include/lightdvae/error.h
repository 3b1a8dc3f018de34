// lightdvae/error.h

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

#include <stdexcept>
#include <string>

namespace dvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user configuration or CLI usage. The CLI maps this to exit status 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unsupported file content (WAV, manifest, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training or evaluation. The CLI maps this to exit
// status 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dvae
