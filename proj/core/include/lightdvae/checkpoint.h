// lightdvae/checkpoint.h

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

// Versioned binary container for parameters, optimizer state and run
// metadata. Layout (all integers little-endian):
//
//   char[8]   magic "DVAECKPT"
//   uint32    format version (1)
//   uint64    header length in bytes
//   char[]    UTF-8 JSON header
//   float64[] tensor payloads, concatenated in header order, column-major
//
// The header holds {"metadata": {...}, "tensors": [{"name", "rows", "cols"}]}.
// See docs/checkpoint-format.md.

#include <filesystem>
#include <string>
#include <vector>

#include "lightdvae/autodiff.h"

namespace dvae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Matrix value;
};

struct CheckpointData {
  // JSON object text; opaque to the container.
  std::string metadata = "{}";
  std::vector<NamedTensor> tensors;

  // Throws dvae::FormatError if absent.
  const ad::Matrix& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path,
                     const CheckpointData& data);
// Throws dvae::FormatError on bad magic, unknown version or truncation.
CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace dvae
