// checkpoint.cc

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

#include "lightdvae/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lightdvae/error.h"

namespace dvae {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint truncated");
  return v;
}

}  // namespace

const ad::Matrix& CheckpointData::tensor(const std::string& name) const {
  for (const NamedTensor& t : tensors)
    if (t.name == name) return t.value;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool CheckpointData::has_tensor(const std::string& name) const {
  for (const NamedTensor& t : tensors)
    if (t.name == name) return true;
  return false;
}

void save_checkpoint(const std::filesystem::path& path,
                     const CheckpointData& data) {
  nlohmann::json header;
  try {
    header["metadata"] = nlohmann::json::parse(data.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  header["tensors"] = nlohmann::json::array();
  for (const NamedTensor& t : data.tensors)
    header["tensors"].push_back(
        {{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, kCheckpointVersion);
    write_pod<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const NamedTensor& t : data.tensors)
      os.write(reinterpret_cast<const char*>(t.value.data()),
               static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    if (!os) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError(path.string() + " is not a checkpoint");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  const auto length = read_pod<std::uint64_t>(is);
  if (length > (1ULL << 32)) throw FormatError("checkpoint header too large");
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw FormatError("checkpoint truncated");

  CheckpointData data;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    data.metadata = header.at("metadata").dump();
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      if (rows < 0 || cols < 0) throw FormatError("negative tensor shape");
      t.value.resize(rows, cols);
      is.read(reinterpret_cast<char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
      if (!is) throw FormatError("checkpoint truncated in tensor " + t.name);
      data.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("checkpoint has trailing bytes");
  return data;
}

}  // namespace dvae
