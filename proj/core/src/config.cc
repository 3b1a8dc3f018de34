// config.cc

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

#include "lightdvae/config.h"

#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lightdvae/error.h"

namespace dvae {

namespace {

using nlohmann::json;

struct Field {
  std::string key;  // "section.name"
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T as(const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    return v.get<T>();
  } else {
    if (!v.is_number_integer())
      throw ConfigError(key + ": expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) return v.get<T>();
      if (v.get<std::int64_t>() < 0)
        throw ConfigError(key + ": expected a non-negative integer");
      return static_cast<T>(v.get<std::int64_t>());
    } else {
      const auto x = v.get<std::int64_t>();
      if (x < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
          x > static_cast<std::int64_t>(std::numeric_limits<T>::max()))
        throw ConfigError(key + ": integer out of range");
      return static_cast<T>(x);
    }
  }
}

template <typename T, typename Proj>
Field field(const std::string& key, Proj proj) {
  return {key,
          [proj](const RunConfig& c) {
            return json(proj(const_cast<RunConfig&>(c)));
          },
          [proj, key](RunConfig& c, const json& v) { proj(c) = as<T>(v, key); }};
}

#define DVAE_FIELD(T, key, member) \
  field<T>(key, [](RunConfig& c) -> T& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back({"model.variant",
                 [](const RunConfig& c) { return json(c.model.variant()); },
                 [](RunConfig& c, const json& v) {
                   c.model.set_variant(as<std::string>(v, "model.variant"));
                 }});
    f.push_back(DVAE_FIELD(int, "model.d_model", model.d_model));
    f.push_back(DVAE_FIELD(int, "model.n_layers", model.n_layers));
    f.push_back(DVAE_FIELD(int, "model.d_ff", model.d_ff));
    f.push_back(DVAE_FIELD(int, "model.n_heads", model.n_heads));
    f.push_back(DVAE_FIELD(int, "model.latent_z", model.latent_z));
    f.push_back(DVAE_FIELD(int, "model.latent_w", model.latent_w));
    f.push_back(DVAE_FIELD(int, "model.rnn_hidden", model.rnn_hidden));
    f.push_back(DVAE_FIELD(std::uint64_t, "model.init_seed", init_seed));

    f.push_back(DVAE_FIELD(double, "optim.beta1", optim.beta1));
    f.push_back(DVAE_FIELD(double, "optim.beta2", optim.beta2));
    f.push_back(DVAE_FIELD(double, "optim.eps", optim.eps));
    f.push_back(DVAE_FIELD(double, "optim.weight_decay", optim.weight_decay));
    f.push_back(DVAE_FIELD(double, "optim.lr_max", optim.lr_max));
    f.push_back(DVAE_FIELD(double, "optim.lr_min", optim.lr_min));
    f.push_back(DVAE_FIELD(std::int64_t, "optim.warmup_iters", optim.warmup_iters));
    f.push_back(DVAE_FIELD(std::int64_t, "optim.cosine_iters", optim.cosine_iters));
    f.push_back(DVAE_FIELD(double, "optim.clip_norm", optim.clip_norm));

    f.push_back(DVAE_FIELD(std::int64_t, "train.iterations", train.iterations));
    f.push_back(DVAE_FIELD(int, "train.batch_size", train.batch_size));
    f.push_back(DVAE_FIELD(double, "train.beta_w", train.beta_w));
    f.push_back(DVAE_FIELD(double, "train.beta_z", train.beta_z));
    f.push_back(DVAE_FIELD(std::uint64_t, "train.seed", train.seed));
    f.push_back(DVAE_FIELD(std::int64_t, "train.checkpoint_every", train.checkpoint_every));
    f.push_back(DVAE_FIELD(std::int64_t, "train.valid_every", train.valid_every));

    f.push_back(DVAE_FIELD(int, "stft.window_length", stft.window_length));
    f.push_back(DVAE_FIELD(int, "stft.hop", stft.hop));

    f.push_back(DVAE_FIELD(std::string, "data.dataset", data.dataset));
    f.push_back(DVAE_FIELD(std::string, "data.manifest", data.manifest));
    f.push_back(DVAE_FIELD(int, "data.segment_frames", data.segment_frames));
    f.push_back(DVAE_FIELD(double, "data.silence_db", data.silence_db));
    f.push_back(DVAE_FIELD(double, "data.valid_fraction", data.valid_fraction));
    f.push_back(DVAE_FIELD(double, "data.test_fraction", data.test_fraction));
    f.push_back(DVAE_FIELD(std::uint64_t, "data.split_seed", data.split_seed));

    f.push_back(DVAE_FIELD(std::string, "eval.mode", eval.mode));
    f.push_back(DVAE_FIELD(std::uint64_t, "eval.seed", eval.seed));
    f.push_back(DVAE_FIELD(int, "eval.griffin_lim_iters", eval.griffin_lim_iters));
    f.push_back(DVAE_FIELD(int, "eval.generate_count", eval.generate_count));
    f.push_back(DVAE_FIELD(int, "eval.generate_frames", eval.generate_frames));
    return f;
  }();
  return all;
}

#undef DVAE_FIELD

const Field& find_field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

void set_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const Field& f = find_field(key);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  // A string-typed key given something that parses as a number stays a string.
  if (f.get(cfg).is_string() && !value.is_string()) value = text;
  f.set(cfg, value);
}

}  // namespace

void RunConfig::finalize() {
  try {
    stft.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("stft: ") + e.what());
  }
  model.bins = stft.num_bins();
  model.validate();
  optim.validate();
  train.validate();
  if (data.segment_frames < 1)
    throw ConfigError("data.segment_frames must be >= 1");
  if (data.valid_fraction < 0.0 || data.test_fraction < 0.0 ||
      data.valid_fraction + data.test_fraction > 1.0)
    throw ConfigError("data.valid_fraction/data.test_fraction out of range");
  feedback_mode();
  if (eval.griffin_lim_iters < 0)
    throw ConfigError("eval.griffin_lim_iters must be >= 0");
  if (eval.generate_count < 0)
    throw ConfigError("eval.generate_count must be >= 0");
  if (eval.generate_frames < 1)
    throw ConfigError("eval.generate_frames must be >= 1");
}

FeedbackMode RunConfig::feedback_mode() const {
  if (eval.mode == "TF") return FeedbackMode::kTeacherForcing;
  if (eval.mode == "GEN") return FeedbackMode::kGeneration;
  throw ConfigError("eval.mode must be TF or GEN, got '" + eval.mode + "'");
}

std::string RunConfig::to_json() const {
  json j = json::object();
  for (const Field& f : fields()) {
    const auto dot = f.key.find('.');
    j[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(*this);
  }
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) {
      // Validates the section name before complaining about its shape.
      bool known = false;
      for (const Field& f : fields())
        known = known || f.key.rfind(section + ".", 0) == 0;
      if (!known) throw ConfigError("unknown config key '" + section + "'");
      throw ConfigError(section + ": expected an object");
    }
    for (const auto& [name, value] : body.items())
      find_field(section + "." + name).set(cfg, value);
  }
  cfg.finalize();
  return cfg;
}

void RunConfig::apply_override(const std::string& assignment) {
  apply_overrides({assignment});
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  RunConfig next = *this;
  for (const std::string& a : assignments) set_override(next, a);
  next.finalize();
  *this = std::move(next);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return RunConfig::from_json(ss.str());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << cfg.to_json() << '\n';
}

}  // namespace dvae
