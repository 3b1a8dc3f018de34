// tests/test_cli.cc

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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dvae_cli/cli.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

Result dvae_run(std::vector<std::string> args) {
  args.insert(args.begin(), "dvae");
  std::ostringstream out, err;
  Result r;
  r.code = dvae::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Log rows with the trailing wall-clock column removed.
std::string without_wall_time(const fs::path& p) {
  std::istringstream is(slurp(p));
  std::string line, out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind('\t')) + '\n';
  return out;
}

// Relative path -> bytes for every file under `root` except the listed ones.
std::map<std::string, std::string> tree(const fs::path& root,
                                        const std::vector<std::string>& skip = {}) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (std::find(skip.begin(), skip.end(), rel) != skip.end()) continue;
    files[rel] = slurp(e.path());
  }
  return files;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dvae_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::vector<std::string> kTinyModel = {
    "-s", "stft.window_length=64", "-s", "stft.hop=16",
    "-s", "model.d_model=8",       "-s", "model.n_layers=1",
    "-s", "model.d_ff=16",         "-s", "model.latent_z=2",
    "-s", "model.latent_w=3",      "-s", "model.rnn_hidden=4"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::map<std::string, long> param_table(const std::string& text) {
  std::map<std::string, long> t;
  std::istringstream is(text);
  std::string key, value;
  while (is >> key >> value)
    if (key != "variant") t[key] = std::stol(value);
  return t;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gradcheck subcommand") {
  for (const char* variant : {"LigHT", "HiT-Inv-s"}) {
    const Result r = dvae_run({"gradcheck", "-s", std::string("model.variant=") + variant});
    CAPTURE(r.out);
    CAPTURE(r.err);
    CHECK(r.code == 0);
    CHECK(r.out.find("PASS") != std::string::npos);
    CHECK(r.out.find(variant) != std::string::npos);
  }
}

TEST_CASE("params subcommand") {
  const auto light = dvae_run(cat({"params"}, kTinyModel));
  const auto hit = dvae_run(cat({"params", "-s", "model.variant=HiT"}, kTinyModel));
  REQUIRE(light.code == 0);
  REQUIRE(hit.code == 0);
  const auto l = param_table(light.out), h = param_table(hit.out);
  CHECK(l.at("total") < h.at("total"));
  CHECK(h.at("total") - l.at("total") == l.at("decoder_stack"));
  CHECK(l.at("w_encoder") + l.at("z_encoder") + l.at("decoders") + l.at("heads") ==
        l.at("total"));
}

TEST_CASE("usage and config errors exit with 1") {
  const fs::path dir = scratch_dir("errors");
  Result r = dvae_run({"train", "-o", (dir / "run").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("data.dataset") != std::string::npos);

  r = dvae_run({"train", "-o", (dir / "run").string(), "-s", "data.dataset=" + (dir / "none").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("data.dataset") != std::string::npos);

  r = dvae_run({"params", "-s", "model.colour=blue"});
  CHECK(r.code == 1);
  CHECK(r.err.find("model.colour") != std::string::npos);

  std::ofstream(dir / "bad.json") << R"({"optim": {"lr": 1}})";
  r = dvae_run({"params", "-c", (dir / "bad.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("optim.lr") != std::string::npos);

  CHECK(dvae_run({}).code == 1);
  CHECK(dvae_run({"fly"}).code == 1);
  CHECK(dvae_run({"resynth", "-o", dir.string()}).code == 1);
  CHECK(dvae_run({"--help"}).code == 0);
  fs::remove_all(dir);
}

TEST_CASE("end to end pipeline is deterministic") {
  const fs::path dir = scratch_dir("e2e");
  const fs::path data = dir / "data";
  Result r = dvae_run({"synth-data", "-o", data.string(), "-n", "6", "-d", "0.6", "--seed", "3"});
  REQUIRE(r.code == 0);

  const std::vector<std::string> train_cfg = cat(
      kTinyModel, {"-s", "data.dataset=" + data.string(), "-s", "data.segment_frames=10",
                   "-s", "data.valid_fraction=0.2", "-s", "data.test_fraction=0.2",
                   "-s", "train.batch_size=4", "-s", "train.iterations=6",
                   "-s", "train.checkpoint_every=3", "-s", "train.valid_every=3",
                   "-s", "optim.warmup_iters=2", "-s", "optim.cosine_iters=4",
                   "-s", "optim.lr_max=1e-3", "-s", "eval.griffin_lim_iters=5"});

  const fs::path run_a = dir / "a", run_b = dir / "b";
  r = dvae_run(cat({"train", "-o", run_a.string()}, train_cfg));
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  REQUIRE(dvae_run(cat({"train", "-o", run_b.string()}, train_cfg)).code == 0);

  for (const char* f : {"config.json", "manifest.tsv", "checkpoints/iter_00000003.ckpt",
                        "checkpoints/iter_00000006.ckpt", "checkpoints/last.ckpt",
                        "logs/valid.tsv"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(run_a / f));
    CHECK(slurp(run_a / f) == slurp(run_b / f));
  }
  const std::string log = without_wall_time(run_a / "logs" / "train.tsv");
  CHECK(log == without_wall_time(run_b / "logs" / "train.tsv"));
  CHECK(log.rfind("iteration\tlr\ttotal\trecon_is\tkl_z\tkl_w\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 7);

  // Resuming from the midpoint reproduces the uninterrupted run.
  const fs::path run_c = dir / "c";
  std::vector<std::string> short_cfg = train_cfg;
  short_cfg.push_back("-s");
  short_cfg.push_back("train.iterations=3");
  REQUIRE(dvae_run(cat({"train", "-o", run_c.string()}, short_cfg)).code == 0);
  REQUIRE(dvae_run({"train", "-o", run_c.string(), "--resume",
                    (run_c / "checkpoints" / "last.ckpt").string(), "-s",
                    "train.iterations=6"})
              .code == 0);
  CHECK(without_wall_time(run_c / "logs" / "train.tsv") == log);
  CHECK(slurp(run_c / "checkpoints" / "last.ckpt") == slurp(run_a / "checkpoints" / "last.ckpt"));

  const std::string ckpt = (run_a / "checkpoints" / "last.ckpt").string();
  for (const char* mode : {"TF", "GEN"}) {
    const fs::path o1 = dir / (std::string("resynth1_") + mode);
    const fs::path o2 = dir / (std::string("resynth2_") + mode);
    for (const fs::path& o : {o1, o2}) {
      r = dvae_run({"resynth", "--checkpoint", ckpt, "-i", data.string(), "-o", o.string(),
                    "--mode", mode, "--seed", "5"});
      CAPTURE(r.err);
      REQUIRE(r.code == 0);
    }
    CHECK(fs::exists(o1 / "reports" / (std::string("resynth_") + mode + ".json")));
    const auto t1 = tree(o1), t2 = tree(o2);
    CHECK(t1.size() == 6 + 2);
    CHECK(t1 == t2);
  }

  const fs::path g1 = dir / "gen1", g2 = dir / "gen2";
  for (const fs::path& o : {g1, g2})
    REQUIRE(dvae_run({"generate", "--checkpoint", ckpt, "-o", o.string(), "-n", "2", "-T", "12",
                      "--seed", "9"})
                .code == 0);
  CHECK(fs::exists(g1 / "wavs" / "gen_0001.wav"));
  CHECK(tree(g1) == tree(g2));
  const fs::path g3 = dir / "gen3";
  REQUIRE(dvae_run({"generate", "--checkpoint", ckpt, "-o", g3.string(), "-n", "2", "-T", "12",
                    "--seed", "10"})
              .code == 0);
  CHECK(tree(g1) != tree(g3));

  r = dvae_run({"eval", "--ref", (dir / "resynth1_TF" / "wavs").string(), "--est",
                (dir / "resynth2_TF" / "wavs").string(), "-o", (dir / "eval").string()});
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "eval" / "reports" / "eval.json"));
  CHECK(report["count"] == 6);
  CHECK(report["mean"]["rmse"].get<double>() == 0.0);
  CHECK(report["mean"]["si_sdr_db"] == "inf");

  r = dvae_run({"params", "--checkpoint", ckpt});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("variant\tLigHT\n", 0) == 0);

  r = dvae_run({"manifest", "-s", "data.dataset=" + data.string(), "-s",
                "data.valid_fraction=0.2", "-s", "data.test_fraction=0.2", "-o",
                (dir / "m.tsv").string()});
  CHECK(r.code == 0);
  CHECK(slurp(dir / "m.tsv") == slurp(run_a / "manifest.tsv"));
  fs::remove_all(dir);
}

}  // TEST_SUITE
