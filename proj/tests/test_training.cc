// tests/test_training.cc

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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lightdvae/checkpoint.h"
#include "lightdvae/error.h"
#include "lightdvae/training.h"
#include "test_util.h"

using namespace dvae;
using ad::Matrix;
using ad::Tape;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.bins = 9;
  c.d_model = 8;
  c.n_layers = 1;
  c.d_ff = 16;
  c.latent_z = 2;
  c.latent_w = 3;
  c.rnn_hidden = 4;
  return c;
}

std::vector<PowerSpectrogram> random_segments(int n, int bins, int frames,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PowerSpectrogram> out(n);
  for (auto& s : out) s.values = test::random_power(bins, frames, rng);
  return out;
}

OptimizerConfig fast_optim() {
  OptimizerConfig o;
  o.lr_max = 1e-2;
  o.warmup_iters = 3;
  o.cosine_iters = 10;
  o.lr_min = 1e-4;
  return o;
}

TrainConfig small_train(std::int64_t iterations) {
  TrainConfig t;
  t.iterations = iterations;
  t.batch_size = 3;
  t.seed = 5;
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "lightdvae_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("elbo vanishes when the model matches the data") {
  Tape tape(false);
  const Batch batch = make_batch(random_segments(2, 9, 4, 1));
  ForwardOutput out;
  out.batch = 2;
  out.frames = 4;
  std::mt19937_64 rng(2);
  const Matrix mz = test::random_matrix(8, 2, rng), lz = test::random_matrix(8, 2, rng);
  out.q_w = {tape.constant(Matrix::Zero(2, 3)), tape.constant(Matrix::Zero(2, 3))};
  out.w = tape.constant(Matrix::Zero(2, 3));
  out.q_z = {tape.constant(mz), tape.constant(lz)};
  out.p_z = {tape.constant(mz), tape.constant(lz)};
  out.z = tape.constant(mz);
  out.log_v_s = tape.constant(log_features(batch.rows));
  const ElboLoss l = elbo_loss(out, batch, 0.01, 0.01);
  CHECK(l.values.kl_w == 0.0);
  CHECK(l.values.kl_z == 0.0);
  CHECK(std::abs(l.values.recon_is) < 1e-12);
  CHECK(std::abs(l.values.total) < 1e-12);
}

TEST_CASE("elbo is linear in the beta weights") {
  Dvae m(tiny_model(), 3);
  const Batch batch = make_batch(random_segments(3, 9, 5, 4));
  auto loss = [&](double bw, double bz) {
    Tape tape(false);
    NoiseSource noise(6);
    const ElboLoss l = elbo_loss(m.forward_tf(tape, batch, noise), batch, bw, bz);
    CHECK(l.total.value()(0, 0) == l.values.total);
    return l.values;
  };
  const LossBreakdown zero = loss(0.0, 0.0);
  CHECK(zero.total == zero.recon_is);
  const LossBreakdown a = loss(0.01, 0.01), b = loss(0.01, 0.02);
  CHECK(a.kl_z == b.kl_z);
  CHECK(a.total == a.recon_is + 0.01 * a.kl_z + 0.01 * a.kl_w);
  CHECK(b.total == b.recon_is + 0.02 * b.kl_z + 0.01 * b.kl_w);
  CHECK((b.total - b.recon_is - 0.01 * b.kl_w) ==
        doctest::Approx(2.0 * (a.total - a.recon_is - 0.01 * a.kl_w)).epsilon(1e-12));
  CHECK(a.kl_z >= 0.0);
  CHECK(a.kl_w >= 0.0);
  CHECK(a.recon_is >= 0.0);
}

TEST_CASE("elbo is a batch mean") {
  Dvae m(tiny_model(), 7);
  const auto segs = random_segments(2, 9, 5, 8);
  // Draw the noise exactly as the batched pass would, then split it.
  const Batch both = make_batch(segs);
  Tape tape(false);
  NoiseSource noise(9);
  const ForwardOutput out = m.forward_tf(tape, both, noise);
  const LossBreakdown l = elbo_loss(out, both, 0.01, 0.01).values;
  double recon = 0.0;
  const Matrix v = out.v_s();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    recon += kernel::is_term(both.rows.data()[i], v.data()[i]);
  CHECK(l.recon_is == doctest::Approx(recon / 2.0).epsilon(1e-12));
}

TEST_CASE("learning rate schedule") {
  const OptimizerConfig cfg;
  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(2500, cfg) == doctest::Approx(2.5e-5).epsilon(1e-12));
  CHECK(lr_at(5000, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_at(5001, cfg) == doctest::Approx(5e-5).epsilon(1e-6));
  // Half-period of the cosine: lr_min + (lr_max - lr_min) / 2.
  CHECK(lr_at(15000, cfg) == doctest::Approx(1e-8 + 0.5 * (5e-5 - 1e-8)).epsilon(1e-12));
  CHECK(lr_at(15000, cfg) == doctest::Approx(2.5005e-5).epsilon(1e-12));
  CHECK(lr_at(25000, cfg) == doctest::Approx(1e-8).epsilon(1e-9));
  CHECK(lr_at(30000, cfg) == 1e-8);
  // Continuity at the junction and monotone decay afterwards.
  CHECK(std::abs(lr_at(5000, cfg) - lr_at(5001, cfg)) < 1e-12);
  for (std::int64_t it = 5000; it < 25000; it += 97)
    CHECK(lr_at(it + 1, cfg) <= lr_at(it, cfg));
  for (std::int64_t it = 0; it < 5000; it += 101)
    CHECK(lr_at(it + 1, cfg) > lr_at(it, cfg));
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig c;
  CHECK_NOTHROW(c.validate());
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.beta2 = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.lr_min = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("decoupled weight decay on a zero gradient") {
  ad::Parameter p{"p", Matrix::Constant(2, 3, 1.7), Matrix::Zero(2, 3)};
  std::vector<ad::Parameter*> ps{&p};
  AdamState st;
  OptimizerConfig cfg;
  cfg.weight_decay = 0.1;
  const double lr = 0.01;
  const Matrix before = p.value;
  adamw_step(ps, st, lr, cfg);
  CHECK(p.value == before * (1.0 - lr * cfg.weight_decay));
  CHECK(st.step == 1);
}

TEST_CASE("adamw matches a scalar recursion") {
  for (double wd : {0.0, 1e-2}) {
    CAPTURE(wd);
    OptimizerConfig cfg;
    cfg.weight_decay = wd;
    cfg.eps = 1e-9;
    ad::Parameter p{"p", Matrix::Constant(1, 1, 0.5), Matrix::Zero(1, 1)};
    std::vector<ad::Parameter*> ps{&p};
    AdamState st;
    double x = 0.5, m = 0.0, v = 0.0;
    const double grads[] = {0.3, -1.2, 0.05, 2.0, -0.7, 0.0, 1e-4};
    int k = 0;
    for (double g : grads) {
      ++k;
      const double lr = 1e-2 * k;
      p.grad(0, 0) = g;
      adamw_step(ps, st, lr, cfg);
      x *= 1.0 - lr * wd;
      m = cfg.beta1 * m + (1 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
      const double mh = m / (1 - std::pow(cfg.beta1, k));
      const double vh = v / (1 - std::pow(cfg.beta2, k));
      x -= lr * mh / (std::sqrt(vh) + cfg.eps);
      CHECK(std::abs(p.value(0, 0) - x) < 1e-12);
      CHECK(std::isfinite(p.value(0, 0)));
    }
  }
}

TEST_CASE("gradient clipping") {
  ad::Parameter a{"a", Matrix::Zero(1, 2), Matrix(1, 2)};
  ad::Parameter b{"b", Matrix::Zero(1, 1), Matrix(1, 1)};
  a.grad << 3.0, 0.0;
  b.grad << 4.0;
  std::vector<ad::Parameter*> ps{&a, &b};
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == 3.0);
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
  CHECK(b.grad(0, 0) == doctest::Approx(0.8));
  a.grad << 30.0, 40.0;
  CHECK(clip_grad_norm(ps, 0.0) == doctest::Approx(std::sqrt(2500.0 + 0.64)));
  CHECK(a.grad(0, 0) == 30.0);
}

TEST_CASE("training is deterministic and additive") {
  const auto segs = random_segments(7, 9, 5, 10);
  auto curve = [&] {
    Dvae m(tiny_model(), 11);
    Trainer t(m, segs, fast_optim(), small_train(8));
    std::vector<LossBreakdown> out;
    while (t.iteration() < 8) {
      const LossBreakdown l = t.step();
      CHECK(l.total == l.recon_is + 0.01 * l.kl_z + 0.01 * l.kl_w);
      CHECK(l.kl_z >= 0.0);
      CHECK(l.kl_w >= 0.0);
      out.push_back(l);
    }
    return out;
  };
  const auto a = curve(), b = curve();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].total == b[i].total);
    CHECK(a[i].kl_z == b[i].kl_z);
  }
}

TEST_CASE("first step uses the first warmup rate") {
  Dvae m(tiny_model(), 12);
  const OptimizerConfig o = fast_optim();
  Trainer t(m, random_segments(4, 9, 5, 13), o, small_train(2));
  t.step();
  CHECK(t.last_lr() == lr_at(1, o));
  CHECK(t.last_lr() > 0.0);
}

TEST_CASE("resuming from a checkpoint continues the same curve") {
  const auto segs = random_segments(8, 9, 5, 14);
  std::vector<double> straight;
  {
    Dvae m(tiny_model(), 15);
    Trainer t(m, segs, fast_optim(), small_train(9));
    while (t.iteration() < 9) straight.push_back(t.step().total);
  }
  const auto path = temp_path("resume.ckpt");
  {
    Dvae m(tiny_model(), 15);
    Trainer t(m, segs, fast_optim(), small_train(9));
    for (int i = 0; i < 4; ++i) t.step();
    save_checkpoint(path, t.checkpoint(R"({"note": "mid-run"})"));
  }
  Dvae m(tiny_model(), 999);  // different init, overwritten by restore
  Trainer t(m, segs, fast_optim(), small_train(9));
  const CheckpointData data = load_checkpoint(path);
  CHECK(data.metadata.find("mid-run") != std::string::npos);
  t.restore(data);
  CHECK(t.iteration() == 4);
  for (int i = 4; i < 9; ++i) CHECK(t.step().total == straight[i]);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  Dvae m(tiny_model(), 16);
  m.parameters().get("head.observation.bias").value(0, 0) =
      std::numeric_limits<double>::quiet_NaN();
  Trainer t(m, random_segments(3, 9, 5, 17), fast_optim(), small_train(2));
  try {
    t.step();
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("iteration 1") != std::string::npos);
    CHECK(what.find("recon_is") != std::string::npos);
  }
}

TEST_CASE("run writes one log row per iteration and fires callbacks") {
  Dvae m(tiny_model(), 18);
  TrainConfig tc = small_train(6);
  tc.checkpoint_every = 2;
  tc.valid_every = 3;
  Trainer t(m, random_segments(5, 9, 5, 19), fast_optim(), tc);
  std::ostringstream log;
  int ckpts = 0, valids = 0;
  t.run(&log, [&](Trainer&) { ++ckpts; }, [&](Trainer&) { ++valids; });
  CHECK(ckpts == 3);
  CHECK(valids == 2);
  std::istringstream in(log.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), '\t') == 6);
    CHECK(line.rfind(std::to_string(rows) + "\t", 0) == 0);
  }
  CHECK(rows == 6);
  CHECK(std::string(kTrainLogHeader).find("wall_time") != std::string::npos);
}

TEST_CASE("log rows print full precision") {
  LossBreakdown l{0.1, 0.2, 1.0 / 3.0, 2.0};
  const std::string row = Trainer::format_log_row(7, 1e-5, l, 1.25);
  std::istringstream in(row);
  std::int64_t it;
  double lr, total, recon, klz, klw, wall;
  in >> it >> lr >> total >> recon >> klz >> klw >> wall;
  CHECK(it == 7);
  CHECK(klz == 1.0 / 3.0);
  CHECK(total == 0.1);
  CHECK(wall == 1.25);
}

TEST_CASE("evaluation leaves parameters untouched") {
  Dvae m(tiny_model(), 20);
  const auto segs = random_segments(3, 9, 5, 21);
  Trainer t(m, segs, fast_optim(), small_train(1));
  const Matrix before = m.parameters().all().front()->value;
  const LossBreakdown a = t.evaluate(segs, 3), b = t.evaluate(segs, 3);
  CHECK(a.total == b.total);
  CHECK(m.parameters().all().front()->value == before);
}

TEST_CASE("checkpoint container round trip and corruption") {
  CheckpointData d;
  d.metadata = R"({"k": [1, 2, 3]})";
  std::mt19937_64 rng(22);
  d.tensors.push_back({"a", test::random_matrix(3, 4, rng)});
  d.tensors.push_back({"b/c", test::random_matrix(1, 1, rng)});
  d.tensors.push_back({"empty", Matrix(0, 5)});
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, d);
  const CheckpointData r = load_checkpoint(path);
  CHECK(r.tensors.size() == 3);
  CHECK(r.tensor("a") == d.tensors[0].value);
  CHECK(r.tensor("b/c") == d.tensors[1].value);
  CHECK(r.tensor("empty").cols() == 5);
  CHECK(r.has_tensor("a"));
  CHECK_FALSE(r.has_tensor("z"));
  CHECK_THROWS_AS(r.tensor("z"), FormatError);
  CHECK(r.metadata.find("\"k\"") != std::string::npos);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& content) {
    const auto p = temp_path("corrupt.ckpt");
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write(bad_magic)), FormatError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_AS(load_checkpoint(write(bad_version)), FormatError);
  CHECK_THROWS_AS(load_checkpoint(write(bytes.substr(0, bytes.size() - 8))), FormatError);
  CHECK_THROWS_AS(load_checkpoint(write(bytes + "xx")), FormatError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("does-not-exist.ckpt")), FormatError);
}

TEST_CASE("parameters load into a fresh model") {
  Dvae a(tiny_model(), 23), b(tiny_model(), 24);
  CheckpointData d;
  d.tensors = parameter_tensors(a);
  CHECK(d.tensors.size() == a.parameters().all().size());
  load_parameters(b, d);
  for (std::size_t i = 0; i < a.parameters().all().size(); ++i)
    CHECK(a.parameters().all()[i]->value == b.parameters().all()[i]->value);
  ModelConfig other = tiny_model();
  other.d_model = 10;
  Dvae c(other, 0);
  CHECK_THROWS_AS(load_parameters(c, d), FormatError);
}

}  // TEST_SUITE
