// tests/test_model.cc

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

#include <random>
#include <set>

#include "doctest.h"
#include "lightdvae/error.h"
#include "lightdvae/model.h"
#include "lightdvae/training.h"
#include "test_util.h"

using namespace dvae;
using ad::Matrix;
using ad::Tape;

namespace {

const char* const kVariants[] = {"LigHT",        "HiT",          "LigHT-Inv-s",
                                 "HiT-Inv-s",    "LigHT-Inv-s-NR", "HiT-Inv-s-NR"};

ModelConfig tiny(const std::string& variant = "LigHT") {
  ModelConfig c;
  c.bins = 9;
  c.d_model = 8;
  c.n_layers = 2;
  c.d_ff = 16;
  c.latent_z = 2;
  c.latent_w = 3;
  c.rnn_hidden = 5;
  c.set_variant(variant);
  return c;
}

PowerSpectrogram random_spec(int bins, int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PowerSpectrogram s;
  s.values = test::random_power(bins, frames, rng);
  return s;
}

struct DecodeValues {
  Matrix p_mean, p_log_var, log_v_s;
};

// Both decoder passes on one sequence with explicit inputs.
DecodeValues decode(const Dvae& m, const Matrix& z, const Matrix& w,
                    const Matrix& feedback_power) {
  Tape tape(false);
  const auto T = z.rows();
  const auto d = m.decode(tape.constant(z), tape.constant(w),
                          tape.constant(log_features(feedback_power)), T);
  return {d.p_z.mean.value(), d.p_z.log_var.value(), d.log_v_s.value()};
}

bool rows_equal(const Matrix& a, const Matrix& b, Eigen::Index lo, Eigen::Index hi) {
  for (Eigen::Index t = lo; t < hi; ++t)
    if (a.row(t) != b.row(t)) return false;
  return true;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("variant names round trip") {
  ModelConfig c;
  for (const char* v : kVariants) {
    c.set_variant(v);
    CHECK(c.variant() == v);
  }
  c.set_variant("hit-inv-S-nr");
  CHECK(c.architecture == Architecture::kHiT);
  CHECK(c.ablation == Ablation::kInvSNR);
  CHECK_THROWS_AS(c.set_variant("Transformer"), ConfigError);
  ModelConfig odd = tiny();
  odd.d_model = 7;
  CHECK_THROWS_AS(odd.validate(), ConfigError);
  ModelConfig heads = tiny();
  heads.n_heads = 3;
  CHECK_THROWS_AS(heads.validate(), ConfigError);
  ModelConfig zero = tiny();
  zero.latent_z = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);
}

TEST_CASE("log features floor the power") {
  Matrix p(1, 3);
  p << 0.0, 1e-12, std::exp(2.0);
  const Matrix f = log_features(p);
  CHECK(f(0, 0) == std::log(kPowerFloor));
  CHECK(f(0, 1) == std::log(kPowerFloor));
  CHECK(f(0, 2) == doctest::Approx(2.0));
}

TEST_CASE("noise source is reproducible and restorable") {
  NoiseSource a(5), b(5);
  CHECK(a.normal(3, 4) == b.normal(3, 4));
  const std::string st = a.state();
  const Matrix next = a.normal(2, 2);
  NoiseSource c(99);
  c.set_state(st);
  CHECK(c.normal(2, 2) == next);
  CHECK(NoiseSource(6).normal(2, 2) != NoiseSource(7).normal(2, 2));
}

TEST_CASE("w encoder at the published widths") {
  ModelConfig c;  // defaults: 513 bins, d_model 256, L_w 32
  Dvae m(c, 1);
  const PowerSpectrogram s = random_spec(513, 100, 2);
  const auto q = m.encode_w(s);
  CHECK(q.mean.size() == 32);
  CHECK(q.log_var.size() == 32);
  CHECK(reparam_sample(q, Eigen::VectorXd::Zero(32)) == q.mean);
  const auto z = m.encode_z(s, q.mean);
  REQUIRE(z.size() == 100);
  CHECK(z.front().dim() == 16);
}

TEST_CASE("w encoder is order sensitive") {
  Dvae m(tiny(), 3);
  PowerSpectrogram s = random_spec(9, 12, 4);
  const auto base = m.encode_w(s);
  PowerSpectrogram last = s;
  last.values.col(11) *= 3.0;
  CHECK(m.encode_w(last).mean != base.mean);
  PowerSpectrogram longer;
  longer.values.resize(9, 13);
  longer.values << s.values, s.values.col(0);
  CHECK(m.encode_w(longer).mean != base.mean);
  PowerSpectrogram swapped = s;
  swapped.values.col(0).swap(swapped.values.col(1));
  CHECK(m.encode_w(swapped).mean != base.mean);
}

TEST_CASE("z encoder is non-causal") {
  Dvae m(tiny(), 5);
  const PowerSpectrogram s = random_spec(9, 8, 6);
  const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(3, -1.0, 1.0);
  const auto base = m.encode_z(s, w);
  REQUIRE(base.size() == 8);
  PowerSpectrogram moved = s;
  moved.values.col(7) *= 2.0;
  const auto out = m.encode_z(moved, w);
  CHECK(out[0].mean != base[0].mean);
  CHECK(m.encode_z(s, -w)[0].mean != base[0].mean);
}

TEST_CASE("identical frames without positions give identical posteriors") {
  ModelConfig c = tiny();
  c.positional_encoding = false;
  Dvae m(c, 7);
  PowerSpectrogram s;
  s.values = random_spec(9, 1, 8).values.replicate(1, 6);
  const auto q = m.encode_z(s, Eigen::VectorXd::Ones(3));
  for (int t = 1; t < 6; ++t) {
    CHECK((q[t].mean - q[0].mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((q[t].log_var - q[0].log_var).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("decoder passes respect the factorization") {
  const int T = 7;
  for (const char* variant : kVariants) {
    const std::string variant_name = variant;
    CAPTURE(variant_name);
    Dvae m(tiny(variant), 11);
    std::mt19937_64 rng(12);
    const Matrix z = test::random_matrix(T, 2, rng);
    const Matrix w = test::random_matrix(1, 3, rng);
    const Matrix s = test::random_power(T, 9, rng);
    const DecodeValues base = decode(m, z, w, s);
    CHECK(base.log_v_s.rows() == T);
    CHECK(base.log_v_s.cols() == 9);
    CHECK(base.p_mean.rows() == T);

    for (int t0 = 0; t0 < T; ++t0) {
      CAPTURE(t0);
      Matrix s2 = s;
      s2.row(t0) *= 5.0;
      const DecodeValues fs = decode(m, z, w, s2);
      // Feedback at t0 is invisible at frames <= t0.
      CHECK(rows_equal(fs.log_v_s, base.log_v_s, 0, t0 + 1));
      CHECK(rows_equal(fs.p_mean, base.p_mean, 0, t0 + 1));
      CHECK(rows_equal(fs.p_log_var, base.p_log_var, 0, t0 + 1));
      if (t0 + 1 < T) CHECK_FALSE(rows_equal(fs.log_v_s, base.log_v_s, t0 + 1, t0 + 2));

      Matrix z2 = z;
      z2.row(t0).array() += 1.0;
      const DecodeValues fz = decode(m, z2, w, s);
      // The prior sees z strictly before t; the observation pass includes t.
      CHECK(rows_equal(fz.p_mean, base.p_mean, 0, t0 + 1));
      CHECK(rows_equal(fz.p_log_var, base.p_log_var, 0, t0 + 1));
      CHECK(rows_equal(fz.log_v_s, base.log_v_s, 0, t0));
      CHECK_FALSE(rows_equal(fz.log_v_s, base.log_v_s, t0, t0 + 1));
      if (t0 + 1 < T) CHECK_FALSE(rows_equal(fz.p_mean, base.p_mean, t0 + 1, t0 + 2));
    }

    // The first prior frame sees only w and the zero start frame.
    std::mt19937_64 other(13);
    const DecodeValues fresh =
        decode(m, test::random_matrix(T, 2, other), w, test::random_power(T, 9, other));
    CHECK(rows_equal(fresh.p_mean, base.p_mean, 0, 1));
    CHECK(rows_equal(fresh.p_log_var, base.p_log_var, 0, 1));
    const DecodeValues new_w = decode(m, z, w.array() + 1.0, s);
    CHECK_FALSE(rows_equal(new_w.p_mean, base.p_mean, 0, 1));
  }
}

TEST_CASE("teacher-forced pass outputs and determinism") {
  Dvae m(tiny("HiT"), 14);
  const Batch batch = make_batch({random_spec(9, 6, 15), random_spec(9, 6, 16)});
  auto run = [&] {
    Tape tape(false);
    NoiseSource noise(17);
    const ForwardOutput out = m.forward_tf(tape, batch, noise);
    CHECK(out.batch == 2);
    CHECK(out.frames == 6);
    CHECK(out.q_w.mean.rows() == 2);
    CHECK(out.w.rows() == 2);
    CHECK(out.q_z.mean.rows() == 12);
    CHECK(out.z.rows() == 12);
    CHECK(out.z.cols() == 2);
    CHECK(out.p_z.log_var.rows() == 12);
    CHECK(out.log_v_s.rows() == 12);
    CHECK(out.log_v_s.cols() == 9);
    CHECK((out.v_s().array() > 0).all());
    CHECK(out.q_z.log_var.value().maxCoeff() <= kLogVarMax);
    CHECK(out.q_z.log_var.value().minCoeff() >= kLogVarMin);
    return Matrix(out.v_s());
  };
  const Matrix a = run(), b = run();
  CHECK(test::identical(a, b));
}

TEST_CASE("batched and single-sequence paths agree") {
  for (const char* variant : {"LigHT", "HiT-Inv-s"}) {
    const std::string variant_name = variant;
    CAPTURE(variant_name);
    Dvae m(tiny(variant), 18);
    const PowerSpectrogram s = random_spec(9, 10, 19);
    Tape tape(false);
    NoiseSource n1(20);
    const ForwardOutput out = m.forward_tf(tape, make_batch(s), n1);
    NoiseSource n2(20);
    const PowerSpectrogram tf = m.resynthesize(s, FeedbackMode::kTeacherForcing, n2);
    CHECK((tf.values - out.v_s().transpose()).cwiseAbs().maxCoeff() == 0.0);

    NoiseSource n3(20);
    const auto lat = m.infer(s, n3);
    CHECK(lat.z == out.z.value().transpose());
    CHECK(lat.w == out.w.value().row(0).transpose());
  }
}

TEST_CASE("generation mode reproduces teacher forcing on its own output") {
  for (const char* variant : kVariants) {
    const std::string variant_name = variant;
    CAPTURE(variant_name);
    Dvae m(tiny(variant), 21);
    const PowerSpectrogram s = random_spec(9, 9, 22);
    NoiseSource noise(23);
    const auto lat = m.infer(s, noise);
    const PowerSpectrogram gen = m.decode_generated(lat);
    const PowerSpectrogram tf = m.decode_teacher_forced(lat, gen);
    CHECK(test::identical(gen.values, tf.values));
    // On the real spectrogram the two modes differ.
    CHECK_FALSE(test::identical(m.decode_teacher_forced(lat, s).values, gen.values));
  }
}

TEST_CASE("ancestral generation") {
  Dvae m(tiny("LigHT"), 24);
  NoiseSource a(25), b(25);
  const PowerSpectrogram g1 = m.generate(12, a), g2 = m.generate(12, b);
  CHECK(g1.bins() == 9);
  CHECK(g1.frames() == 12);
  CHECK((g1.values.array() > 0).all());
  CHECK(test::identical(g1.values, g2.values));
  NoiseSource c(26), d(26);
  const PowerSpectrogram w1 = m.generate(12, c, Eigen::VectorXd::Constant(3, -2.0));
  const PowerSpectrogram w2 = m.generate(12, d, Eigen::VectorXd::Constant(3, 2.0));
  CHECK_FALSE(test::identical(w1.values, w2.values));
  CHECK_THROWS_AS(m.generate(0, c), Error);
  CHECK_THROWS_AS(m.generate(3, c, Eigen::VectorXd::Zero(2)), Error);
}

TEST_CASE("parameter sharing and counts") {
  for (int layers : {1, 2, 3}) {
    CAPTURE(layers);
    ModelConfig lc = tiny("LigHT"), hc = tiny("HiT");
    lc.n_layers = hc.n_layers = layers;
    Dvae light(lc, 0), hit(hc, 0);
    CHECK(&light.prior_decoder() == &light.observation_decoder());
    CHECK(&hit.prior_decoder() != &hit.observation_decoder());
    CHECK(light.count_params() < hit.count_params());
    CHECK(hit.count_params() - light.count_params() ==
          hit.observation_decoder().num_params());
    const auto counts = light.parameter_counts();
    CHECK(counts.total == light.count_params());
    CHECK(counts.w_encoder + counts.z_encoder + counts.decoders + counts.heads ==
          counts.total);
    CHECK(counts.decoders == light.prior_decoder().num_params());
    CHECK(hit.parameter_counts().decoders == 2 * counts.decoders);
  }
  // Every tensor is stored once under a unique name.
  Dvae m(tiny("LigHT"), 0);
  std::set<std::string> names;
  for (auto* p : m.parameters().all()) CHECK(names.insert(p->name).second);
}

TEST_CASE("both passes train the shared stack") {
  Dvae m(tiny("LigHT"), 27);
  std::mt19937_64 rng(28);
  const int T = 6;
  const Matrix z = test::random_matrix(T, 2, rng), w = test::random_matrix(1, 3, rng);
  const Matrix feedback = log_features(test::random_power(T, 9, rng));

  auto shared_grads = [&](bool prior_pass) {
    m.parameters().zero_grad();
    Tape tape;
    ad::Var loss;
    if (prior_pass) {
      const auto p = m.decode_prior(tape.constant(z), tape.constant(w),
                                    tape.constant(feedback), T);
      loss = ad::add(ad::sum(p.mean), ad::sum(p.log_var));
    } else {
      loss = ad::sum(m.decode_observation(tape.constant(z), tape.constant(w),
                                          tape.constant(feedback), T));
    }
    tape.backward(loss);
    std::map<std::string, double> norms;
    for (auto* p : m.parameters().all())
      if (p->name.rfind("decoder.shared.", 0) == 0) norms[p->name] = p->grad.norm();
    return norms;
  };
  const auto a = shared_grads(true), b = shared_grads(false);
  REQUIRE_FALSE(a.empty());
  for (const auto& [name, norm] : a) {
    CAPTURE(name);
    CHECK(norm > 0.0);
    CHECK(b.at(name) > 0.0);
  }
  for (auto* p : m.parameters().all())
    CHECK(p->name.rfind("decoder.prior", 0) != 0);
}

TEST_CASE("elbo gradient matches finite differences on a tiny model") {
  for (const char* variant : kVariants) {
    const std::string variant_name = variant;
    CAPTURE(variant_name);
    ModelConfig c = tiny(variant);
    c.n_layers = 1;
    c.rnn_hidden = 4;
    Dvae m(c, 0);
    const Batch batch = make_batch({random_spec(9, 5, 29), random_spec(9, 5, 30)});
    const double err = grad_check(
        [&](Tape& tape) {
          NoiseSource noise(31);
          return elbo_loss(m.forward_tf(tape, batch, noise), batch, 0.01, 0.01).total;
        },
        m.parameters().all());
    CHECK(err < 1e-3);
  }
}

}  // TEST_SUITE
