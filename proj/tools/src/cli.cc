// tools/src/cli.cc

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

#include "dvae_cli/cli.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lightdvae/checkpoint.h"
#include "lightdvae/config.h"
#include "lightdvae/data.h"
#include "lightdvae/dsp.h"
#include "lightdvae/error.h"
#include "lightdvae/metrics.h"
#include "lightdvae/model.h"
#include "lightdvae/training.h"

namespace dvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Layout {
  fs::path root, checkpoints, logs, wavs, reports;
};

Layout make_layout(const fs::path& root) {
  Layout l{root, root / "checkpoints", root / "logs", root / "wavs",
           root / "reports"};
  for (const fs::path& p : {l.root, l.checkpoints, l.logs, l.wavs, l.reports})
    fs::create_directories(p);
  return l;
}

RunConfig resolve_config(const std::string& path,
                         const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  cfg.finalize();
  cfg.apply_overrides(overrides);
  return cfg;
}

RunConfig config_from_checkpoint(const CheckpointData& ckpt) {
  json meta = json::parse(ckpt.metadata);
  if (!meta.contains("run_config"))
    throw FormatError("checkpoint has no run_config");
  return RunConfig::from_json(meta["run_config"].dump());
}

std::string checkpoint_metadata(const RunConfig& cfg) {
  json meta;
  meta["run_config"] = json::parse(cfg.to_json());
  return meta.dump();
}

std::vector<fs::path> collect_wavs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const std::string& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (e.is_regular_file() && ext == ".wav") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw ConfigError("input '" + in + "' does not exist");
    }
  }
  if (out.empty()) throw ConfigError("no WAV inputs found");
  return out;
}

std::unique_ptr<Dvae> load_model(const CheckpointData& ckpt,
                                 const RunConfig& cfg) {
  auto model = std::make_unique<Dvae>(cfg.model, cfg.init_seed);
  load_parameters(*model, ckpt);
  return model;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Keeps rows with iteration <= `last` so a resumed run appends seamlessly.
void truncate_log(const fs::path& path, std::int64_t last) {
  if (!fs::exists(path)) return;
  std::ifstream is(path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(is, line)) {
    if (keep.empty()) {
      keep.push_back(line);
      continue;
    }
    if (std::stoll(line.substr(0, line.find('\t'))) <= last) keep.push_back(line);
  }
  is.close();
  std::ofstream os(path, std::ios::trunc);
  for (const std::string& l : keep) os << l << '\n';
}

// ---------------------------------------------------------------------------

struct CommonOpts {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_config_opts(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("-c,--config", o.config, "JSON run configuration");
  cmd->add_option("-s,--set", o.overrides, "Override, e.g. model.d_model=32")
      ->allow_extra_args(false);
}

int cmd_synth_data(const std::string& out_dir, int count, double duration,
                   std::uint64_t seed, std::ostream& out) {
  fs::create_directories(out_dir);
  const std::vector<Waveform> corpus = synth_corpus(count, duration, seed);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%05zu.wav", i);
    save_wav(fs::path(out_dir) / name, corpus[i]);
  }
  out << "wrote " << corpus.size() << " utterances to " << out_dir << '\n';
  return kOk;
}

int cmd_manifest(const CommonOpts& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o.config, o.overrides);
  if (cfg.data.dataset.empty() || !fs::is_directory(cfg.data.dataset))
    throw ConfigError("data.dataset: '" + cfg.data.dataset +
                      "' is not a directory");
  SplitSpec spec;
  spec.valid = cfg.data.valid_fraction;
  spec.test = cfg.data.test_fraction;
  spec.train = 1.0 - spec.valid - spec.test;
  spec.seed = cfg.data.split_seed;
  const Manifest m = build_manifest(cfg.data.dataset, spec);
  const fs::path path = o.out.empty() ? fs::path("manifest.tsv") : fs::path(o.out);
  m.save(path);
  out << "wrote " << m.entries.size() << " entries to " << path.string() << '\n';
  return kOk;
}

Manifest resolve_manifest(const RunConfig& cfg) {
  if (!cfg.data.manifest.empty()) {
    if (!fs::is_regular_file(cfg.data.manifest))
      throw ConfigError("data.manifest: '" + cfg.data.manifest +
                        "' does not exist");
    return Manifest::load(cfg.data.manifest);
  }
  if (cfg.data.dataset.empty())
    throw ConfigError("data.dataset: no dataset directory given");
  if (!fs::is_directory(cfg.data.dataset))
    throw ConfigError("data.dataset: '" + cfg.data.dataset +
                      "' is not a directory");
  SplitSpec spec;
  spec.valid = cfg.data.valid_fraction;
  spec.test = cfg.data.test_fraction;
  spec.train = 1.0 - spec.valid - spec.test;
  spec.seed = cfg.data.split_seed;
  return build_manifest(cfg.data.dataset, spec);
}

std::vector<PowerSpectrogram> split_segments(const Manifest& m, Split split,
                                             const RunConfig& cfg) {
  std::vector<Waveform> wavs;
  for (const ManifestEntry& e : m.select(split)) wavs.push_back(load_wav(e.path));
  if (wavs.empty()) return {};
  return prepare_segments(wavs, cfg.stft, cfg.data.segment_frames,
                          cfg.data.silence_db);
}

int cmd_train(const CommonOpts& o, const std::string& resume, std::ostream& out,
              std::ostream& err) {
  if (o.out.empty()) throw ConfigError("--out: output directory required");
  CheckpointData resume_ckpt;
  RunConfig cfg;
  if (!resume.empty()) {
    resume_ckpt = load_checkpoint(resume);
    cfg = config_from_checkpoint(resume_ckpt);
    cfg.apply_overrides(o.overrides);
  } else {
    cfg = resolve_config(o.config, o.overrides);
  }
  const Manifest manifest = resolve_manifest(cfg);
  std::vector<PowerSpectrogram> train = split_segments(manifest, Split::kTrain, cfg);
  if (train.empty())
    throw ConfigError("data.dataset: no training segments of " +
                      std::to_string(cfg.data.segment_frames) + " frames");
  std::vector<PowerSpectrogram> valid;
  if (cfg.train.valid_every > 0) valid = split_segments(manifest, Split::kValid, cfg);

  const Layout layout = make_layout(o.out);
  save_run_config(layout.root / "config.json", cfg);
  manifest.save(layout.root / "manifest.tsv");

  Dvae model(cfg.model, cfg.init_seed);
  err << "model " << cfg.model.variant() << ": " << model.count_params()
      << " parameters, " << train.size() << " training segments\n";
  Trainer trainer(model, std::move(train), cfg.optim, cfg.train);
  if (!resume.empty()) trainer.restore(resume_ckpt);

  const fs::path log_path = layout.logs / "train.tsv";
  const fs::path valid_path = layout.logs / "valid.tsv";
  if (resume.empty()) {
    std::ofstream(log_path, std::ios::trunc) << kTrainLogHeader << '\n';
    if (!valid.empty())
      std::ofstream(valid_path, std::ios::trunc)
          << "iteration\ttotal\trecon_is\tkl_z\tkl_w\n";
  } else {
    truncate_log(log_path, trainer.iteration());
    truncate_log(valid_path, trainer.iteration());
  }
  std::ofstream log(log_path, std::ios::app);
  const std::string meta = checkpoint_metadata(cfg);
  auto save = [&](Trainer& t) {
    char name[48];
    std::snprintf(name, sizeof(name), "iter_%08lld.ckpt",
                  static_cast<long long>(t.iteration()));
    const CheckpointData data = t.checkpoint(meta);
    save_checkpoint(layout.checkpoints / name, data);
    save_checkpoint(layout.checkpoints / "last.ckpt", data);
  };
  auto validate = [&](Trainer& t) {
    if (valid.empty()) return;
    const LossBreakdown l = t.evaluate(valid, cfg.train.seed);
    std::ofstream(valid_path, std::ios::app)
        << t.iteration() << '\t' << fmt(l.total) << '\t' << fmt(l.recon_is)
        << '\t' << fmt(l.kl_z) << '\t' << fmt(l.kl_w) << '\n';
    err << "iteration " << t.iteration() << " valid loss " << fmt(l.total) << '\n';
  };
  trainer.run(&log, save, validate);
  save(trainer);
  out << "trained " << trainer.iteration() << " iterations, final loss "
      << fmt(trainer.last_loss().total) << '\n';
  return kOk;
}

int cmd_resynth(const std::string& checkpoint, const std::vector<std::string>& inputs,
                const CommonOpts& o, const std::string& mode,
                const std::string& seed, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("--out: output directory required");
  const CheckpointData ckpt = load_checkpoint(checkpoint);
  RunConfig cfg = config_from_checkpoint(ckpt);
  cfg.apply_overrides(o.overrides);
  if (!mode.empty()) cfg.apply_override("eval.mode=" + mode);
  if (!seed.empty()) cfg.apply_override("eval.seed=" + seed);
  const FeedbackMode fm = cfg.feedback_mode();
  const auto model = load_model(ckpt, cfg);
  const Layout layout = make_layout(o.out);

  NoiseSource noise(cfg.eval.seed);
  MetricReport report;
  for (const fs::path& p : collect_wavs(inputs)) {
    const Waveform x = preprocess_waveform(load_wav(p), cfg.data.silence_db);
    const ComplexSpectrogram spec = stft(x, cfg.stft);
    if (spec.frames() < 1) throw Error(p.string() + ": shorter than one frame");
    const Waveform ref = istft(spec, cfg.stft, x.sample_rate);
    const PowerSpectrogram power = power_spectrogram(spec);
    const PowerSpectrogram v = model->resynthesize(power, fm, noise);
    const Waveform est = resynthesize_waveform(spec, v, x.sample_rate);
    save_wav(layout.wavs / (p.stem().string() + "." + cfg.eval.mode + ".wav"), est);
    report.utterances.push_back({p.stem().string(), rmse(ref, est),
                                 si_sdr(ref, est),
                                 log_spectral_distance(power, v)});
  }
  const std::string base = "resynth_" + cfg.eval.mode;
  report.write_tsv(layout.reports / (base + ".tsv"));
  report.write_json(layout.reports / (base + ".json"));
  const UtteranceMetrics m = report.mean();
  out << cfg.eval.mode << " rmse " << fmt(m.rmse) << " si_sdr " << fmt(m.si_sdr)
      << " dB lsd " << fmt(m.lsd) << " dB over " << report.utterances.size()
      << " utterances\n";
  return kOk;
}

int cmd_generate(const std::string& checkpoint, const CommonOpts& o, int count,
                 int frames, const std::string& seed, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("--out: output directory required");
  const CheckpointData ckpt = load_checkpoint(checkpoint);
  RunConfig cfg = config_from_checkpoint(ckpt);
  cfg.apply_overrides(o.overrides);
  if (count >= 0) cfg.apply_override("eval.generate_count=" + std::to_string(count));
  if (frames >= 0) cfg.apply_override("eval.generate_frames=" + std::to_string(frames));
  if (!seed.empty()) cfg.apply_override("eval.seed=" + seed);
  const auto model = load_model(ckpt, cfg);
  const Layout layout = make_layout(o.out);

  NoiseSource noise(cfg.eval.seed);
  std::ofstream report(layout.reports / "generate.tsv");
  report << "name\tframes\tspectral_convergence\n";
  for (int i = 0; i < cfg.eval.generate_count; ++i) {
    const PowerSpectrogram v = model->generate(cfg.eval.generate_frames, noise);
    const GriffinLimResult gl =
        griffin_lim(v.values.array().sqrt().matrix(), cfg.stft,
                    cfg.eval.griffin_lim_iters, kSampleRate);
    char name[32];
    std::snprintf(name, sizeof(name), "gen_%04d", i);
    save_wav(layout.wavs / (std::string(name) + ".wav"), gl.waveform);
    const double sc = gl.convergence.empty() ? 0.0 : gl.convergence.back();
    report << name << '\t' << v.frames() << '\t' << fmt(sc) << '\n';
  }
  out << "generated " << cfg.eval.generate_count << " utterances of "
      << cfg.eval.generate_frames << " frames\n";
  return kOk;
}

int cmd_eval(const std::string& ref_in, const std::string& est_in,
             const CommonOpts& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o.config, o.overrides);
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(ref_in)) {
    if (!fs::is_directory(est_in))
      throw ConfigError("--est: must be a directory when --ref is one");
    for (const fs::path& r : collect_wavs({ref_in})) {
      fs::path e = fs::path(est_in) / r.filename();
      if (!fs::exists(e))
        throw ConfigError("--est: missing estimate for " + r.filename().string());
      pairs.emplace_back(r, e);
    }
  } else {
    if (!fs::is_regular_file(ref_in)) throw ConfigError("--ref: '" + ref_in + "' does not exist");
    if (!fs::is_regular_file(est_in)) throw ConfigError("--est: '" + est_in + "' does not exist");
    pairs.emplace_back(ref_in, est_in);
  }
  MetricReport report;
  for (const auto& [rp, ep] : pairs) {
    Waveform r = load_wav(rp), e = load_wav(ep);
    const std::size_t n = std::min(r.samples.size(), e.samples.size());
    r.samples.resize(n);
    e.samples.resize(n);
    double lsd = std::numeric_limits<double>::quiet_NaN();
    if (cfg.stft.num_frames(n) >= 1)
      lsd = log_spectral_distance(power_spectrogram(stft(r, cfg.stft)),
                                  power_spectrogram(stft(e, cfg.stft)));
    report.utterances.push_back({rp.stem().string(), rmse(r, e), si_sdr(r, e), lsd});
  }
  const fs::path dir = o.out.empty() ? fs::path(".") : make_layout(o.out).reports;
  report.write_tsv(dir / "eval.tsv");
  report.write_json(dir / "eval.json");
  const UtteranceMetrics m = report.mean();
  out << "rmse " << fmt(m.rmse) << " si_sdr " << fmt(m.si_sdr) << " dB lsd "
      << fmt(m.lsd) << " dB over " << report.utterances.size() << " pairs\n";
  return kOk;
}

int cmd_params(const std::string& checkpoint, const CommonOpts& o,
               std::ostream& out) {
  RunConfig cfg;
  if (!checkpoint.empty()) {
    cfg = config_from_checkpoint(load_checkpoint(checkpoint));
    cfg.apply_overrides(o.overrides);
  } else {
    cfg = resolve_config(o.config, o.overrides);
  }
  const Dvae model(cfg.model, cfg.init_seed);
  const ParameterCounts c = model.parameter_counts();
  out << "variant\t" << cfg.model.variant() << '\n'
      << "w_encoder\t" << c.w_encoder << '\n'
      << "z_encoder\t" << c.z_encoder << '\n'
      << "decoder_stack\t" << model.prior_decoder().num_params() << '\n'
      << "decoders\t" << c.decoders << '\n'
      << "heads\t" << c.heads << '\n'
      << "total\t" << c.total << '\n';
  return kOk;
}

int cmd_gradcheck(const CommonOpts& o, int frames, std::uint64_t seed,
                  std::ostream& out) {
  RunConfig cfg;
  cfg.stft.window_length = 16;  // F = 9
  cfg.stft.hop = 4;
  cfg.model.d_model = 8;
  cfg.model.n_layers = 1;
  cfg.model.d_ff = 16;
  cfg.model.latent_z = 2;
  cfg.model.latent_w = 3;
  cfg.model.rnn_hidden = 4;
  if (!o.config.empty()) cfg = load_run_config(o.config);
  cfg.apply_overrides(o.overrides);
  cfg.finalize();

  Dvae model(cfg.model, cfg.init_seed);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-3.0, 1.0);
  std::vector<PowerSpectrogram> seqs(2);
  for (PowerSpectrogram& s : seqs) {
    s.values.resize(cfg.model.bins, frames);
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
      s.values.data()[i] = std::exp(u(rng));
  }
  const Batch batch = make_batch(seqs);
  const ParamScalarFn f = [&](ad::Tape& tape) {
    NoiseSource noise(seed);
    const ForwardOutput fo = model.forward_tf(tape, batch, noise);
    return elbo_loss(fo, batch, cfg.train.beta_w, cfg.train.beta_z).total;
  };
  const double err = grad_check(f, model.parameters().all());
  const bool ok = err < 1e-3;
  out << "variant " << cfg.model.variant() << " params " << model.count_params()
      << " max_rel_err " << err << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? kOk : kNumericalError;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Transformer dynamical VAEs for speech power spectrograms", "dvae"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string resume, checkpoint, mode, seed_text, ref_in, est_in, out_dir;
  std::vector<std::string> inputs;
  int count = -1, frames = -1, synth_count = 200;
  double duration = 2.0;
  std::uint64_t seed = 0;

  CLI::App* train = app.add_subcommand("train", "Train a model on a WAV corpus");
  add_config_opts(train, common);
  train->add_option("-o,--out", common.out, "Run output directory")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");

  CLI::App* resynth = app.add_subcommand("resynth", "Analysis-resynthesis of WAV files");
  add_config_opts(resynth, common);
  resynth->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  resynth->add_option("-i,--input", inputs, "WAV files or directories")->required();
  resynth->add_option("-o,--out", common.out, "Output directory")->required();
  resynth->add_option("--mode", mode, "TF or GEN");
  resynth->add_option("--seed", seed_text, "Sampling seed");

  CLI::App* generate = app.add_subcommand("generate", "Sample utterances from the prior");
  add_config_opts(generate, common);
  generate->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  generate->add_option("-o,--out", common.out, "Output directory")->required();
  generate->add_option("-n,--count", count, "Number of utterances");
  generate->add_option("-T,--frames", frames, "Frames per utterance");
  generate->add_option("--seed", seed_text, "Sampling seed");

  CLI::App* eval = app.add_subcommand("eval", "Score estimate WAVs against references");
  add_config_opts(eval, common);
  eval->add_option("--ref", ref_in, "Reference WAV file or directory")->required();
  eval->add_option("--est", est_in, "Estimate WAV file or directory")->required();
  eval->add_option("-o,--out", common.out, "Output directory for reports/");

  CLI::App* synth = app.add_subcommand("synth-data", "Write a synthetic harmonic corpus");
  synth->add_option("-o,--out", out_dir, "Output directory")->required();
  synth->add_option("-n,--count", synth_count, "Number of utterances");
  synth->add_option("-d,--duration", duration, "Seconds per utterance");
  synth->add_option("--seed", seed, "Corpus seed");

  CLI::App* manifest = app.add_subcommand("manifest", "Build a split manifest for data.dataset");
  add_config_opts(manifest, common);
  manifest->add_option("-o,--out", common.out, "Manifest path");

  CLI::App* params = app.add_subcommand("params", "Per-module parameter counts");
  add_config_opts(params, common);
  params->add_option("--checkpoint", checkpoint, "Model checkpoint");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the ELBO");
  add_config_opts(gradcheck, common);
  int gc_frames = 5;
  gradcheck->add_option("-T,--frames", gc_frames, "Frames per sequence");
  gradcheck->add_option("--seed", seed, "Data and noise seed");

  std::vector<std::string> rev(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "dvae: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (train->parsed()) return cmd_train(common, resume, out, err);
    if (resynth->parsed())
      return cmd_resynth(checkpoint, inputs, common, mode, seed_text, out);
    if (generate->parsed())
      return cmd_generate(checkpoint, common, count, frames, seed_text, out);
    if (eval->parsed()) return cmd_eval(ref_in, est_in, common, out);
    if (synth->parsed()) return cmd_synth_data(out_dir, synth_count, duration, seed, out);
    if (manifest->parsed()) return cmd_manifest(common, out);
    if (params->parsed()) return cmd_params(checkpoint, common, out);
    if (gradcheck->parsed()) return cmd_gradcheck(common, gc_frames, seed, out);
  } catch (const NumericalError& e) {
    err << "dvae: numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const ConfigError& e) {
    err << "dvae: config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const Error& e) {
    err << "dvae: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "dvae: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace dvae::cli
