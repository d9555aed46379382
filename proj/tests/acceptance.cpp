// Copyright 2026 The vxa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "test_util.hpp"
#include "vxa/checkpoint.hpp"
#include "vxa/domain.hpp"
#include "vxa/fusion_model.hpp"
#include "vxa/io.hpp"
#include "vxa/nn.hpp"
#include "vxa/optim.hpp"
#include "vxa/scoring.hpp"
#include "vxa/synth.hpp"
#include "vxa/training.hpp"

namespace fs = std::filesystem;
using namespace vxa;
using nn::Matrix;
using testing::random_matrix;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-22s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---------------------------------------------------------------------------

Outcome parameter_count() {
  const auto start = std::chrono::steady_clock::now();
  FusionModel model(ModelConfig{}, 1);
  const auto n = model.parameter_count();
  const double secs = seconds_since(start);
  return {n == 3335045u && secs < 1.0, "count " + std::to_string(n) + fmt(" (expected 3335045) in %.3fs", secs)};
}

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_at;
  auto note = [&](double err, const std::string& what) {
    if (err > worst || std::isnan(err)) worst = std::isnan(err) ? INFINITY : err, worst_at = what;
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(9000 + seed);
    const auto tag = " seed " + std::to_string(seed);
    {
      nn::Linear fc("fc", 5, 4);
      fc.init(rng);
      fc.bias().value = random_matrix(rng, 1, 4);
      nn::Parameter x("x", random_matrix(rng, 3, 5));
      std::vector<nn::Parameter*> ps;
      fc.collect(ps);
      note(testing::check_layer(ps, x, random_matrix(rng, 3, 4), [&](const Matrix& in) { return fc.forward(in); },
                                [&](const Matrix& dy) { return fc.backward(dy); }),
           "linear" + tag);
    }
    {
      nn::LayerNorm ln("ln", 6);
      ln.gain().value = random_matrix(rng, 1, 6);
      ln.shift().value = random_matrix(rng, 1, 6);
      nn::Parameter x("x", random_matrix(rng, 3, 6));
      std::vector<nn::Parameter*> ps;
      ln.collect(ps);
      note(testing::check_layer(ps, x, random_matrix(rng, 3, 6), [&](const Matrix& in) { return ln.forward(in); },
                                [&](const Matrix& dy) { return ln.backward(dy); }),
           "layernorm" + tag);
    }
    {
      nn::Parameter x("x", random_matrix(rng, 3, 7, 2.0));
      const Matrix probe = random_matrix(rng, 3, 7);
      Matrix c;
      note(testing::check_layer({}, x, probe, [&](const Matrix& in) { return c = in, nn::gelu(in); },
                                [&](const Matrix& dy) { return nn::gelu_backward(c, dy); }),
           "gelu" + tag);
      note(testing::check_layer({}, x, probe, [&](const Matrix& in) { return c = in, nn::relu(in); },
                                [&](const Matrix& dy) { return nn::relu_backward(c, dy); }),
           "relu" + tag);
      note(testing::check_layer({}, x, probe, [&](const Matrix& in) { return c = nn::sigmoid(in); },
                                [&](const Matrix& dy) { return nn::sigmoid_backward(c, dy); }),
           "sigmoid" + tag);
      note(testing::check_layer({}, x, probe, [&](const Matrix& in) { return c = nn::softmax(in); },
                                [&](const Matrix& dy) { return nn::softmax_backward(c, dy); }),
           "softmax" + tag);
      nn::Dropout drop(0.3);
      note(testing::check_layer({}, x, probe,
                                [&](const Matrix& in) {
                                  Rng fixed(seed);
                                  return drop.forward(in, nn::Mode::train, fixed);
                                },
                                [&](const Matrix& dy) { return drop.backward(dy); }),
           "dropout" + tag);
    }
    {
      nn::CosineClassifier head("head", 5, 4);
      head.init(rng);
      nn::Parameter x("x", random_matrix(rng, 3, 5));
      std::vector<nn::Parameter*> ps;
      head.collect(ps);
      note(testing::check_layer(ps, x, random_matrix(rng, 3, 4), [&](const Matrix& in) { return head.forward(in); },
                                [&](const Matrix& dy) { return head.backward(dy); }),
           "cosine head" + tag);
    }
    {
      nn::Parameter cos("cos", Matrix(4, 6));
      for (Eigen::Index i = 0; i < cos.value.size(); ++i) cos.value.data()[i] = rng.uniform(-0.999, 0.999);
      cos.value(3, 2) = -0.995;
      const std::vector<int> y = {0, 5, 3, 2};
      const nn::AamParams p{30.0, 0.15};
      note(nn::gradient_check({&cos}, [&] { return nn::aam_loss(cos.value, y, p, &cos.grad); },
                              [&] { return nn::aam_loss(cos.value, y, p); }),
           "aam loss" + tag);
    }
    {
      ModelConfig c;
      c.audio_in = 6;
      c.text_in = 7;
      c.proj_dim = 5;
      c.confidence_hidden = 4;
      c.gate_hidden = 6;
      c.n_classes = 4;
      FusionModel model(c, 500 + seed);
      const Matrix audio = random_matrix(rng, 3, 6), text = random_matrix(rng, 3, 7);
      const std::vector<int> y = {0, 2, 3};
      auto run = [&](bool backward) {
        Rng unused(0);
        if (backward) model.zero_grad();
        return model.loss(model.forward(audio, text, nn::Mode::eval, unused), y, backward).total;
      };
      for (auto* p : model.parameters())
        note(nn::gradient_check({p}, [&] { return run(true); }, [&] { return run(false); }, 1e-5),
             "total loss " + p->name + tag);
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-4 && secs < 60.0,
          fmt("max rel err %.2e over 20 seeds, 9 layers + total loss, %.1fs", worst, secs) + " (worst: " + worst_at + ")"};
}

Outcome aam_reduction() {
  Rng rng(77);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int classes = static_cast<int>(rng.uniform_int(2, 12));
    Matrix cos(1, classes);
    for (Eigen::Index j = 0; j < classes; ++j) cos(0, j) = rng.uniform(-1, 1);
    const int y = static_cast<int>(rng.uniform_int(0, classes - 1));
    const double s = rng.uniform(1, 64);
    worst = std::max(worst, std::abs(nn::aam_loss(cos, std::vector<int>{y}, nn::AamParams{s, 0.0}) -
                                     nn::softmax_cross_entropy(s * cos, {y})));
  }
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    Matrix cos(1, 5);
    for (Eigen::Index j = 0; j < 5; ++j) cos(0, j) = rng.uniform(-1, 1);
    const int y = static_cast<int>(rng.uniform_int(0, 4));
    double prev = -1.0;
    for (double m : {0.0, 0.05, 0.1, 0.15, 0.2}) {
      const double l = nn::aam_loss(cos, std::vector<int>{y}, nn::AamParams{30.0, m});
      if (l < prev) ++violations;
      prev = l;
    }
  }
  return {worst <= 1e-12 && violations == 0,
          fmt("m=0 max |diff| %.1e over 1000 cases; ", worst) + std::to_string(violations) + " margin-grid violations"};
}

double brute_force_eer(const std::vector<double>& tgt, const std::vector<double>& non) {
  std::vector<double> all = tgt;
  all.insert(all.end(), non.begin(), non.end());
  std::sort(all.begin(), all.end());
  std::vector<double> th = {-INFINITY, INFINITY};
  for (std::size_t i = 0; i < all.size(); ++i) {
    th.push_back(all[i]);
    if (i + 1 < all.size()) th.push_back(0.5 * (all[i] + all[i + 1]));
  }
  std::sort(th.begin(), th.end());
  std::vector<std::pair<double, double>> roc;
  for (double t : th) {
    double fa = 0, fr = 0;
    for (double s : non) fa += s >= t;
    for (double s : tgt) fr += s < t;
    roc.emplace_back(fa / static_cast<double>(non.size()), fr / static_cast<double>(tgt.size()));
  }
  for (std::size_t i = 0; i < roc.size(); ++i) {
    const double d = roc[i].first - roc[i].second;
    if (d == 0) return roc[i].first;
    if (d < 0) {
      const double dp = roc[i - 1].first - roc[i - 1].second;
      return roc[i - 1].first + dp / (dp - d) * (roc[i].first - roc[i - 1].first);
    }
  }
  return NAN;
}

Outcome eer_oracle() {
  Rng rng(31);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> tgt, non;
    const auto nt = rng.uniform_int(1, 50), nn_ = rng.uniform_int(1, 50);
    const double shift = rng.uniform(-1, 3);
    const bool coarse = i % 3 == 0;  // ties
    for (std::int64_t k = 0; k < nt; ++k) tgt.push_back(coarse ? std::round(rng.normal() + shift) : rng.normal() + shift);
    for (std::int64_t k = 0; k < nn_; ++k) non.push_back(coarse ? std::round(rng.normal()) : rng.normal());
    const double d = std::abs(compute_eer(tgt, non) - brute_force_eer(tgt, non));
    worst = std::isnan(d) ? INFINITY : std::max(worst, d);
  }
  const double perfect = compute_eer({0.9, 0.8, 0.7}, {0.1, 0.2, 0.3});
  std::vector<double> a, b;
  for (int k = 0; k < 10000; ++k) a.push_back(rng.normal()), b.push_back(rng.normal());
  const double same = compute_eer(a, b);
  return {worst <= 1e-9 && perfect == 0.0 && std::abs(same - 0.5) <= 0.02,
          fmt("max |diff| %.1e over 1000 cases; perfect %.3f; same-distribution %.4f", worst, perfect, same)};
}

Outcome as_norm_oracle() {
  const double example = as_norm(0.5, top_k_stats({0.1, 0.3, -0.5, -0.2}, 2), top_k_stats({0.4, 0.2, 0.0}, 2));
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 60));
    const int k = static_cast<int>(rng.uniform_int(2, n));
    const int dim = static_cast<int>(rng.uniform_int(2, 10));
    const Eigen::MatrixXd cohort = random_matrix(rng, n, dim);
    const Eigen::VectorXd e = random_matrix(rng, dim, 1), t = random_matrix(rng, dim, 1);
    const double raw = cosine_score(e, t);
    auto side = [&](const Eigen::VectorXd& v) {
      std::vector<double> s;
      for (int r = 0; r < n; ++r) s.push_back(cohort.row(r).dot(v) / (cohort.row(r).norm() * v.norm()));
      std::sort(s.rbegin(), s.rend());
      double mean = 0, var = 0;
      for (int i = 0; i < k; ++i) mean += s[static_cast<std::size_t>(i)] / k;
      for (int i = 0; i < k; ++i) var += std::pow(s[static_cast<std::size_t>(i)] - mean, 2) / k;
      return std::pair{mean, std::max(std::sqrt(var), 1e-6)};
    };
    const auto [me, se] = side(e);
    const auto [mt, st] = side(t);
    const double expected = 0.5 * ((raw - me) / se + (raw - mt) / st);
    worst = std::max(worst, std::abs(as_norm(raw, e, t, CohortStats(cohort, k)) - expected));
  }
  return {std::abs(example - 2.5) <= 1e-12 && worst <= 1e-9,
          fmt("hand example %.12f (expected 2.5); brute-force max |diff| %.1e over 500 cases", example, worst)};
}

Outcome cyclic_lr_check() {
  const nn::LrSchedule s;
  const double a = nn::cyclic_lr(0, s), b = nn::cyclic_lr(6500, s), c = nn::cyclic_lr(13000, s);
  bool periodic = true;
  for (std::int64_t t = 0; t < 13000; ++t)
    for (int cycle = 1; cycle <= 3; ++cycle)
      periodic = periodic && nn::cyclic_lr(t + 13000 * cycle, s) == nn::cyclic_lr(t, s);
  return {a == 1e-6 && b == 1e-4 && c == 1e-6 && periodic,
          fmt("lr(0)=%g lr(6500)=%g lr(13000)=%g", a, b, c) + (periodic ? "; periodic over 3 cycles" : "; NOT periodic")};
}

Outcome batch_recipe() {
  const auto manifest = make_synthetic_manifest(20, 20);
  const auto archives = export_synthetic(manifest, SynthConfig{}, 192, 768, 1);
  const auto dev = make_trials(manifest, Split::dev_enroll, Split::dev_trial);
  const TrainingData data{&manifest, &archives.audio, &archives.text, &dev};
  int bad = 0, batches = 0;
  TrainConfig aug;
  aug.augmentation = {AugmentationKind::spec_augment};
  TrainingPool pool_aug(data, aug);
  for (int epoch = 1; epoch <= 3; ++epoch)
    for (const auto& idx : epoch_batches(pool_aug.size(), aug, epoch)) {
      const auto b = assemble_batch(pool_aug, aug, idx);
      ++batches;
      std::map<std::string, std::set<Augmentation>> tags;
      int originals = 0;
      for (std::size_t i = 0; i < b.tags.size(); ++i) {
        tags[b.utterances[i]].insert(b.tags[i]);
        originals += b.tags[i] == Augmentation::original;
      }
      bool ok = b.labels.size() == 32 && originals == 8 && tags.size() == 8;
      for (const auto& [u, t] : tags) ok = ok && t.size() == 4;
      bad += !ok;
    }
  TrainConfig none;
  TrainingPool pool_none(data, none);
  for (int epoch = 1; epoch <= 3; ++epoch)
    for (const auto& idx : epoch_batches(pool_none.size(), none, epoch)) {
      const auto b = assemble_batch(pool_none, none, idx);
      ++batches;
      const std::set<std::string> distinct(b.utterances.begin(), b.utterances.end());
      bad += !(b.labels.size() == 32 && distinct.size() == 32 &&
               std::all_of(b.tags.begin(), b.tags.end(), [](auto t) { return t == Augmentation::original; }));
    }
  return {bad == 0 && batches > 0, std::to_string(batches) + " batches checked (8 + 24 augmented, 32 plain), " +
                                       std::to_string(bad) + " malformed"};
}

Outcome format_round_trip() {
  Rng rng(5);
  int mismatches = 0, cases = 0;
  const auto dir = fs::temp_directory_path() / ("vxa_accept_fmt_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  for (int trial = 0; trial < 200; ++trial) {
    const auto dim = static_cast<std::uint32_t>(rng.uniform_int(1, 40));
    const auto modality = rng.bernoulli(0.5) ? Modality::audio : Modality::text;
    const auto n = trial == 0 ? 0 : trial == 1 ? 1 : rng.uniform_int(0, 30);
    EmbeddingSet set(dim, modality);
    for (std::int64_t r = 0; r < n; ++r) {
      EmbeddingRecord rec{"spk" + std::to_string(rng.uniform_int(0, 5)), "utt_\xc3\xa9" + std::to_string(r), modality,
                          modality == Modality::audio ? kAllAugmentations[static_cast<std::size_t>(rng.uniform_int(0, 3))]
                                                      : Augmentation::original,
                          {}};
      for (std::uint32_t j = 0; j < dim; ++j) rec.vector.push_back(static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-30, 30))));
      set.add(rec);
    }
    const auto bytes = encode_embedding_archive(set);
    const auto path = dir / "a.vxa";
    write_embedding_archive(set, path);
    const auto back = read_embedding_archive(path);
    const auto raw = io::read_file(path);
    ++cases;
    mismatches += !(back == set && encode_embedding_archive(back) == bytes && std::string(raw.begin(), raw.end()) == bytes);
  }
  fs::remove_all(dir);
  return {mismatches == 0, std::to_string(cases) + " archives (incl. empty and 1-record), " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------------------
// End-to-end through the command-line tool.

struct EndToEnd {
  fs::path work;
  std::string cli;
  std::string config;

  int run(const std::string& args, const std::string& log) const {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + (work / log).string() + "\" 2>&1";
    return std::system(cmd.c_str());
  }

  std::string paths() const {
    const auto d = work / "synth";
    return " --config \"" + config + "\" --set manifest=" + (d / "manifest.tsv").string() +
           " --set audio_archive=" + (d / "audio.vxa").string() + " --set text_archive=" + (d / "text.vxa").string() +
           " --set dev_trials=" + (d / "dev_trials.tsv").string() + " --set test_trials=" + (d / "test_trials.tsv").string();
  }
};

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : io::read_lines(p)) rows.push_back(io::split_tabs(line));
  return rows;
}

std::string slurp(const fs::path& p) {
  const auto b = io::read_file(p);
  return {b.begin(), b.end()};
}

Outcome end_to_end(const EndToEnd& e2e) {
  const auto start = std::chrono::steady_clock::now();
  if (e2e.run("export-synth --speakers 20 --utterances 20 --seed 1 --out \"" + (e2e.work / "synth").string() + "\"", "export.log"))
    return {false, "export-synth failed: " + slurp(e2e.work / "export.log")};
  if (e2e.run("train" + e2e.paths() + " --seed 1 --out \"" + (e2e.work / "run_a").string() + "\"", "train_a.log"))
    return {false, "train failed: " + slurp(e2e.work / "train_a.log")};
  const auto best = (e2e.work / "run_a" / "best.ckpt").string();
  if (e2e.run("evaluate" + e2e.paths() + " --seed 1 --checkpoint \"" + best + "\" --out \"" + (e2e.work / "fusion.tsv").string() + "\"",
              "eval_fusion.log"))
    return {false, "evaluate failed: " + slurp(e2e.work / "eval_fusion.log")};
  if (e2e.run("evaluate" + e2e.paths() + " --seed 1 --set mode_select=text_only --checkpoint \"" + best + "\" --out \"" +
                  (e2e.work / "text_only.tsv").string() + "\"",
              "eval_text.log"))
    return {false, "text_only evaluate failed: " + slurp(e2e.work / "eval_text.log")};
  const double secs = seconds_since(start);

  const auto log = read_tsv(e2e.work / "run_a" / "metrics.tsv");
  const auto epochs = log.size() - 1;
  bool monotone = epochs >= 5;
  std::string losses;
  for (std::size_t i = 1; i <= 5 && i < log.size(); ++i) {
    losses += (i > 1 ? " " : "") + log[i][1].substr(0, 6);
    if (i > 1) monotone = monotone && std::stod(log[i][1]) < std::stod(log[i - 1][1]);
  }
  const auto fusion = parse_report(e2e.work / "fusion.tsv");
  const auto text = parse_report(e2e.work / "text_only.tsv");
  const double dev = fusion.average("dev");
  const double text_dev = text.average("dev");
  const bool pass = epochs <= 25 && dev <= 5.0 && monotone && secs <= 600.0 && text_dev < 40.0;
  return {pass, fmt("dev EER %.2f%% (<= 5), text_only dev EER %.2f%% (< 40), ", dev, text_dev) +
                    std::to_string(epochs) + " epochs, first-5 losses [" + losses + "]" + (monotone ? " decreasing" : " NOT decreasing") +
                    fmt(", pipeline %.1fs (<= 600)", secs)};
}

Outcome determinism(const EndToEnd& e2e) {
  if (e2e.run("train" + e2e.paths() + " --seed 1 --out \"" + (e2e.work / "run_b").string() + "\"", "train_b.log"))
    return {false, "second train failed: " + slurp(e2e.work / "train_b.log")};
  const auto a = e2e.work / "run_a", b = e2e.work / "run_b";
  const bool logs = slurp(a / "metrics.tsv") == slurp(b / "metrics.tsv");
  const auto ca = read_checkpoint(a / "last.ckpt"), cb = read_checkpoint(b / "last.ckpt");
  bool params = ca.params.size() == cb.params.size();
  for (std::size_t i = 0; params && i < ca.params.size(); ++i) params = ca.params[i].second == cb.params[i].second;
  const bool best = slurp(a / "best.ckpt") == slurp(b / "best.ckpt");
  return {logs && params && best, std::string("metric logs ") + (logs ? "identical" : "DIFFER") + ", final parameters " +
                                      (params ? "identical" : "DIFFER") + ", best checkpoints " + (best ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  report("parameter-count", parameter_count);
  report("gradient-suite", gradient_suite);
  report("aam-reduction", aam_reduction);
  report("eer-oracle", eer_oracle);
  report("as-norm-oracle", as_norm_oracle);
  report("cyclic-lr", cyclic_lr_check);

  EndToEnd e2e{fs::temp_directory_path() / ("vxa_accept_" + std::to_string(::getpid())), VXA_CLI_PATH,
               VXA_SOURCE_DIR "/configs/synthetic.cfg"};
  fs::remove_all(e2e.work);
  fs::create_directories(e2e.work);
  report("end-to-end-synthetic", [&] { return end_to_end(e2e); });
  report("batch-recipe", batch_recipe);
  report("format-round-trip", format_round_trip);
  report("determinism", [&] { return determinism(e2e); });
  fs::remove_all(e2e.work);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
