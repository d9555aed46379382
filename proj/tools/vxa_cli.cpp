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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vxa/checkpoint.hpp"
#include "vxa/config.hpp"
#include "vxa/domain.hpp"
#include "vxa/scoring.hpp"
#include "vxa/synth.hpp"
#include "vxa/training.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "seed for every stochastic step");
  cmd->add_option("--out", o.out, "output path");
  cmd->add_option("--set", o.overrides, "config override key=value (repeatable)");
}

// File, then --set, then the dedicated flags.
vxa::RunConfig resolve(const CommonOptions& o) {
  vxa::RunConfig rc;
  if (!o.config.empty()) vxa::apply_config_file(rc, o.config);
  for (const auto& s : o.overrides) vxa::apply_override(rc, s);
  if (o.seed) rc.apply_seed(*o.seed);
  if (!o.out.empty()) rc.paths.out = o.out;
  return rc;
}

void require_file(const fs::path& p, const char* key) {
  if (p.empty()) throw vxa::ArgumentError(std::string(key) + " is not set");
  if (!fs::is_regular_file(p)) throw vxa::IoError(std::string(key) + ": no such file " + p.string());
}

void require_out(const vxa::RunConfig& rc) {
  if (rc.paths.out.empty()) throw vxa::ArgumentError("no output path (use --out)");
}

// ---------------------------------------------------------------------------

int cmd_export_synth(const CommonOptions& o, const std::string& manifest_path, std::optional<int> speakers,
                     std::optional<int> utterances, bool force) {
  auto rc = resolve(o);
  require_out(rc);
  if (speakers) rc.synth.speakers = *speakers;
  if (utterances) rc.synth.utterances = *utterances;
  const fs::path manifest_in = !manifest_path.empty() ? fs::path(manifest_path) : rc.paths.manifest;

  vxa::DatasetManifest manifest;
  const bool generated = manifest_in.empty();
  if (generated) {
    manifest = vxa::make_synthetic_manifest(rc.synth.speakers, rc.synth.utterances);
  } else {
    require_file(manifest_in, "manifest");
    manifest = vxa::load_manifest(manifest_in);
  }

  const fs::path dir = rc.paths.out;
  std::map<fs::path, std::string> outputs;
  const auto archives = vxa::export_synthetic(manifest, rc.synth, rc.model.audio_in, rc.model.text_in, rc.seed);
  outputs[dir / "audio.vxa"] = vxa::encode_embedding_archive(archives.audio);
  outputs[dir / "text.vxa"] = vxa::encode_embedding_archive(archives.text);
  if (generated) outputs[dir / "manifest.tsv"] = vxa::format_manifest(manifest);
  const auto dev = vxa::make_trials(manifest, vxa::Split::dev_enroll, vxa::Split::dev_trial);
  const auto test = vxa::make_trials(manifest, vxa::Split::test_enroll, vxa::Split::test_trial);
  if (!dev.empty()) outputs[dir / "dev_trials.tsv"] = vxa::format_trials(dev);
  if (!test.empty()) outputs[dir / "test_trials.tsv"] = vxa::format_trials(test);

  if (!force)
    for (const auto& [path, _] : outputs)
      if (fs::exists(path)) throw vxa::IoError("refusing to overwrite " + path.string() + " (use --force)");
  fs::create_directories(dir);
  for (const auto& [path, bytes] : outputs) vxa::io::atomic_write(path, bytes);

  std::cout << "wrote " << archives.audio.size() << " audio and " << archives.text.size() << " text records for "
            << manifest.size() << " utterances to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct LoadedData {
  vxa::DatasetManifest manifest;
  std::optional<vxa::EmbeddingSet> audio;
  std::optional<vxa::EmbeddingSet> text;
};

LoadedData load_inputs(const vxa::RunConfig& rc, bool need_audio, bool need_text) {
  LoadedData d;
  d.manifest = vxa::load_manifest(rc.paths.manifest);
  if (need_audio) d.audio = vxa::read_embedding_archive(rc.paths.audio_archive);
  if (need_text) d.text = vxa::read_embedding_archive(rc.paths.text_archive);
  if (d.audio && d.audio->modality() != vxa::Modality::audio)
    throw vxa::FormatError(rc.paths.audio_archive.string() + " is not an audio archive");
  if (d.text && d.text->modality() != vxa::Modality::text)
    throw vxa::FormatError(rc.paths.text_archive.string() + " is not a text archive");
  return d;
}

int cmd_train(const CommonOptions& o, bool resume) {
  auto rc = resolve(o);
  require_out(rc);
  require_file(rc.paths.manifest, "manifest");
  require_file(rc.paths.audio_archive, "audio_archive");
  require_file(rc.paths.text_archive, "text_archive");
  require_file(rc.paths.dev_trials, "dev_trials");
  rc.train.validate();

  const fs::path dir = rc.paths.out;
  const fs::path last_path = dir / "last.ckpt", best_path = dir / "best.ckpt", log_path = dir / "metrics.tsv";
  if (resume) {
    require_file(last_path, "resume checkpoint");
    require_file(best_path, "best checkpoint");
  } else if (fs::exists(last_path) || fs::exists(best_path)) {
    throw vxa::IoError("checkpoints already exist in " + dir.string() + " (use --resume to continue)");
  }

  auto data = load_inputs(rc, true, true);
  const auto dev_trials = vxa::load_trials(rc.paths.dev_trials);
  const vxa::TrainingData td{&data.manifest, &*data.audio, &*data.text, &dev_trials};
  if (rc.n_classes_auto) rc.model.n_classes = vxa::TrainingPool(td, rc.train).n_classes();

  vxa::Trainer trainer(rc.model, rc.train, rc.eval, td);
  if (resume) trainer.resume(vxa::read_checkpoint(last_path), vxa::read_checkpoint(best_path));
  std::cerr << "training " << trainer.model().parameter_count() << " parameters, " << trainer.pool().size()
            << " originals, " << trainer.pool().n_classes() << " classes\n";

  fs::create_directories(dir);
  trainer.run([&](const vxa::Trainer& t, const vxa::EpochMetrics& m) {
    vxa::write_checkpoint(t.best_checkpoint(), best_path);
    vxa::write_checkpoint(t.last_checkpoint(), last_path);
    vxa::io::atomic_write(log_path, vxa::format_metric_log(t.progress().log));
    std::fprintf(stderr, "epoch %d  loss %.6f  dev_eer %.4f  lr %.3g\n", m.epoch, m.train_loss, m.dev_eer, m.lr);
  });
  const auto& p = trainer.progress();
  std::cout << "best dev EER " << p.best_eer << " at epoch " << p.best_epoch << " of " << p.epochs_done
            << (trainer.stopped_early() ? " (early stop)" : "") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint) {
  auto rc = resolve(o);
  if (!checkpoint.empty()) rc.paths.checkpoint = checkpoint;
  require_out(rc);
  require_file(rc.paths.checkpoint, "checkpoint");
  require_file(rc.paths.manifest, "manifest");
  const bool audio = rc.eval.mode != vxa::EmbeddingMode::text_only;
  const bool text = rc.eval.mode != vxa::EmbeddingMode::audio_only;
  if (audio) require_file(rc.paths.audio_archive, "audio_archive");
  if (text) require_file(rc.paths.text_archive, "text_archive");
  if (rc.paths.dev_trials.empty() && rc.paths.test_trials.empty())
    throw vxa::ArgumentError("set dev_trials and/or test_trials");
  if (!rc.paths.dev_trials.empty()) require_file(rc.paths.dev_trials, "dev_trials");
  if (!rc.paths.test_trials.empty()) require_file(rc.paths.test_trials, "test_trials");

  auto model = vxa::model_from_checkpoint(vxa::read_checkpoint(rc.paths.checkpoint));
  auto data = load_inputs(rc, audio, text);
  std::vector<vxa::SplitTrials> splits;
  if (!rc.paths.dev_trials.empty()) splits.push_back({"dev", vxa::Split::dev_enroll, vxa::load_trials(rc.paths.dev_trials)});
  if (!rc.paths.test_trials.empty()) splits.push_back({"test", vxa::Split::test_enroll, vxa::load_trials(rc.paths.test_trials)});

  const auto report = vxa::evaluate(*model, data.audio ? &*data.audio : nullptr, data.text ? &*data.text : nullptr,
                                    data.manifest, splits, rc.eval);
  const auto text_report = vxa::format_report(report);
  if (rc.paths.out.has_parent_path()) fs::create_directories(rc.paths.out.parent_path());
  vxa::io::atomic_write(rc.paths.out, text_report);
  std::cout << text_report;
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_inspect_archive(const std::string& path) {
  const auto set = vxa::read_embedding_archive(path);
  std::map<std::string, std::set<std::string>> utts_of;
  std::map<std::string, std::size_t> records_of;
  std::map<std::string, std::size_t> variants_of;
  std::map<vxa::Augmentation, std::size_t> per_tag;
  for (const auto& r : set.records()) {
    utts_of[r.speaker_id].insert(r.utterance_id);
    ++records_of[r.speaker_id];
    ++variants_of[r.utterance_id];
    ++per_tag[r.augmentation];
  }
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& [_, n] : variants_of) lo = std::min(lo, n), hi = std::max(hi, n);

  std::cout << "archive     " << path << "\n"
            << "modality    " << vxa::to_string(set.modality()) << "\n"
            << "dimension   " << set.dimension() << "\n"
            << "records     " << set.size() << "\n"
            << "speakers    " << utts_of.size() << "\n"
            << "utterances  " << variants_of.size() << "\n";
  if (!variants_of.empty()) {
    std::cout << "variants    ";
    if (lo == hi) std::cout << lo << " per utterance\n";
    else std::cout << lo << " to " << hi << " per utterance\n";
  }
  for (auto a : vxa::kAllAugmentations)
    std::cout << "  " << vxa::to_string(a) << "\t" << (per_tag.contains(a) ? per_tag[a] : 0) << "\n";
  for (const auto& [spk, utts] : utts_of)
    std::cout << "speaker " << spk << "\t" << utts.size() << " utterances\t" << records_of[spk] << " records\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vxa: speaker de-anonymization toolkit on precomputed embeddings"};
  app.require_subcommand(1);

  CommonOptions export_opts, train_opts, eval_opts;
  std::string manifest, checkpoint, archive;
  std::optional<int> speakers, utterances;
  bool force = false, resume = false;

  auto* exp = app.add_subcommand("export-synth", "write synthetic audio/text archives and trial lists");
  add_common(exp, export_opts);
  exp->add_option("--manifest", manifest, "manifest to export (default: generate one)");
  exp->add_option("--speakers", speakers, "speakers in the generated manifest")->check(CLI::PositiveNumber);
  exp->add_option("--utterances", utterances, "utterances per speaker in the generated manifest")->check(CLI::PositiveNumber);
  exp->add_flag("--force", force, "overwrite existing outputs");

  auto* train = app.add_subcommand("train", "train the fusion model; writes metrics.tsv, best.ckpt, last.ckpt");
  add_common(train, train_opts);
  train->add_flag("--resume", resume, "continue from last.ckpt in the output directory");

  auto* eval = app.add_subcommand("evaluate", "score trial lists and write an EER report");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate");

  auto* inspect = app.add_subcommand("inspect-archive", "summarize a VXA1 archive");
  inspect->add_option("path", archive, "archive file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*exp) return cmd_export_synth(export_opts, manifest, speakers, utterances, force);
    if (*train) return cmd_train(train_opts, resume);
    if (*eval) return cmd_evaluate(eval_opts, checkpoint);
    if (*inspect) return cmd_inspect_archive(archive);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
