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

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vxa/domain.hpp"
#include "vxa/errors.hpp"
#include "vxa/fusion_model.hpp"
#include "vxa/io.hpp"
#include "vxa/optim.hpp"
#include "vxa/scoring.hpp"

namespace vxa {

/// Settings of the synthetic fixture generator.
struct SynthConfig {
  double sample_rate = 8000.0;
  double seconds = 1.0;
  int n_bins = 24;
  int time_mask_max_width = 10;
  int freq_mask_max_width = 4;
  double speed_delta = 0.1;      // speed factor drawn from {1 - d, 1 + d}
  double text_content_noise = 2.0;  // per-utterance spread around the speaker's text centroid
  int speakers = 20;
  int utterances = 20;
};

enum class AugmentationKind { spec_augment, anonymized_mix };

struct TrainConfig {
  int batch_size = 32;
  int originals_per_batch = 8;
  int max_epochs = 25;
  int early_stop_patience = 10;
  nn::LrSchedule lr;
  nn::AdamWOptions adamw;
  std::set<AugmentationKind> augmentation;
  /// Source tags admitted to the training pool; the first is the primary
  /// set, the rest join only with anonymized_mix. Empty means every tag.
  std::vector<std::string> datasets;
  std::uint64_t seed = 0;

  bool spec_augment() const { return augmentation.contains(AugmentationKind::spec_augment); }

  /// Originals drawn per batch: with augmentation each one brings three
  /// tagged variants along.
  int originals_needed() const { return spec_augment() ? originals_per_batch : batch_size; }

  void validate() const {
    if (batch_size < 1 || originals_per_batch < 1) throw ArgumentError("batch sizes must be positive");
    if (spec_augment() && originals_per_batch * 4 != batch_size)
      throw ArgumentError("with spec_augment, batch_size must equal 4 x originals_per_batch (" +
                          std::to_string(originals_per_batch) + " x 4 != " + std::to_string(batch_size) + ")");
    if (max_epochs < 1) throw ArgumentError("max_epochs must be positive");
    if (early_stop_patience < 0 || early_stop_patience > max_epochs)
      throw ArgumentError("early_stop_patience must lie in [0, max_epochs]");
    lr.validate();
  }
};

struct RunPaths {
  std::filesystem::path manifest;
  std::filesystem::path audio_archive;
  std::filesystem::path text_archive;
  std::filesystem::path dev_trials;
  std::filesystem::path test_trials;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
};

/// Everything a command needs, settable from a key=value file whose keys
/// are the field names of the structures above.
struct RunConfig {
  ModelConfig model;
  bool n_classes_auto = true;  // take n_classes from the training speakers
  TrainConfig train;
  EvalConfig eval;
  SynthConfig synth;
  RunPaths paths;
  std::uint64_t seed = 0;

  RunConfig() { eval.cohort_top_k = 1000; }

  /// Propagates the run seed into every component.
  void apply_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    eval.seed = s;
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ArgumentError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ArgumentError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(text) + "'");
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(',', start);
    auto item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
std::string format_number(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
    return std::string(buf, ptr);
  } else {
    return std::to_string(v);
  }
}

}  // namespace detail

/// Key -> (setter, getter) table over a RunConfig.
class ConfigKeys {
 public:
  explicit ConfigKeys(RunConfig& c) {
    num("audio_in", c.model.audio_in);
    num("text_in", c.model.text_in);
    num("proj_dim", c.model.proj_dim);
    num("confidence_hidden", c.model.confidence_hidden);
    num("gate_hidden", c.model.gate_hidden);
    add("n_classes",
        [&c](std::string_view v) {
          if (v == "auto") {
            c.n_classes_auto = true;
          } else {
            c.model.n_classes = detail::parse_number<int>("n_classes", v);
            c.n_classes_auto = false;
          }
        },
        [&c] { return c.n_classes_auto ? std::string("auto") : std::to_string(c.model.n_classes); });
    num("dropout_audio", c.model.dropout_audio);
    num("dropout_text", c.model.dropout_text);
    num("aam_scale", c.model.aam_scale);
    num("aam_margin", c.model.aam_margin);
    num("lambda_e", c.model.lambda_e);
    num("lambda_f", c.model.lambda_f);
    num("lambda_a", c.model.lambda_a);
    num("lambda_t", c.model.lambda_t);
    num("layer_norm_eps", c.model.layer_norm_eps);

    num("batch_size", c.train.batch_size);
    num("originals_per_batch", c.train.originals_per_batch);
    num("max_epochs", c.train.max_epochs);
    num("early_stop_patience", c.train.early_stop_patience);
    num("lr_min", c.train.lr.lr_min);
    num("lr_max", c.train.lr.lr_max);
    num("cycle_steps", c.train.lr.cycle_steps);
    num("weight_decay", c.train.adamw.weight_decay);
    num("adam_beta1", c.train.adamw.beta1);
    num("adam_beta2", c.train.adamw.beta2);
    num("adam_eps", c.train.adamw.eps);
    add("augmentation",
        [&c](std::string_view v) {
          c.train.augmentation.clear();
          for (const auto& item : detail::split_list(v)) {
            if (item == "none") continue;
            if (item == "spec_augment") c.train.augmentation.insert(AugmentationKind::spec_augment);
            else if (item == "anonymized_mix") c.train.augmentation.insert(AugmentationKind::anonymized_mix);
            else throw ArgumentError("augmentation: unknown kind '" + item + "'");
          }
        },
        [&c] {
          std::string out;
          if (c.train.augmentation.contains(AugmentationKind::spec_augment)) out = "spec_augment";
          if (c.train.augmentation.contains(AugmentationKind::anonymized_mix)) out += out.empty() ? "anonymized_mix" : ",anonymized_mix";
          return out.empty() ? std::string("none") : out;
        });
    add("datasets", [&c](std::string_view v) { c.train.datasets = detail::split_list(v); },
        [&c] {
          std::string out;
          for (const auto& d : c.train.datasets) out += (out.empty() ? "" : ",") + d;
          return out;
        });
    add("seed", [&c](std::string_view v) { c.apply_seed(detail::parse_number<std::uint64_t>("seed", v)); },
        [&c] { return std::to_string(c.seed); });

    add("use_as_norm", [&c](std::string_view v) { c.eval.use_as_norm = detail::parse_bool("use_as_norm", v); },
        [&c] { return std::string(c.eval.use_as_norm ? "true" : "false"); });
    add("mode_select",
        [&c](std::string_view v) {
          auto m = parse_embedding_mode(v);
          if (!m) throw ArgumentError("mode_select: expected fusion, text_only or audio_only, got '" + std::string(v) + "'");
          c.eval.mode = *m;
        },
        [&c] { return std::string(to_string(c.eval.mode)); });
    num("cohort_top_k", c.eval.cohort_top_k);
    num("cohort_pool", c.eval.cohort_pool);

    num("synth_sample_rate", c.synth.sample_rate);
    num("synth_seconds", c.synth.seconds);
    num("synth_bins", c.synth.n_bins);
    num("time_mask_max_width", c.synth.time_mask_max_width);
    num("freq_mask_max_width", c.synth.freq_mask_max_width);
    num("speed_delta", c.synth.speed_delta);
    num("text_content_noise", c.synth.text_content_noise);
    num("synth_speakers", c.synth.speakers);
    num("synth_utterances", c.synth.utterances);

    path("manifest", c.paths.manifest);
    path("audio_archive", c.paths.audio_archive);
    path("text_archive", c.paths.text_archive);
    path("dev_trials", c.paths.dev_trials);
    path("test_trials", c.paths.test_trials);
    path("checkpoint", c.paths.checkpoint);
    path("out", c.paths.out);
  }

  void set(const std::string& key, std::string_view value) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ArgumentError("unknown config key '" + key + "'");
    it->second.first(value);
  }

  std::string get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ArgumentError("unknown config key '" + key + "'");
    return it->second.second();
  }

  std::vector<std::string> keys() const { return order_; }

 private:
  using Setter = std::function<void(std::string_view)>;
  using Getter = std::function<std::string()>;

  void add(std::string key, Setter s, Getter g) {
    order_.push_back(key);
    entries_.emplace(std::move(key), std::pair{std::move(s), std::move(g)});
  }

  template <typename T>
  void num(std::string key, T& field) {
    const std::string k = key;
    add(std::move(key), [&field, k](std::string_view v) { field = detail::parse_number<T>(k, v); },
        [&field] { return detail::format_number(field); });
  }

  void path(std::string key, std::filesystem::path& field) {
    add(std::move(key), [&field](std::string_view v) { field = std::filesystem::path(std::string(v)); },
        [&field] { return field.string(); });
  }

  std::map<std::string, std::pair<Setter, Getter>> entries_;
  std::vector<std::string> order_;
};

/// Applies `key = value` lines. Blank lines and `#` comments are skipped;
/// unknown keys and malformed lines are errors.
inline void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin = "config") {
  ConfigKeys keys(config);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const auto body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(origin + ": expected key = value", number);
    try {
      keys.set(detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
    } catch (const ArgumentError& e) {
      throw ParseError(origin + ": " + e.what(), number);
    }
  }
}

inline void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  apply_config_text(config, std::string_view(bytes.data(), bytes.size()), path.string());
}

/// `key=value` override as given on the command line.
inline void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ArgumentError("override '" + std::string(assignment) + "' is not key=value");
  ConfigKeys(config).set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Serializes every key; relative order follows the registration order.
inline std::string format_config(RunConfig& config) {
  ConfigKeys keys(config);
  std::string out;
  for (const auto& k : keys.keys()) out += k + " = " + keys.get(k) + "\n";
  return out;
}

/// ModelConfig subset only, used inside checkpoints.
inline std::string format_model_config(const ModelConfig& m) {
  RunConfig rc;
  rc.model = m;
  rc.n_classes_auto = false;
  ConfigKeys keys(rc);
  std::string out;
  for (const char* k : {"audio_in", "text_in", "proj_dim", "confidence_hidden", "gate_hidden", "n_classes",
                        "dropout_audio", "dropout_text", "aam_scale", "aam_margin", "lambda_e", "lambda_f", "lambda_a",
                        "lambda_t", "layer_norm_eps"})
    out += std::string(k) + " = " + keys.get(k) + "\n";
  return out;
}

inline ModelConfig parse_model_config(std::string_view text) {
  RunConfig rc;
  apply_config_text(rc, text, "checkpoint model config");
  return rc.model;
}

}  // namespace vxa
