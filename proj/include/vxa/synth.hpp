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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vxa/config.hpp"
#include "vxa/domain.hpp"
#include "vxa/errors.hpp"
#include "vxa/frontend.hpp"
#include "vxa/random.hpp"

namespace vxa {

/// FNV-1a, used to give every identifier its own seed stream.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Speakers split 60/20/20 into train/dev/test with alternating genders. For
/// dev and test speakers the first quarter of utterances is enrollment and
/// the rest are trials.
inline DatasetManifest make_synthetic_manifest(int speakers, int utterances) {
  if (speakers < 1 || utterances < 1) throw ArgumentError("synthetic manifest needs at least one speaker and utterance");
  const int n_train = std::max(1, static_cast<int>(std::lround(0.6 * speakers)));
  const int n_dev = (speakers - n_train) / 2;
  const int n_enroll = std::max(1, utterances / 4);
  DatasetManifest m;
  char buf[64];
  for (int s = 0; s < speakers; ++s) {
    std::snprintf(buf, sizeof buf, "spk%03d", s);
    const std::string spk = buf;
    const Gender gender = s % 2 == 0 ? Gender::F : Gender::M;
    for (int u = 0; u < utterances; ++u) {
      std::snprintf(buf, sizeof buf, "%s_u%03d", spk.c_str(), u);
      Split split = Split::train;
      if (s >= n_train) {
        const bool dev = s < n_train + n_dev;
        const bool enrolled = u < n_enroll || utterances == 1;
        split = dev ? (enrolled ? Split::dev_enroll : Split::dev_trial) : (enrolled ? Split::test_enroll : Split::test_trial);
      }
      m.add(ManifestEntry{buf, spk, gender, split, "synthetic"});
    }
  }
  return m;
}

namespace detail {

struct Formant {
  double freq;
  double bandwidth;
};

/// Per-speaker source and vocal-tract parameters.
struct Voice {
  double f0;
  std::vector<Formant> formants;
  double tilt;   // dB per kHz
  double noise;  // relative to the voiced part
};

inline Voice make_voice(std::uint64_t seed, Gender gender) {
  Rng rng(seed);
  Voice v;
  v.f0 = gender == Gender::F ? rng.uniform(170.0, 260.0) : rng.uniform(85.0, 160.0);
  v.formants = {{rng.uniform(300.0, 900.0), rng.uniform(60.0, 160.0)},
                {rng.uniform(900.0, 2300.0), rng.uniform(80.0, 200.0)},
                {rng.uniform(2300.0, 3600.0), rng.uniform(100.0, 260.0)}};
  v.tilt = rng.uniform(-9.0, -3.0);
  v.noise = rng.uniform(0.02, 0.12);
  return v;
}

/// Harmonic source shaped by the voice's formants, with an utterance-level
/// pitch and formant wobble and a syllable-like amplitude envelope.
inline Waveform render_utterance(const Voice& voice, std::uint64_t seed, double sample_rate, double seconds) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::lround(sample_rate * seconds));
  if (n < 2) throw ArgumentError("synthetic utterance too short");
  const double f0 = voice.f0 * rng.uniform(0.93, 1.07);
  const double shift = rng.uniform(0.96, 1.04);
  const double nyquist = 0.5 * sample_rate;

  std::vector<double> amp, freq, phase;
  for (int k = 1; k * f0 < nyquist * 0.95; ++k) {
    const double f = k * f0;
    double gain = 0.0;
    for (const auto& fm : voice.formants) {
      const double d = (f - fm.freq * shift) / fm.bandwidth;
      gain += std::exp(-0.5 * d * d);
    }
    gain = (gain + 0.05) * std::pow(10.0, voice.tilt * f / 1000.0 / 20.0);
    amp.push_back(gain);
    freq.push_back(f);
    phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
  }

  const int syllables = static_cast<int>(rng.uniform_int(3, 6));
  std::vector<double> level(static_cast<std::size_t>(syllables));
  for (auto& l : level) l = rng.uniform(0.3, 1.0);

  Waveform w{std::vector<double>(n), sample_rate};
  const double vibrato_rate = rng.uniform(3.0, 6.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double pos = static_cast<double>(i) / static_cast<double>(n) * syllables;
    const auto syl = std::min(static_cast<std::size_t>(pos), level.size() - 1);
    const double envelope = level[syl] * std::pow(std::sin(std::numbers::pi * (pos - std::floor(pos))), 2.0);
    const double bend = 1.0 + 0.01 * std::sin(2.0 * std::numbers::pi * vibrato_rate * t);
    double s = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) s += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * bend * t + phase[k]);
    w.samples[i] = envelope * s + voice.noise * rng.normal();
  }
  return w;
}

inline EmbeddingRecord make_record(const ManifestEntry& e, Modality m, Augmentation a, const std::vector<double>& v) {
  EmbeddingRecord r{e.speaker_id, e.utterance_id, m, a, {}};
  r.vector.assign(v.begin(), v.end());
  return r;
}

}  // namespace detail

struct SynthArchives {
  EmbeddingSet audio;
  EmbeddingSet text;
};

/// Builds both archives for every manifest entry: four audio records
/// (original plus the three tagged variants) and one text record. Output
/// depends only on (manifest, config, dims, seed).
inline SynthArchives export_synthetic(const DatasetManifest& manifest, const SynthConfig& cfg, int audio_dim, int text_dim,
                                      std::uint64_t seed) {
  if (audio_dim < 1 || text_dim < 1) throw ArgumentError("export: embedding dimensions must be positive");
  if (cfg.n_bins < 2) throw ArgumentError("export: synth_bins must be >= 2");
  if (!(cfg.speed_delta > 0.0 && cfg.speed_delta < 1.0)) throw ArgumentError("export: speed_delta must lie in (0, 1)");
  if (!(cfg.text_content_noise >= 0.0)) throw ArgumentError("export: text_content_noise must be non-negative");
  SynthArchives out{EmbeddingSet(static_cast<std::uint32_t>(audio_dim), Modality::audio),
                    EmbeddingSet(static_cast<std::uint32_t>(text_dim), Modality::text)};

  const std::uint64_t backbone_seed = derive_seed(seed, 0xBAC4B0);
  constexpr int kTopicDim = 32;
  Rng projection_rng(derive_seed(seed, 0x7E47));
  Eigen::MatrixXd text_projection(text_dim, kTopicDim);
  for (Eigen::Index i = 0; i < text_projection.size(); ++i)
    text_projection.data()[i] = projection_rng.normal() / std::sqrt(static_cast<double>(kTopicDim));

  std::map<std::string, std::pair<detail::Voice, Eigen::VectorXd>> speakers;
  for (const auto& e : manifest.entries()) {
    if (speakers.contains(e.speaker_id)) continue;
    const auto spk_seed = derive_seed(seed, stable_hash(e.speaker_id));
    Rng topic_rng(derive_seed(spk_seed, 1));
    Eigen::VectorXd topic(kTopicDim);
    for (auto& x : topic) x = topic_rng.normal();
    speakers.emplace(e.speaker_id, std::pair{detail::make_voice(spk_seed, e.gender), topic});
  }

  for (const auto& e : manifest.entries()) {
    const auto& [voice, topic] = speakers.at(e.speaker_id);
    const auto utt_seed = derive_seed(seed, stable_hash(e.utterance_id));
    const Waveform raw = detail::render_utterance(voice, derive_seed(utt_seed, 0), cfg.sample_rate, cfg.seconds);
    const Waveform wave = preprocess_waveform(raw, 10.0, derive_seed(utt_seed, 1), CropPolicy::center);
    const FeatureMatrix feats = synthetic_features(wave, cfg.n_bins);

    auto embed = [&](const FeatureMatrix& f) { return synthetic_backbone(f, audio_dim, backbone_seed); };
    Rng aug_rng(derive_seed(utt_seed, 2));
    const double factor = aug_rng.bernoulli(0.5) ? 1.0 + cfg.speed_delta : 1.0 - cfg.speed_delta;
    const int time_width = std::min(cfg.time_mask_max_width, static_cast<int>(feats.rows()));
    const int freq_width = std::min(cfg.freq_mask_max_width, static_cast<int>(feats.cols()));

    out.audio.add(detail::make_record(e, Modality::audio, Augmentation::original, embed(feats)));
    out.audio.add(detail::make_record(e, Modality::audio, Augmentation::time_mask,
                                      embed(time_mask(feats, time_width, derive_seed(utt_seed, 3)))));
    out.audio.add(detail::make_record(e, Modality::audio, Augmentation::freq_mask,
                                      embed(freq_mask(feats, freq_width, derive_seed(utt_seed, 4)))));
    out.audio.add(detail::make_record(e, Modality::audio, Augmentation::speed,
                                      embed(synthetic_features(speed_perturb(wave, factor), cfg.n_bins))));

    Rng content_rng(derive_seed(utt_seed, 5));
    Eigen::VectorXd content = topic;
    for (auto& x : content) x += cfg.text_content_noise * content_rng.normal();
    const Eigen::VectorXd pooled = (text_projection * content).array().tanh();
    out.text.add(detail::make_record(e, Modality::text, Augmentation::original,
                                     std::vector<double>(pooled.data(), pooled.data() + pooled.size())));
  }
  return out;
}

}  // namespace vxa
