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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vxa/domain.hpp"
#include "vxa/errors.hpp"
#include "vxa/fusion_model.hpp"
#include "vxa/io.hpp"
#include "vxa/random.hpp"

namespace vxa {

inline Eigen::VectorXd l2_normalize(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInputError("l2_normalize: zero or non-finite vector");
  return v / n;
}

struct SpeakerCentroid {
  std::string speaker_id;
  Eigen::VectorXd vector;  // unit norm
};

/// Mean of the raw embeddings, then L2-normalized.
inline SpeakerCentroid enroll(const std::string& speaker_id, std::span<const Eigen::VectorXd> embeddings) {
  if (embeddings.empty()) throw ArgumentError("enroll: no embeddings for speaker " + speaker_id);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(embeddings.front().size());
  for (const auto& e : embeddings) {
    if (e.size() != sum.size()) throw ShapeError("enroll: embeddings differ in dimension");
    sum += e;
  }
  try {
    return {speaker_id, l2_normalize(sum / static_cast<double>(embeddings.size()))};
  } catch (const DegenerateInputError&) {
    throw DegenerateInputError("enroll: embeddings of speaker " + speaker_id + " average to zero");
  }
}

inline double cosine_score(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_score: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateInputError("cosine_score: zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Adaptive score normalization.

/// Unit-norm cohort embeddings (one per row) and the number of closest
/// cohort scores used on each side of a trial.
class CohortStats {
 public:
  CohortStats(Eigen::MatrixXd embeddings, int top_k) : embeddings_(std::move(embeddings)), top_k_(top_k) {
    if (top_k_ < 2) throw ArgumentError("AS-norm top-K must be at least 2");
    if (top_k_ > embeddings_.rows())
      throw ArgumentError("AS-norm top-K " + std::to_string(top_k_) + " exceeds cohort size " +
                          std::to_string(embeddings_.rows()));
    for (Eigen::Index r = 0; r < embeddings_.rows(); ++r) {
      const double n = embeddings_.row(r).norm();
      if (!(n > 0.0)) throw DegenerateInputError("cohort embedding " + std::to_string(r) + " is zero");
      embeddings_.row(r) /= n;
    }
  }

  const Eigen::MatrixXd& embeddings() const { return embeddings_; }
  int top_k() const { return top_k_; }
  Eigen::Index size() const { return embeddings_.rows(); }

 private:
  Eigen::MatrixXd embeddings_;
  int top_k_;
};

/// Mean and population standard deviation of the K highest scores.
struct TopKStats {
  double mean = 0.0;
  double stddev = 0.0;
};

inline constexpr double kAsNormStdFloor = 1e-6;

inline TopKStats top_k_stats(std::vector<double> scores, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > scores.size())
    throw ArgumentError("top-K " + std::to_string(k) + " exceeds the " + std::to_string(scores.size()) +
                        " available cohort scores");
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end(), std::greater<>());
  const auto top = std::span(scores).first(static_cast<std::size_t>(k));
  const double mean = std::accumulate(top.begin(), top.end(), 0.0) / k;
  double var = 0.0;
  for (double s : top) var += (s - mean) * (s - mean);
  return {mean, std::max(std::sqrt(var / k), kAsNormStdFloor)};
}

/// Statistics of one trial side (an enrollment centroid or a test embedding)
/// against the cohort.
inline TopKStats cohort_side_stats(const Eigen::VectorXd& embedding, const CohortStats& cohort) {
  if (embedding.size() != cohort.embeddings().cols()) throw ShapeError("AS-norm: cohort dimension mismatch");
  const Eigen::VectorXd scores = cohort.embeddings() * l2_normalize(embedding);
  return top_k_stats({scores.data(), scores.data() + scores.size()}, cohort.top_k());
}

/// s' = ((s - mu_e) / sigma_e + (s - mu_t) / sigma_t) / 2
inline double as_norm(double raw, const TopKStats& enroll_side, const TopKStats& test_side) {
  return 0.5 * ((raw - enroll_side.mean) / enroll_side.stddev + (raw - test_side.mean) / test_side.stddev);
}

inline double as_norm(double raw, const Eigen::VectorXd& enroll_emb, const Eigen::VectorXd& test_emb,
                      const CohortStats& cohort) {
  return as_norm(raw, cohort_side_stats(enroll_emb, cohort), cohort_side_stats(test_emb, cohort));
}

// ---------------------------------------------------------------------------
// Equal error rate.

/// Sweeps thresholds over the distinct scores (and +inf). At threshold t,
/// FAR = fraction of nontargets >= t and FRR = fraction of targets < t.
/// Returns the crossing FAR = FRR, linearly interpolated between the two ROC
/// points that bracket it. Result is a proportion in [0, 1].
inline double compute_eer(std::vector<double> targets, std::vector<double> nontargets) {
  if (targets.empty() || nontargets.empty()) throw ArgumentError("compute_eer: both score lists must be non-empty");
  for (const auto* list : {&targets, &nontargets})
    for (double s : *list)
      if (std::isnan(s)) throw NumericError("compute_eer: NaN score");
  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());
  const auto n_tgt = static_cast<double>(targets.size());
  const auto n_non = static_cast<double>(nontargets.size());

  std::size_t below_t = 0;  // targets strictly below the current threshold
  std::size_t below_n = 0;  // nontargets strictly below it
  double prev_far = 1.0, prev_frr = 0.0;
  while (true) {
    double far, frr;
    const bool done = below_t == targets.size() && below_n == nontargets.size();
    if (done) {
      far = 0.0;
      frr = 1.0;
    } else {
      far = (n_non - static_cast<double>(below_n)) / n_non;
      frr = static_cast<double>(below_t) / n_tgt;
    }
    const double gap = far - frr;
    if (gap <= 0.0) {
      if (gap == 0.0) return far;
      const double prev_gap = prev_far - prev_frr;
      const double t = prev_gap / (prev_gap - gap);
      return prev_far + t * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
    double threshold = std::numeric_limits<double>::infinity();
    if (below_t < targets.size()) threshold = targets[below_t];
    if (below_n < nontargets.size()) threshold = std::min(threshold, nontargets[below_n]);
    while (below_t < targets.size() && targets[below_t] <= threshold) ++below_t;
    while (below_n < nontargets.size() && nontargets[below_n] <= threshold) ++below_n;
  }
}

// ---------------------------------------------------------------------------
// Report.

struct EerEntry {
  std::string split;
  Gender gender;
  double eer_percent;
};

/// Per (split, gender) EERs, per-split means over genders, and the mean of
/// the split means.
struct EerReport {
  std::vector<EerEntry> entries;
  std::vector<std::pair<std::string, double>> split_average;
  double eer_avg = 0.0;

  double average(const std::string& split) const {
    for (const auto& [name, v] : split_average)
      if (name == split) return v;
    throw ArgumentError("no split " + split + " in report");
  }

  std::optional<double> eer(const std::string& split, Gender g) const {
    for (const auto& e : entries)
      if (e.split == split && e.gender == g) return e.eer_percent;
    return std::nullopt;
  }

  /// Fills the averages from `entries`.
  void finalize() {
    split_average.clear();
    std::vector<std::string> order;
    for (const auto& e : entries)
      if (std::find(order.begin(), order.end(), e.split) == order.end()) order.push_back(e.split);
    double total = 0.0;
    for (const auto& split : order) {
      double sum = 0.0;
      int n = 0;
      for (const auto& e : entries)
        if (e.split == split) sum += e.eer_percent, ++n;
      split_average.emplace_back(split, sum / n);
      total += sum / n;
    }
    eer_avg = order.empty() ? 0.0 : total / static_cast<double>(order.size());
  }
};

inline constexpr std::string_view kReportHeader = "split\tgender\teer_percent";

namespace detail {
inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
}  // namespace detail

/// TSV with one row per (split, gender), a `<split> avg` row per split and a
/// closing `EER_avg avg` row; two decimals throughout.
inline std::string format_report(const EerReport& r) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& [split, avg] : r.split_average) {
    for (const auto& e : r.entries)
      if (e.split == split) out += e.split + '\t' + std::string(to_string(e.gender)) + '\t' + detail::fixed2(e.eer_percent) + '\n';
    out += split + "\tavg\t" + detail::fixed2(avg) + '\n';
  }
  out += "EER_avg\tavg\t" + detail::fixed2(r.eer_avg) + '\n';
  return out;
}

inline EerReport parse_report(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  if (lines.empty() || lines[0] != kReportHeader) throw ParseError(path.string() + ": bad report header", 1);
  EerReport r;
  bool saw_total = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = io::split_tabs(lines[i]);
    if (f.size() != 3) throw ParseError(path.string() + ": expected 3 fields", i + 1);
    double v;
    try {
      v = std::stod(f[2]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": bad number '" + f[2] + "'", i + 1);
    }
    if (f[0] == "EER_avg") {
      r.eer_avg = v;
      saw_total = true;
    } else if (f[1] == "avg") {
      r.split_average.emplace_back(f[0], v);
    } else if (auto g = parse_gender(f[1])) {
      r.entries.push_back({f[0], *g, v});
    } else {
      throw ParseError(path.string() + ": unknown gender '" + f[1] + "'", i + 1);
    }
  }
  if (!saw_total) throw ParseError(path.string() + ": missing EER_avg row", lines.size());
  return r;
}

// ---------------------------------------------------------------------------
// End-to-end evaluation.

struct EvalConfig {
  bool use_as_norm = true;
  EmbeddingMode mode = EmbeddingMode::fusion;
  int cohort_top_k = 1000;
  int cohort_pool = 40000;  // training utterances sampled for the cohort
  std::uint64_t seed = 0;
};

/// A trial list together with the manifest split its enrollment speakers
/// are drawn from.
struct SplitTrials {
  std::string name;
  Split enroll_split = Split::dev_enroll;
  TrialSet trials;
};

/// Embeds utterances through the model in eval mode. Either archive may be
/// absent when the mode does not use it.
class EmbeddingExtractor {
 public:
  EmbeddingExtractor(FusionModel& model, const EmbeddingSet* audio, const EmbeddingSet* text, EmbeddingMode mode)
      : model_(model), audio_(audio), text_(text), mode_(mode) {
    if (mode != EmbeddingMode::text_only && !audio) throw ArgumentError(std::string(to_string(mode)) + " mode needs an audio archive");
    if (mode != EmbeddingMode::audio_only && !text) throw ArgumentError(std::string(to_string(mode)) + " mode needs a text archive");
    if (audio && audio->dimension() != static_cast<std::uint32_t>(model.config().audio_in))
      throw ShapeError("audio archive dimension " + std::to_string(audio->dimension()) + " does not match model");
    if (text && text->dimension() != static_cast<std::uint32_t>(model.config().text_in))
      throw ShapeError("text archive dimension " + std::to_string(text->dimension()) + " does not match model");
  }

  /// Keys absent from the archives the mode requires.
  std::vector<std::string> missing(const std::vector<std::string>& utterances) const {
    std::vector<std::string> out;
    for (const auto& u : utterances) {
      if (uses_audio() && !audio_->find(u)) out.push_back(u + " (audio)");
      if (uses_text() && !text_->find(u)) out.push_back(u + " (text)");
    }
    return out;
  }

  /// One embedding per utterance (rows), using `original` records.
  Eigen::MatrixXd embed(const std::vector<std::string>& utterances) {
    const auto dim = model_.embedding_dim(mode_);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(utterances.size()), dim);
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < utterances.size(); start += kChunk) {
      const auto n = std::min(kChunk, utterances.size() - start);
      nn::Matrix a, t;
      if (uses_audio()) a = gather(*audio_, utterances, start, n);
      if (uses_text()) t = gather(*text_, utterances, start, n);
      out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
          model_.extract_embedding(uses_audio() ? &a : nullptr, uses_text() ? &t : nullptr, mode_);
    }
    return out;
  }

 private:
  bool uses_audio() const { return mode_ != EmbeddingMode::text_only; }
  bool uses_text() const { return mode_ != EmbeddingMode::audio_only; }

  static nn::Matrix gather(const EmbeddingSet& set, const std::vector<std::string>& utts, std::size_t start, std::size_t n) {
    nn::Matrix m(static_cast<Eigen::Index>(n), set.dimension());
    for (std::size_t i = 0; i < n; ++i) {
      const auto* rec = set.find(utts[start + i]);
      if (!rec) throw ArgumentError("missing embedding for " + utts[start + i]);
      for (std::uint32_t j = 0; j < set.dimension(); ++j) m(static_cast<Eigen::Index>(i), j) = rec->vector[j];
    }
    return m;
  }

  FusionModel& model_;
  const EmbeddingSet* audio_;
  const EmbeddingSet* text_;
  EmbeddingMode mode_;
};

/// Seeded uniform sample (without replacement) of up to `pool` training
/// utterances, embedded in the evaluation mode.
inline CohortStats build_cohort(EmbeddingExtractor& extractor, const DatasetManifest& manifest, const EvalConfig& cfg) {
  std::vector<std::string> train;
  for (const auto* e : manifest.select(Split::train)) train.push_back(e->utterance_id);
  Rng rng(derive_seed(cfg.seed, 0xC0408));
  rng.shuffle(train.begin(), train.end());
  if (static_cast<int>(train.size()) > cfg.cohort_pool) train.resize(static_cast<std::size_t>(cfg.cohort_pool));
  if (auto gaps = extractor.missing(train); !gaps.empty())
    throw ArgumentError("missing cohort embeddings: " + gaps.front() + (gaps.size() > 1 ? " and " + std::to_string(gaps.size() - 1) + " more" : ""));
  return CohortStats(extractor.embed(train), cfg.cohort_top_k);
}

struct ScoredTrials {
  std::vector<double> scores;  // aligned with the trial list
};

/// Scores every trial of one split: centroid from the enrollment split,
/// cosine against the test embedding, then AS-norm when a cohort is given.
inline ScoredTrials score_trials(EmbeddingExtractor& extractor, const DatasetManifest& manifest, const SplitTrials& split,
                                 const CohortStats* cohort) {
  std::vector<std::string> speakers, tests;
  std::map<std::string, std::size_t> speaker_pos, test_pos;
  for (const auto& t : split.trials) {
    if (speaker_pos.emplace(t.enroll_speaker, speakers.size()).second) speakers.push_back(t.enroll_speaker);
    if (test_pos.emplace(t.test_utterance, tests.size()).second) tests.push_back(t.test_utterance);
  }

  std::vector<std::string> problems;
  std::vector<std::vector<std::string>> enroll_utts;
  for (const auto& s : speakers) {
    enroll_utts.push_back(manifest.utterances_of(s, split.enroll_split));
    if (enroll_utts.back().empty()) problems.push_back("speaker " + s + " has no " + std::string(to_string(split.enroll_split)) + " utterances");
    for (auto& m : extractor.missing(enroll_utts.back())) problems.push_back(m);
  }
  for (auto& m : extractor.missing(tests)) problems.push_back(m);
  if (!problems.empty()) {
    std::string msg = split.name + ": missing embeddings:";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += " " + problems[i] + ";";
    if (problems.size() > 20) msg += " ... (" + std::to_string(problems.size()) + " total)";
    throw ArgumentError(msg);
  }

  std::vector<Eigen::VectorXd> centroids;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    const Eigen::MatrixXd e = extractor.embed(enroll_utts[i]);
    std::vector<Eigen::VectorXd> rows;
    for (Eigen::Index r = 0; r < e.rows(); ++r) rows.emplace_back(e.row(r).transpose());
    centroids.push_back(enroll(speakers[i], rows).vector);
  }
  const Eigen::MatrixXd test_emb = extractor.embed(tests);

  std::vector<TopKStats> enroll_stats, test_stats;
  if (cohort) {
    for (const auto& c : centroids) enroll_stats.push_back(cohort_side_stats(c, *cohort));
    for (Eigen::Index r = 0; r < test_emb.rows(); ++r) test_stats.push_back(cohort_side_stats(test_emb.row(r).transpose(), *cohort));
  }

  ScoredTrials out;
  out.scores.reserve(split.trials.size());
  for (const auto& t : split.trials) {
    const auto si = speaker_pos[t.enroll_speaker];
    const auto ti = test_pos[t.test_utterance];
    const double raw = cosine_score(centroids[si], test_emb.row(static_cast<Eigen::Index>(ti)).transpose());
    out.scores.push_back(cohort ? as_norm(raw, enroll_stats[si], test_stats[ti]) : raw);
  }
  return out;
}

/// EER per (split, gender) in percent, averaged over genders and then over
/// splits.
inline EerReport evaluate(FusionModel& model, const EmbeddingSet* audio, const EmbeddingSet* text,
                          const DatasetManifest& manifest, const std::vector<SplitTrials>& splits, const EvalConfig& cfg) {
  EmbeddingExtractor extractor(model, audio, text, cfg.mode);
  std::optional<CohortStats> cohort;
  if (cfg.use_as_norm) cohort.emplace(build_cohort(extractor, manifest, cfg));
  EerReport report;
  for (const auto& split : splits) {
    if (split.trials.empty()) throw ArgumentError(split.name + ": empty trial list");
    const auto scored = score_trials(extractor, manifest, split, cohort ? &*cohort : nullptr);
    for (Gender g : {Gender::F, Gender::M}) {
      std::vector<double> tgt, non;
      for (std::size_t i = 0; i < split.trials.size(); ++i) {
        const auto& t = split.trials.trials()[i];
        if (t.gender != g) continue;
        (t.label == Label::target ? tgt : non).push_back(scored.scores[i]);
      }
      if (tgt.empty() && non.empty()) continue;
      if (tgt.empty() || non.empty())
        throw ArgumentError(split.name + "/" + std::string(to_string(g)) + ": needs both target and nontarget trials");
      report.entries.push_back({split.name, g, 100.0 * compute_eer(std::move(tgt), std::move(non))});
    }
  }
  report.finalize();
  return report;
}

}  // namespace vxa
