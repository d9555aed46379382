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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "vxa/errors.hpp"
#include "vxa/io.hpp"

namespace vxa {

enum class Modality : std::uint8_t { audio = 0, text = 1 };
enum class Augmentation : std::uint8_t { original = 0, time_mask = 1, freq_mask = 2, speed = 3 };
enum class Label : std::uint8_t { target, nontarget };
enum class Gender : std::uint8_t { F, M };
enum class Split : std::uint8_t { train, dev_enroll, dev_trial, test_enroll, test_trial };

inline constexpr std::array<Augmentation, 4> kAllAugmentations = {
    Augmentation::original, Augmentation::time_mask, Augmentation::freq_mask, Augmentation::speed};

inline std::string_view to_string(Modality m) { return m == Modality::audio ? "audio" : "text"; }
inline std::string_view to_string(Label l) { return l == Label::target ? "target" : "nontarget"; }
inline std::string_view to_string(Gender g) { return g == Gender::F ? "F" : "M"; }

inline std::string_view to_string(Augmentation a) {
  switch (a) {
    case Augmentation::original: return "original";
    case Augmentation::time_mask: return "time_mask";
    case Augmentation::freq_mask: return "freq_mask";
    case Augmentation::speed: return "speed";
  }
  return "?";
}

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev_enroll: return "dev_enroll";
    case Split::dev_trial: return "dev_trial";
    case Split::test_enroll: return "test_enroll";
    case Split::test_trial: return "test_trial";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "target") return Label::target;
  if (s == "nontarget") return Label::nontarget;
  return std::nullopt;
}

inline std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "F") return Gender::F;
  if (s == "M") return Gender::M;
  return std::nullopt;
}

inline std::optional<Split> parse_split(std::string_view s) {
  for (auto v : {Split::train, Split::dev_enroll, Split::dev_trial, Split::test_enroll, Split::test_trial})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

struct EmbeddingRecord {
  std::string speaker_id;
  std::string utterance_id;
  Modality modality = Modality::audio;
  Augmentation augmentation = Augmentation::original;
  std::vector<float> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

/// Records of one modality and dimension, indexed by (speaker, utterance, augmentation).
class EmbeddingSet {
 public:
  using Key = std::tuple<std::string, std::string, Augmentation>;

  EmbeddingSet(std::uint32_t dimension, Modality modality) : dimension_(dimension), modality_(modality) {
    if (dimension == 0) throw ArgumentError("embedding dimension must be positive");
  }

  std::uint32_t dimension() const { return dimension_; }
  Modality modality() const { return modality_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  void add(EmbeddingRecord record) {
    if (record.vector.size() != dimension_)
      throw ShapeError("record " + record.utterance_id + " has length " + std::to_string(record.vector.size()) +
                       ", archive dimension is " + std::to_string(dimension_));
    if (record.modality != modality_) throw ShapeError("record " + record.utterance_id + " has the wrong modality");
    for (float v : record.vector)
      if (!std::isfinite(v)) throw NumericError("non-finite value in record " + record.utterance_id);
    Key key{record.speaker_id, record.utterance_id, record.augmentation};
    if (index_.contains(key))
      throw DuplicateKeyError("duplicate record (" + record.speaker_id + ", " + record.utterance_id + ", " +
                              std::string(to_string(record.augmentation)) + ")");
    index_.emplace(std::move(key), records_.size());
    by_utterance_.emplace(std::pair{record.utterance_id, record.augmentation}, records_.size());
    records_.push_back(std::move(record));
  }

  const EmbeddingRecord* find(const std::string& speaker, const std::string& utterance, Augmentation aug) const {
    auto it = index_.find(Key{speaker, utterance, aug});
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  /// Lookup by utterance alone; utterance ids are unique per manifest.
  const EmbeddingRecord* find(const std::string& utterance, Augmentation aug = Augmentation::original) const {
    auto it = by_utterance_.find({utterance, aug});
    return it == by_utterance_.end() ? nullptr : &records_[it->second];
  }

  bool operator==(const EmbeddingSet& o) const {
    return dimension_ == o.dimension_ && modality_ == o.modality_ && records_ == o.records_;
  }

 private:
  std::uint32_t dimension_;
  Modality modality_;
  std::vector<EmbeddingRecord> records_;
  std::map<Key, std::size_t> index_;
  std::multimap<std::pair<std::string, Augmentation>, std::size_t> by_utterance_;
};

// ---------------------------------------------------------------------------
// VXA1 archive.

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get_le(const char* field) {
    need(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n, const char* field) {
    need(n, field);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n)
      throw CorruptionError(what_ + ": truncated while reading " + field + " at byte " + std::to_string(pos_));
  }

  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::string_view kArchiveMagic = "VXA1";
inline constexpr std::uint32_t kArchiveVersion = 1;

/// Serializes `set` to VXA1 bytes: little-endian header (magic, version,
/// modality, dimension, count) followed by length-prefixed string keys,
/// an augmentation tag and `dimension` float32 values per record.
inline std::string encode_embedding_archive(const EmbeddingSet& set) {
  std::string out;
  out.append(kArchiveMagic);
  detail::put_le<std::uint32_t>(out, kArchiveVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(set.modality()));
  detail::put_le<std::uint32_t>(out, set.dimension());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
  for (const auto& r : set.records()) {
    for (const std::string* s : {&r.speaker_id, &r.utterance_id}) {
      if (s->size() > UINT16_MAX) throw ArgumentError("identifier longer than 65535 bytes: " + s->substr(0, 32));
      detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s->size()));
      out.append(*s);
    }
    detail::put_u8(out, static_cast<std::uint8_t>(r.augmentation));
    for (float v : r.vector) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline EmbeddingSet decode_embedding_archive(const std::vector<char>& bytes, const std::string& what = "archive") {
  detail::ByteReader in(bytes, what);
  if (bytes.size() < 4 || std::string_view(bytes.data(), 4) != kArchiveMagic)
    throw FormatError(what + ": bad magic, expected VXA1");
  in.get_string(4, "magic");
  const auto version = in.get_le<std::uint32_t>("version");
  if (version != kArchiveVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const auto modality_tag = in.get_le<std::uint8_t>("modality");
  if (modality_tag > 1) throw FormatError(what + ": unknown modality tag " + std::to_string(modality_tag));
  const auto modality = static_cast<Modality>(modality_tag);
  const auto dim = in.get_le<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError(what + ": zero dimension");
  const auto count = in.get_le<std::uint32_t>("record count");

  EmbeddingSet set(dim, modality);
  for (std::uint32_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    r.modality = modality;
    r.speaker_id = in.get_string(in.get_le<std::uint16_t>("speaker length"), "speaker id");
    r.utterance_id = in.get_string(in.get_le<std::uint16_t>("utterance length"), "utterance id");
    const auto aug = in.get_le<std::uint8_t>("augmentation tag");
    if (aug > 3) throw FormatError(what + ": unknown augmentation tag " + std::to_string(aug) + " in record " +
                                   std::to_string(i));
    r.augmentation = static_cast<Augmentation>(aug);
    r.vector.resize(dim);
    for (auto& v : r.vector) v = std::bit_cast<float>(in.get_le<std::uint32_t>("vector"));
    set.add(std::move(r));
  }
  if (!in.at_end())
    throw CorruptionError(what + ": " + std::to_string(bytes.size() - in.position()) + " trailing bytes");
  return set;
}

inline EmbeddingSet read_embedding_archive(const std::filesystem::path& path) {
  return decode_embedding_archive(io::read_file(path), path.string());
}

inline void write_embedding_archive(const EmbeddingSet& set, const std::filesystem::path& path) {
  io::atomic_write(path, encode_embedding_archive(set));
}

// ---------------------------------------------------------------------------
// Trial lists.

struct Trial {
  std::string enroll_speaker;
  std::string test_utterance;
  Label label = Label::target;
  Gender gender = Gender::F;

  bool operator==(const Trial&) const = default;
};

class TrialSet {
 public:
  TrialSet() = default;
  explicit TrialSet(std::vector<Trial> trials) : trials_(std::move(trials)) {}

  const std::vector<Trial>& trials() const { return trials_; }
  std::size_t size() const { return trials_.size(); }
  bool empty() const { return trials_.empty(); }
  auto begin() const { return trials_.begin(); }
  auto end() const { return trials_.end(); }
  void add(Trial t) { trials_.push_back(std::move(t)); }

  std::size_t count(Label l) const {
    return static_cast<std::size_t>(std::count_if(trials_.begin(), trials_.end(), [&](auto& t) { return t.label == l; }));
  }
  std::size_t count(Gender g) const {
    return static_cast<std::size_t>(std::count_if(trials_.begin(), trials_.end(), [&](auto& t) { return t.gender == g; }));
  }
  std::size_t count(Label l, Gender g) const {
    return static_cast<std::size_t>(
        std::count_if(trials_.begin(), trials_.end(), [&](auto& t) { return t.label == l && t.gender == g; }));
  }

 private:
  std::vector<Trial> trials_;
};

inline constexpr std::string_view kTrialHeader = "enroll_speaker\ttest_utterance\tlabel\tgender";
inline constexpr std::string_view kManifestHeader = "utterance_id\tspeaker_id\tgender\tsplit\tsource_tag";

namespace detail {

/// Checks the header line and yields (line number, fields) for each non-blank data line.
template <typename F>
void for_each_tsv_row(const std::filesystem::path& path, std::string_view header, std::size_t n_fields, F&& fn) {
  const auto lines = io::read_lines(path);
  if (lines.empty() || lines[0] != header) throw ParseError(path.string() + ": expected header '" + std::string(header) + "'", 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = io::split_tabs(lines[i]);
    if (fields.size() != n_fields)
      throw ParseError(path.string() + ": expected " + std::to_string(n_fields) + " fields, got " +
                           std::to_string(fields.size()),
                       i + 1);
    fn(i + 1, fields);
  }
}

}  // namespace detail

inline TrialSet load_trials(const std::filesystem::path& path) {
  TrialSet set;
  detail::for_each_tsv_row(path, kTrialHeader, 4, [&](std::size_t line, const std::vector<std::string>& f) {
    auto label = parse_label(f[2]);
    if (!label) throw ParseError(path.string() + ": unknown label '" + f[2] + "'", line);
    auto gender = parse_gender(f[3]);
    if (!gender) throw ParseError(path.string() + ": unknown gender '" + f[3] + "'", line);
    if (f[0].empty() || f[1].empty()) throw ParseError(path.string() + ": empty identifier", line);
    set.add(Trial{f[0], f[1], *label, *gender});
  });
  return set;
}

inline std::string format_trials(const TrialSet& trials) {
  std::string out(kTrialHeader);
  out += '\n';
  for (const auto& t : trials) {
    out += t.enroll_speaker + '\t' + t.test_utterance + '\t';
    out += to_string(t.label);
    out += '\t';
    out += to_string(t.gender);
    out += '\n';
  }
  return out;
}

inline void write_trials(const TrialSet& trials, const std::filesystem::path& path) {
  io::atomic_write(path, format_trials(trials));
}

// ---------------------------------------------------------------------------
// Dataset manifest.

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  Gender gender = Gender::F;
  Split split = Split::train;
  std::string source_tag = "original";

  bool operator==(const ManifestEntry&) const = default;
};

class DatasetManifest {
 public:
  void add(ManifestEntry e) {
    if (e.utterance_id.empty() || e.speaker_id.empty()) throw ArgumentError("empty identifier in manifest entry");
    if (position_.contains(e.utterance_id)) throw DuplicateKeyError("duplicate utterance_id " + e.utterance_id);
    position_.emplace(e.utterance_id, entries_.size());
    entries_.push_back(std::move(e));
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const ManifestEntry* find(const std::string& utterance) const {
    auto it = position_.find(utterance);
    return it == position_.end() ? nullptr : &entries_[it->second];
  }

  /// Distinct speakers in first-appearance order.
  std::vector<std::string> speakers() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : entries_)
      if (seen.insert(e.speaker_id).second) out.push_back(e.speaker_id);
    return out;
  }

  std::vector<const ManifestEntry*> select(Split split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries_)
      if (e.split == split) out.push_back(&e);
    return out;
  }

  /// Utterances of `speaker` within `split`, in manifest order.
  std::vector<std::string> utterances_of(const std::string& speaker, Split split) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (e.speaker_id == speaker && e.split == split) out.push_back(e.utterance_id);
    return out;
  }

 private:
  std::vector<ManifestEntry> entries_;
  std::map<std::string, std::size_t> position_;
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m;
  detail::for_each_tsv_row(path, kManifestHeader, 5, [&](std::size_t line, const std::vector<std::string>& f) {
    auto gender = parse_gender(f[2]);
    if (!gender) throw ParseError(path.string() + ": unknown gender '" + f[2] + "'", line);
    auto split = parse_split(f[3]);
    if (!split) throw ParseError(path.string() + ": unknown split '" + f[3] + "'", line);
    if (f[0].empty() || f[1].empty()) throw ParseError(path.string() + ": empty identifier", line);
    try {
      m.add(ManifestEntry{f[0], f[1], *gender, *split, f[4].empty() ? "original" : f[4]});
    } catch (const DuplicateKeyError& e) {
      throw DuplicateKeyError(std::string(e.what()) + " (line " + std::to_string(line) + ")");
    }
  });
  return m;
}

inline std::string format_manifest(const DatasetManifest& m) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& e : m.entries()) {
    out += e.utterance_id + '\t' + e.speaker_id + '\t';
    out += to_string(e.gender);
    out += '\t';
    out += to_string(e.split);
    out += '\t' + e.source_tag + '\n';
  }
  return out;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  io::atomic_write(path, format_manifest(m));
}

/// Builds the usual same-gender trial list: every trial-split utterance
/// against every enrolled speaker of the same gender.
inline TrialSet make_trials(const DatasetManifest& m, Split enroll_split, Split trial_split) {
  std::vector<std::pair<std::string, Gender>> enrolled;
  std::set<std::string> seen;
  for (const auto* e : m.select(enroll_split))
    if (seen.insert(e->speaker_id).second) enrolled.emplace_back(e->speaker_id, e->gender);
  TrialSet trials;
  for (const auto* e : m.select(trial_split))
    for (const auto& [spk, gender] : enrolled)
      if (gender == e->gender)
        trials.add(Trial{spk, e->utterance_id, spk == e->speaker_id ? Label::target : Label::nontarget, gender});
  return trials;
}

}  // namespace vxa
