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

#include <bit>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vxa/config.hpp"
#include "vxa/domain.hpp"
#include "vxa/errors.hpp"
#include "vxa/fusion_model.hpp"
#include "vxa/io.hpp"
#include "vxa/optim.hpp"

namespace vxa {

/// One row of the training metric log.
struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_eer = 0.0;  // proportion
  double lr = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

/// Training progress needed to resume a run exactly.
struct TrainingProgress {
  std::int64_t global_step = 0;
  int epochs_done = 0;
  double best_eer = 1.0;
  int best_epoch = 0;
  int epochs_since_improvement = 0;
  std::vector<EpochMetrics> log;
};

struct Checkpoint {
  ModelConfig model;
  std::vector<std::pair<std::string, nn::Matrix>> params;
  std::optional<nn::OptimizerState> optimizer;
  TrainingProgress progress;
};

inline constexpr std::string_view kCheckpointMagic = "VXCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(ByteReader& r, const char* field) { return std::bit_cast<double>(r.get_le<std::uint64_t>(field)); }

inline void put_matrix(std::string& out, const nn::Matrix& m) {
  put_le(out, static_cast<std::uint32_t>(m.rows()));
  put_le(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
}

inline nn::Matrix get_matrix(ByteReader& r) {
  const auto rows = r.get_le<std::uint32_t>("rows");
  const auto cols = r.get_le<std::uint32_t>("cols");
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(r, "matrix value");
  return m;
}

}  // namespace detail

/// Little-endian binary: magic, version, the model config as key = value
/// text, progress counters and metric log, named parameter matrices, then
/// optional AdamW state. Doubles are stored bit for bit.
inline std::string encode_checkpoint(const Checkpoint& c) {
  using namespace detail;
  std::string out(kCheckpointMagic);
  put_le(out, kCheckpointVersion);
  const auto cfg = format_model_config(c.model);
  put_le(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;

  const auto& p = c.progress;
  put_le(out, static_cast<std::uint64_t>(p.global_step));
  put_le(out, static_cast<std::uint32_t>(p.epochs_done));
  put_f64(out, p.best_eer);
  put_le(out, static_cast<std::uint32_t>(p.best_epoch));
  put_le(out, static_cast<std::uint32_t>(p.epochs_since_improvement));
  put_le(out, static_cast<std::uint32_t>(p.log.size()));
  for (const auto& row : p.log) {
    put_le(out, static_cast<std::uint32_t>(row.epoch));
    put_f64(out, row.train_loss);
    put_f64(out, row.dev_eer);
    put_f64(out, row.lr);
  }

  put_le(out, static_cast<std::uint32_t>(c.params.size()));
  for (const auto& [name, value] : c.params) {
    put_le(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_matrix(out, value);
  }

  put_u8(out, c.optimizer ? 1 : 0);
  if (c.optimizer) {
    const auto& o = *c.optimizer;
    put_f64(out, o.options.beta1);
    put_f64(out, o.options.beta2);
    put_f64(out, o.options.eps);
    put_f64(out, o.options.weight_decay);
    put_le(out, static_cast<std::uint64_t>(o.step));
    put_le(out, static_cast<std::uint32_t>(o.first_moment.size()));
    for (std::size_t i = 0; i < o.first_moment.size(); ++i) {
      put_matrix(out, o.first_moment[i]);
      put_matrix(out, o.second_moment[i]);
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& what = "checkpoint") {
  using namespace detail;
  ByteReader r(bytes, what);
  if (r.get_string(4, "magic") != kCheckpointMagic) throw FormatError(what + ": not a checkpoint (bad magic)");
  if (const auto v = r.get_le<std::uint32_t>("version"); v != kCheckpointVersion)
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  const auto cfg_len = r.get_le<std::uint32_t>("config length");
  try {
    c.model = parse_model_config(r.get_string(cfg_len, "config"));
  } catch (const ParseError& e) {
    throw CorruptionError(what + ": bad model config: " + e.what());
  }

  auto& p = c.progress;
  p.global_step = static_cast<std::int64_t>(r.get_le<std::uint64_t>("global step"));
  p.epochs_done = static_cast<int>(r.get_le<std::uint32_t>("epochs"));
  p.best_eer = get_f64(r, "best eer");
  p.best_epoch = static_cast<int>(r.get_le<std::uint32_t>("best epoch"));
  p.epochs_since_improvement = static_cast<int>(r.get_le<std::uint32_t>("epochs since improvement"));
  const auto n_log = r.get_le<std::uint32_t>("log length");
  for (std::uint32_t i = 0; i < n_log; ++i) {
    EpochMetrics m;
    m.epoch = static_cast<int>(r.get_le<std::uint32_t>("log epoch"));
    m.train_loss = get_f64(r, "log loss");
    m.dev_eer = get_f64(r, "log eer");
    m.lr = get_f64(r, "log lr");
    p.log.push_back(m);
  }

  const auto n_params = r.get_le<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const auto len = r.get_le<std::uint16_t>("name length");
    auto name = r.get_string(len, "name");
    c.params.emplace_back(std::move(name), get_matrix(r));
  }

  if (r.get_le<std::uint8_t>("optimizer flag")) {
    nn::OptimizerState o;
    o.options.beta1 = get_f64(r, "beta1");
    o.options.beta2 = get_f64(r, "beta2");
    o.options.eps = get_f64(r, "eps");
    o.options.weight_decay = get_f64(r, "weight decay");
    o.step = static_cast<std::int64_t>(r.get_le<std::uint64_t>("optimizer step"));
    const auto n = r.get_le<std::uint32_t>("moment count");
    for (std::uint32_t i = 0; i < n; ++i) {
      o.first_moment.push_back(get_matrix(r));
      o.second_moment.push_back(get_matrix(r));
    }
    c.optimizer = std::move(o);
  }
  if (!r.at_end()) throw CorruptionError(what + ": trailing bytes after checkpoint");
  return c;
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

inline void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  io::atomic_write(path, encode_checkpoint(c));
}

/// Snapshot of the model's parameters.
inline std::vector<std::pair<std::string, nn::Matrix>> snapshot_parameters(FusionModel& model) {
  std::vector<std::pair<std::string, nn::Matrix>> out;
  for (const auto* p : model.parameters()) out.emplace_back(p->name, p->value);
  return out;
}

/// Copies stored values into `model`, which must have the same layout.
inline void load_parameters(FusionModel& model, const std::vector<std::pair<std::string, nn::Matrix>>& params) {
  const auto& mine = model.parameters();
  if (mine.size() != params.size())
    throw ShapeError("checkpoint has " + std::to_string(params.size()) + " parameters, model has " + std::to_string(mine.size()));
  for (std::size_t i = 0; i < mine.size(); ++i) {
    const auto& [name, value] = params[i];
    if (name != mine[i]->name) throw ShapeError("checkpoint parameter " + name + " where " + mine[i]->name + " was expected");
    if (value.rows() != mine[i]->value.rows() || value.cols() != mine[i]->value.cols())
      throw ShapeError("checkpoint parameter " + name + " has the wrong shape");
  }
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i]->value = params[i].second;
}

/// Model rebuilt from a checkpoint.
inline std::unique_ptr<FusionModel> model_from_checkpoint(const Checkpoint& c) {
  auto model = std::make_unique<FusionModel>(c.model);
  load_parameters(*model, c.params);
  return model;
}

}  // namespace vxa
