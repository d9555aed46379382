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
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "vxa/errors.hpp"
#include "vxa/random.hpp"

namespace vxa {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

/// T x F grid: rows are time frames, columns frequency bins.
using FeatureMatrix = Eigen::MatrixXd;

enum class CropPolicy { random, center };

inline constexpr double kTargetRms = 0.1;  // -20 dB re full scale

/// Crops to at most `max_seconds`, removes the mean, scales to -20 dB RMS and
/// clips to [-1, 1]. A signal that is silent after mean removal is returned
/// mean-centered and unscaled.
inline Waveform preprocess_waveform(const Waveform& w, double max_seconds, std::uint64_t rng_seed,
                                    CropPolicy crop = CropPolicy::random) {
  if (w.samples.empty()) throw ArgumentError("preprocess_waveform: empty waveform");
  if (!(w.sample_rate > 0)) throw ArgumentError("preprocess_waveform: sample_rate must be positive");
  if (!(max_seconds > 0)) throw ArgumentError("preprocess_waveform: max_seconds must be positive");

  const auto n = w.samples.size();
  const auto max_len = static_cast<std::size_t>(std::floor(max_seconds * w.sample_rate + 1e-9));
  std::size_t start = 0;
  std::size_t len = n;
  if (max_len > 0 && n > max_len) {
    len = max_len;
    if (crop == CropPolicy::center) {
      start = (n - len) / 2;
    } else {
      Rng rng(rng_seed);
      start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - len)));
    }
  }

  Waveform out{{w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                w.samples.begin() + static_cast<std::ptrdiff_t>(start + len)},
               w.sample_rate};
  const double mean = std::accumulate(out.samples.begin(), out.samples.end(), 0.0) / static_cast<double>(len);
  double power = 0.0;
  for (auto& s : out.samples) {
    s -= mean;
    power += s * s;
  }
  const double rms = std::sqrt(power / static_cast<double>(len));
  if (rms == 0.0) return out;
  const double gain = kTargetRms / rms;
  for (auto& s : out.samples) s = std::clamp(s * gain, -1.0, 1.0);
  return out;
}

namespace detail {

enum class MaskAxis { time, freq };

inline FeatureMatrix apply_mask(const FeatureMatrix& f, int max_width, std::uint64_t seed, MaskAxis axis) {
  const auto extent = static_cast<int>(axis == MaskAxis::time ? f.rows() : f.cols());
  if (max_width < 0 || max_width > extent)
    throw ArgumentError("mask max_width " + std::to_string(max_width) + " outside [0, " + std::to_string(extent) + "]");
  FeatureMatrix out = f;
  if (max_width == 0) return out;
  Rng rng(seed);
  const auto width = static_cast<int>(rng.uniform_int(1, max_width));
  const auto start = static_cast<int>(rng.uniform_int(0, extent - width));
  if (axis == MaskAxis::time)
    out.middleRows(start, width).setZero();
  else
    out.middleCols(start, width).setZero();
  return out;
}

}  // namespace detail

/// Zeroes one contiguous run of frames; width uniform in [1, max_width],
/// start uniform over the valid range.
inline FeatureMatrix time_mask(const FeatureMatrix& f, int max_width, std::uint64_t rng_seed) {
  return detail::apply_mask(f, max_width, rng_seed, detail::MaskAxis::time);
}

inline FeatureMatrix freq_mask(const FeatureMatrix& f, int max_width, std::uint64_t rng_seed) {
  return detail::apply_mask(f, max_width, rng_seed, detail::MaskAxis::freq);
}

/// Linear-interpolation resampling; output has round(N / factor) samples and
/// sample i reads the input at position i * factor.
inline Waveform speed_perturb(const Waveform& w, double factor) {
  if (!(factor > 0)) throw ArgumentError("speed_perturb: factor must be positive");
  const auto n = w.samples.size();
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) / factor));
  Waveform out{std::vector<double>(out_len), w.sample_rate};
  if (factor == 1.0) {
    out.samples = w.samples;
    return out;
  }
  if (n < 2) {
    std::fill(out.samples.begin(), out.samples.end(), n == 1 ? w.samples[0] : 0.0);
    return out;
  }
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * factor;
    // The last segment is extended past the end so affine signals stay exact.
    const auto left = std::min(static_cast<std::size_t>(pos), n - 2);
    const double t = pos - static_cast<double>(left);
    out.samples[i] = w.samples[left] + t * (w.samples[left + 1] - w.samples[left]);
  }
  return out;
}

inline constexpr double kLogFloor = 1e-10;

/// Surrogate filterbank: 25 ms Hann-windowed frames every 10 ms, DFT power
/// pooled into `n_bins` triangular bands equally spaced from DC to Nyquist,
/// log(energy + 1e-10). Inputs shorter than one window yield a single
/// zero-padded frame.
inline FeatureMatrix synthetic_features(const Waveform& w, int n_bins) {
  if (n_bins < 1) throw ArgumentError("synthetic_features: n_bins must be >= 1");
  const auto window = static_cast<std::size_t>(std::lround(0.025 * w.sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(0.010 * w.sample_rate));
  if (window < 2 || hop < 1) throw ArgumentError("synthetic_features: sample rate too low for framing");
  const auto n = w.samples.size();
  const std::size_t frames = n < window ? 1 : (n - window) / hop + 1;
  const std::size_t n_freq = window / 2 + 1;

  // DFT tables with the Hann taper folded in.
  Eigen::MatrixXd cos_t(static_cast<Eigen::Index>(n_freq), static_cast<Eigen::Index>(window));
  Eigen::MatrixXd sin_t(cos_t.rows(), cos_t.cols());
  for (std::size_t k = 0; k < n_freq; ++k) {
    for (std::size_t j = 0; j < window; ++j) {
      const double taper = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(window - 1));
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(window);
      cos_t(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = taper * std::cos(angle);
      sin_t(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = taper * std::sin(angle);
    }
  }

  // Triangular bands with centers equally spaced over [0, n_freq - 1].
  Eigen::MatrixXd bands = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_freq), n_bins);
  const double spacing = static_cast<double>(n_freq - 1) / static_cast<double>(n_bins + 1);
  for (int b = 0; b < n_bins; ++b) {
    const double center = spacing * (b + 1);
    for (std::size_t k = 0; k < n_freq; ++k) {
      const double weight = 1.0 - std::abs(static_cast<double>(k) - center) / spacing;
      if (weight > 0) bands(static_cast<Eigen::Index>(k), b) = weight;
    }
  }

  Eigen::MatrixXd framed = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(window), static_cast<Eigen::Index>(frames));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < window && t * hop + j < n; ++j)
      framed(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t)) = w.samples[t * hop + j];

  const Eigen::MatrixXd re = cos_t * framed;
  const Eigen::MatrixXd im = sin_t * framed;
  const Eigen::MatrixXd power = re.array().square() + im.array().square();
  FeatureMatrix energy = power.transpose() * bands;
  return (energy.array() + kLogFloor).log().matrix();
}

/// Stand-in for a pretrained encoder: mean-pool frames, then a fixed
/// Gaussian projection drawn from `seed` (scaled by 1/sqrt(F)).
inline std::vector<double> synthetic_backbone(const FeatureMatrix& f, int dim, std::uint64_t seed) {
  if (dim < 1) throw ArgumentError("synthetic_backbone: dim must be >= 1");
  if (f.rows() < 1 || f.cols() < 1) throw ShapeError("synthetic_backbone: empty feature matrix");
  const Eigen::VectorXd pooled = f.colwise().mean().transpose();
  Rng rng(seed);
  Eigen::MatrixXd projection(dim, f.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(f.cols()));
  for (Eigen::Index i = 0; i < projection.rows(); ++i)
    for (Eigen::Index j = 0; j < projection.cols(); ++j) projection(i, j) = rng.normal() * scale;
  const Eigen::VectorXd out = projection * pooled;
  return {out.data(), out.data() + out.size()};
}

}  // namespace vxa
