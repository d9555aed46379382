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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "vxa/frontend.hpp"

namespace vxa {
namespace {

Waveform sine(double freq, double seconds, double rate, double amp = 0.5) {
  Waveform w{{}, rate};
  const auto n = static_cast<std::size_t>(seconds * rate);
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2 * std::numbers::pi * freq * i / rate));
  return w;
}

double rms(const std::vector<double>& v) {
  double p = 0;
  for (double s : v) p += s * s;
  return std::sqrt(p / v.size());
}

TEST(Preprocess, ConstantSignalIsReturnedCenteredUnscaled) {
  Waveform w{std::vector<double>(16000, 0.5), 16000};
  const auto out = preprocess_waveform(w, 10.0, 1);
  ASSERT_EQ(out.samples.size(), 16000u);
  for (double s : out.samples) EXPECT_EQ(s, 0.0);
}

TEST(Preprocess, ScalesToTargetRms) {
  // Zero-mean square wave with RMS 0.5: the gain is 0.1 / 0.5 = 0.2.
  Waveform w{{}, 8000};
  for (int i = 0; i < 8000; ++i) w.samples.push_back(i % 2 ? 0.5 : -0.5);
  const auto out = preprocess_waveform(w, 10.0, 1);
  for (std::size_t i = 0; i < out.samples.size(); ++i) EXPECT_NEAR(out.samples[i], 0.2 * w.samples[i], 1e-15);
  EXPECT_NEAR(rms(out.samples), 0.1, 1e-12);
}

TEST(Preprocess, CropsLongInputToAContiguousSlice) {
  const double rate = 100.0;
  Waveform w{{}, rate};
  for (int i = 0; i < 1200; ++i) w.samples.push_back(std::sin(0.37 * i) + 0.01 * i);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto out = preprocess_waveform(w, 10.0, seed);
    ASSERT_EQ(out.samples.size(), 1000u);
    int matches = 0;
    for (std::size_t start = 0; start <= 200; ++start) {
      Waveform slice{{w.samples.begin() + start, w.samples.begin() + start + 1000}, rate};
      const auto ref = preprocess_waveform(slice, 10.0, 0);
      if (ref.samples == out.samples) ++matches;
    }
    EXPECT_EQ(matches, 1) << "seed " << seed;
  }
  const auto centered = preprocess_waveform(w, 10.0, 0, CropPolicy::center);
  Waveform middle{{w.samples.begin() + 100, w.samples.begin() + 1100}, rate};
  EXPECT_EQ(centered.samples, preprocess_waveform(middle, 10.0, 0).samples);
}

TEST(Preprocess, ClipsAndIsIdempotentOnConformingSignals) {
  Waveform spiky{std::vector<double>(1000, 0.0), 1000};
  spiky.samples[10] = 1.0;  // a lone spike becomes ~3.16 after RMS scaling
  const auto clipped = preprocess_waveform(spiky, 10.0, 0);
  for (double s : clipped.samples) EXPECT_LE(std::abs(s), 1.0);

  const auto once = preprocess_waveform(sine(50, 1.0, 8000), 10.0, 0);
  const auto twice = preprocess_waveform(once, 10.0, 0);
  ASSERT_EQ(once.samples.size(), twice.samples.size());
  for (std::size_t i = 0; i < once.samples.size(); ++i) EXPECT_NEAR(once.samples[i], twice.samples[i], 1e-12);
}

TEST(Preprocess, RejectsEmptyInput) {
  EXPECT_THROW(preprocess_waveform(Waveform{{}, 16000}, 10.0, 0), ArgumentError);
}

TEST(Masks, ZeroWidthIsIdentity) {
  const FeatureMatrix f = FeatureMatrix::Random(10, 4);
  EXPECT_EQ(time_mask(f, 0, 3), f);
  EXPECT_EQ(freq_mask(f, 0, 3), f);
}

TEST(Masks, PinnedSeedMasksFramesTwoToFour) {
  const FeatureMatrix ones = FeatureMatrix::Ones(10, 4);
  const FeatureMatrix t = time_mask(ones, 3, 25);
  FeatureMatrix expected = ones;
  expected.middleRows(2, 3).setZero();
  EXPECT_EQ(t, expected);

  const FeatureMatrix ones_t = FeatureMatrix::Ones(4, 10);
  const FeatureMatrix f = freq_mask(ones_t, 3, 25);
  FeatureMatrix expected_f = ones_t;
  expected_f.middleCols(2, 3).setZero();
  EXPECT_EQ(f, expected_f);
}

TEST(Masks, OneContiguousBoundedSpanAndUntouchedComplement) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const FeatureMatrix f = FeatureMatrix::Random(12, 9).array() + 2.0;  // strictly positive
    for (bool along_time : {true, false}) {
      const int max_width = along_time ? 5 : 4;
      const FeatureMatrix m = along_time ? time_mask(f, max_width, seed) : freq_mask(f, max_width, seed);
      ASSERT_EQ(m.rows(), f.rows());
      ASSERT_EQ(m.cols(), f.cols());
      const Eigen::Index extent = along_time ? f.rows() : f.cols();
      std::vector<int> zeroed;
      for (Eigen::Index i = 0; i < extent; ++i) {
        const auto slice_m = along_time ? FeatureMatrix(m.row(i)) : FeatureMatrix(m.col(i));
        const auto slice_f = along_time ? FeatureMatrix(f.row(i)) : FeatureMatrix(f.col(i));
        if (slice_m.isZero(0.0)) zeroed.push_back(static_cast<int>(i));
        else ASSERT_EQ(slice_m, slice_f);
      }
      ASSERT_GE(zeroed.size(), 1u);
      ASSERT_LE(zeroed.size(), static_cast<std::size_t>(max_width));
      ASSERT_EQ(zeroed.back() - zeroed.front() + 1, static_cast<int>(zeroed.size()));
    }
  }
}

TEST(Masks, RejectWidthBeyondExtent) {
  const FeatureMatrix f = FeatureMatrix::Ones(10, 4);
  EXPECT_THROW(time_mask(f, 11, 0), ArgumentError);
  EXPECT_THROW(freq_mask(f, 5, 0), ArgumentError);
  EXPECT_NO_THROW(time_mask(f, 10, 0));
}

TEST(SpeedPerturb, IdentityAndLength) {
  const auto w = sine(100, 0.125, 8000);
  EXPECT_EQ(speed_perturb(w, 1.0).samples, w.samples);
  Waveform thousand{std::vector<double>(1000, 0.1), 16000};
  EXPECT_EQ(speed_perturb(thousand, 1.1).samples.size(), 909u);
  EXPECT_EQ(speed_perturb(thousand, 0.9).samples.size(), 1111u);
  for (std::size_t n = 2; n < 400; ++n)
    for (double f : {0.9, 1.0, 1.1}) {
      Waveform x{std::vector<double>(n, 0.0), 8000};
      ASSERT_EQ(speed_perturb(x, f).samples.size(), static_cast<std::size_t>(std::llround(n / f)));
    }
  EXPECT_THROW(speed_perturb(w, 0.0), ArgumentError);
  EXPECT_THROW(speed_perturb(w, -1.0), ArgumentError);
}

TEST(SpeedPerturb, LinearRampStaysLinear) {
  Waveform ramp{{}, 8000};
  for (int i = 0; i < 997; ++i) ramp.samples.push_back(0.25 + 0.001 * i);
  for (double f : {0.9, 0.95, 1.05, 1.1, 1.37}) {
    const auto out = speed_perturb(ramp, f);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
      ASSERT_NEAR(out.samples[i], 0.25 + 0.001 * f * i, 1e-12) << "factor " << f << " sample " << i;
    EXPECT_EQ(out.sample_rate, ramp.sample_rate);
  }
}

TEST(SyntheticFeatures, FramingArithmetic) {
  const double rate = 8000;  // window 200, hop 80
  for (std::size_t n : {200u, 201u, 279u, 280u, 8000u, 12345u}) {
    Waveform w{std::vector<double>(n, 0.0), rate};
    for (std::size_t i = 0; i < n; ++i) w.samples[i] = std::sin(0.1 * i);
    EXPECT_EQ(synthetic_features(w, 12).rows(), static_cast<Eigen::Index>((n - 200) / 80 + 1)) << n;
  }
  Waveform short_w{std::vector<double>(50, 0.3), rate};
  EXPECT_EQ(synthetic_features(short_w, 12).rows(), 1);
}

TEST(SyntheticFeatures, SilenceAndDeterminism) {
  Waveform silent{std::vector<double>(4000, 0.0), 8000};
  const auto f = synthetic_features(silent, 10);
  EXPECT_EQ(f.cols(), 10);
  for (Eigen::Index i = 0; i < f.size(); ++i) EXPECT_DOUBLE_EQ(f.data()[i], std::log(kLogFloor));
  const auto w = sine(440, 0.5, 8000);
  EXPECT_EQ(synthetic_features(w, 16), synthetic_features(w, 16));
}

TEST(SyntheticFeatures, ToneEnergyLandsInItsBand) {
  const auto low = synthetic_features(sine(300, 0.5, 8000), 8);
  const auto high = synthetic_features(sine(3200, 0.5, 8000), 8);
  Eigen::Index arg_low, arg_high;
  low.colwise().mean().maxCoeff(&arg_low);
  high.colwise().mean().maxCoeff(&arg_high);
  EXPECT_LT(arg_low, arg_high);
}

TEST(SyntheticBackbone, ShapeDeterminismAndLinearity) {
  const FeatureMatrix f = FeatureMatrix::Random(30, 12);
  const auto a = synthetic_backbone(f, 192, 7);
  EXPECT_EQ(a.size(), 192u);
  EXPECT_EQ(a, synthetic_backbone(f, 192, 7));
  EXPECT_NE(a, synthetic_backbone(f, 192, 8));
  const auto scaled = synthetic_backbone(2.5 * f, 192, 7);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(scaled[i], 2.5 * a[i], 1e-12);
  EXPECT_THROW(synthetic_backbone(f, 0, 7), ArgumentError);
}

}  // namespace
}  // namespace vxa
