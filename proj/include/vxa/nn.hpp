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
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vxa/errors.hpp"
#include "vxa/random.hpp"

namespace vxa::nn {

/// Batches are row-major in meaning: one example per row.
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

enum class Mode { train, eval };

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

namespace detail {

inline void check_cols(const Matrix& x, Eigen::Index expected, const char* layer) {
  if (x.cols() != expected)
    throw ShapeError(std::string(layer) + ": expected " + std::to_string(expected) + " features, got " +
                     std::to_string(x.cols()));
}

}  // namespace detail

/// Fully connected layer, y = x W + b with W stored as (in x out).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, bool bias = true)
      : weight_(name + ".weight", Matrix::Zero(in, out)) {
    if (bias) bias_ = Parameter(name + ".bias", Matrix::Zero(1, out));
  }

  /// Uniform in +-sqrt(1/fan_in), zero bias.
  void init(Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(weight_.value.rows()));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = rng.uniform(-bound, bound);
    if (bias_) bias_->value.setZero();
  }

  Matrix forward(const Matrix& x) {
    detail::check_cols(x, weight_.value.rows(), weight_.name.c_str());
    input_ = x;
    Matrix y = x * weight_.value;
    if (bias_) y.rowwise() += bias_->value.row(0);
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& dy) {
    weight_.grad.noalias() += input_.transpose() * dy;
    if (bias_) bias_->grad.row(0) += dy.colwise().sum();
    return dy * weight_.value.transpose();
  }

  Parameter& weight() { return weight_; }
  const Parameter& weight() const { return weight_; }
  bool has_bias() const { return bias_.has_value(); }
  Parameter& bias() { return *bias_; }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

 private:
  Parameter weight_;
  std::optional<Parameter> bias_;
  Matrix input_;
};

/// Per-row normalization over the feature axis followed by an affine map.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim, double eps = 1e-5)
      : gain_(name + ".gain", Matrix::Ones(1, dim)), shift_(name + ".shift", Matrix::Zero(1, dim)), eps_(eps) {}

  Matrix forward(const Matrix& x) {
    detail::check_cols(x, gain_.value.cols(), gain_.name.c_str());
    const auto d = static_cast<double>(x.cols());
    normalized_.resize(x.rows(), x.cols());
    inv_std_.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().sum() / d;
      inv_std_(r) = 1.0 / std::sqrt(var + eps_);
      normalized_.row(r) = (x.row(r).array() - mean) * inv_std_(r);
    }
    Matrix y = normalized_.array().rowwise() * gain_.value.row(0).array();
    y.rowwise() += shift_.value.row(0);
    return y;
  }

  Matrix backward(const Matrix& dy) {
    gain_.grad.row(0) += (dy.array() * normalized_.array()).colwise().sum().matrix();
    shift_.grad.row(0) += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * gain_.value.row(0).array();
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const double mean_d = dxhat.row(r).mean();
      const double mean_dx = (dxhat.row(r).array() * normalized_.row(r).array()).mean();
      dx.row(r) = inv_std_(r) * (dxhat.row(r).array() - mean_d - normalized_.row(r).array() * mean_dx);
    }
    return dx;
  }

  Parameter& gain() { return gain_; }
  Parameter& shift() { return shift_; }
  double eps() const { return eps_; }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gain_);
    out.push_back(&shift_);
  }

 private:
  Parameter gain_;
  Parameter shift_;
  double eps_ = 1e-5;
  Matrix normalized_;
  Eigen::VectorXd inv_std_;
};

// ---------------------------------------------------------------------------
// Activations. Backward functions take whatever the forward pass produced
// that they need (input for GELU/ReLU, output for sigmoid/softmax).

inline Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
}

inline Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const Matrix slope = x.unaryExpr([&](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
    return cdf + v * pdf;
  });
  return dy.cwiseProduct(slope);
}

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

inline Matrix relu_backward(const Matrix& x, const Matrix& dy) {
  return (x.array() > 0.0).select(dy, 0.0);
}

inline double sigmoid(double v) {
  // Split by sign so exp never overflows.
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

inline Matrix sigmoid_backward(const Matrix& y, const Matrix& dy) {
  return dy.array() * y.array() * (1.0 - y.array());
}

/// Row-wise softmax.
inline Matrix softmax(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double peak = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - peak).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

inline Matrix softmax_backward(const Matrix& y, const Matrix& dy) {
  const Eigen::VectorXd dot = (y.array() * dy.array()).rowwise().sum();
  return y.array() * (dy.colwise() - dot).array();
}

/// Inverted dropout: survivors are scaled by 1/(1-p) so the expectation is
/// unchanged; eval mode is the identity.
class Dropout {
 public:
  explicit Dropout(double p = 0.0) : p_(p) {
    if (p < 0.0 || p >= 1.0) throw ArgumentError("dropout probability must lie in [0, 1)");
  }

  Matrix forward(const Matrix& x, Mode mode, Rng& rng) {
    if (mode == Mode::eval || p_ == 0.0) {
      mask_ = Matrix::Ones(x.rows(), x.cols());
      return x;
    }
    const double keep_scale = 1.0 / (1.0 - p_);
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = rng.bernoulli(p_) ? 0.0 : keep_scale;
    return x.cwiseProduct(mask_);
  }

  Matrix backward(const Matrix& dy) const { return dy.cwiseProduct(mask_); }

  double p() const { return p_; }

 private:
  double p_;
  Matrix mask_;
};

// ---------------------------------------------------------------------------
// Cosine classifier and the additive angular margin loss.

namespace detail {

/// Row-wise L2 normalization; also returns the row norms.
inline Matrix normalize_rows(const Matrix& x, Eigen::VectorXd& norms, const char* who) {
  norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!std::isfinite(norms(r))) throw NumericError(std::string(who) + ": non-finite row " + std::to_string(r));
    if (!(norms(r) > 0.0)) throw DegenerateInputError(std::string(who) + ": zero-norm row " + std::to_string(r));
  }
  return norms.asDiagonal().inverse() * x;
}

/// Backward of x -> x / |x| for each row.
inline Matrix normalize_rows_backward(const Matrix& unit, const Eigen::VectorXd& norms, const Matrix& dunit) {
  const Eigen::VectorXd dot = (unit.array() * dunit.array()).rowwise().sum();
  Matrix dx = dunit - dot.asDiagonal() * unit;
  return norms.asDiagonal().inverse() * dx;
}

}  // namespace detail

/// Bias-free head producing cos(angle) between each input row and each
/// class weight row; weights are (classes x dim).
class CosineClassifier {
 public:
  CosineClassifier() = default;
  CosineClassifier(const std::string& name, Eigen::Index dim, Eigen::Index classes)
      : weight_(name + ".weight", Matrix::Zero(classes, dim)) {}

  /// Unit-normal rows, then L2-normalized.
  void init(Rng& rng) {
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = rng.normal();
    weight_.value.rowwise().normalize();
  }

  Matrix forward(const Matrix& e) {
    detail::check_cols(e, weight_.value.cols(), weight_.name.c_str());
    unit_in_ = detail::normalize_rows(e, in_norms_, "cosine classifier input");
    unit_w_ = detail::normalize_rows(weight_.value, w_norms_, "cosine classifier weight");
    return unit_in_ * unit_w_.transpose();
  }

  Matrix backward(const Matrix& dcos) {
    const Matrix dunit_in = dcos * unit_w_;
    const Matrix dunit_w = dcos.transpose() * unit_in_;
    weight_.grad += detail::normalize_rows_backward(unit_w_, w_norms_, dunit_w);
    return detail::normalize_rows_backward(unit_in_, in_norms_, dunit_in);
  }

  Parameter& weight() { return weight_; }
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight_); }

 private:
  Parameter weight_;
  Matrix unit_in_, unit_w_;
  Eigen::VectorXd in_norms_, w_norms_;
};

/// Vector form of the cosine logits, for single embeddings.
inline Eigen::VectorXd aam_cosine_logits(const Eigen::VectorXd& embedding, const Matrix& class_weights) {
  if (embedding.size() != class_weights.cols()) throw ShapeError("aam_cosine_logits: dimension mismatch");
  const double norm = embedding.norm();
  if (!(norm > 0.0)) throw DegenerateInputError("aam_cosine_logits: zero embedding");
  Eigen::VectorXd out(class_weights.rows());
  for (Eigen::Index j = 0; j < class_weights.rows(); ++j) {
    const double wn = class_weights.row(j).norm();
    if (!(wn > 0.0)) throw DegenerateInputError("aam_cosine_logits: zero class weight row");
    out(j) = class_weights.row(j).dot(embedding) / (wn * norm);
  }
  return out;
}

struct AamParams {
  double scale = 30.0;
  double margin = 0.15;
};

inline constexpr double kCosineClamp = 1e-7;

/// Target logit after the angular margin: cos(theta + m), or the linear
/// fallback cos(theta) - m sin(m) once theta + m passes pi. Writes the
/// derivative with respect to the input cosine to `slope`.
inline double margin_target(double cosine, double margin, double* slope) {
  if (margin == 0.0) {
    if (slope) *slope = 1.0;
    return cosine;
  }
  double c = cosine;
  double clamp_slope = 1.0;
  if (c > 1.0 - kCosineClamp) {
    c = 1.0 - kCosineClamp;
    clamp_slope = 0.0;
  } else if (c < -1.0 + kCosineClamp) {
    c = -1.0 + kCosineClamp;
    clamp_slope = 0.0;
  }
  const double cos_m = std::cos(margin);
  const double sin_m = std::sin(margin);
  // theta + m <= pi  <=>  cos(theta) >= cos(pi - m) = -cos(m)
  if (c >= -cos_m) {
    const double sin_theta = std::sqrt(1.0 - c * c);
    if (slope) *slope = clamp_slope * (cos_m + c * sin_m / sin_theta);
    return c * cos_m - sin_theta * sin_m;
  }
  if (slope) *slope = clamp_slope;
  return c - margin * sin_m;
}

/// Mean AAM softmax cross-entropy over the rows of `cosines`; when `dcos`
/// is given it receives dLoss/dcosines (already divided by the batch size).
inline double aam_loss(const Matrix& cosines, const std::vector<int>& targets, const AamParams& p,
                       Matrix* dcos = nullptr) {
  if (static_cast<Eigen::Index>(targets.size()) != cosines.rows())
    throw ShapeError("aam_loss: one target per row required");
  const auto batch = static_cast<double>(cosines.rows());
  if (dcos) dcos->setZero(cosines.rows(), cosines.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < cosines.rows(); ++r) {
    const int y = targets[static_cast<std::size_t>(r)];
    if (y < 0 || y >= cosines.cols())
      throw ArgumentError("aam_loss: target " + std::to_string(y) + " outside [0, " + std::to_string(cosines.cols()) + ")");
    double slope = 1.0;
    Eigen::RowVectorXd logits = p.scale * cosines.row(r);
    logits(y) = p.scale * margin_target(cosines(r, y), p.margin, &slope);
    const double peak = logits.maxCoeff();
    const double log_sum = peak + std::log((logits.array() - peak).exp().sum());
    total += log_sum - logits(y);
    if (dcos) {
      Eigen::RowVectorXd prob = (logits.array() - log_sum).exp();
      prob(y) -= 1.0;
      dcos->row(r) = p.scale * prob / batch;
      (*dcos)(r, y) *= slope;
    }
  }
  return total / batch;
}

inline double aam_loss(const Eigen::VectorXd& cosines, int target, const AamParams& p) {
  return aam_loss(Matrix(cosines.transpose()), std::vector<int>{target}, p);
}

/// Plain softmax cross-entropy (mean over rows); gradient is (p - y) / batch.
inline double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& targets, Matrix* dlogits = nullptr) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) throw ShapeError("softmax_cross_entropy: target count");
  const Matrix prob = softmax(logits);
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = targets[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw ArgumentError("softmax_cross_entropy: target out of range");
    const double peak = logits.row(r).maxCoeff();
    total += peak + std::log((logits.row(r).array() - peak).exp().sum()) - logits(r, y);
  }
  if (dlogits) {
    *dlogits = prob;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) (*dlogits)(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
    *dlogits /= static_cast<double>(logits.rows());
  }
  return total / static_cast<double>(logits.rows());
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check.

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
/// entries of `params`, with the numeric derivative taken by the fourth-order
/// central stencil (f(-2h) - 8f(-h) + 8f(h) - f(2h)) / 12h.
/// `loss_and_grad` must zero and refill the gradients and return the loss;
/// `loss` evaluates the loss only. Both must be deterministic.
inline double gradient_check(const std::vector<Parameter*>& params, const std::function<double()>& loss_and_grad,
                             const std::function<double()>& loss, double step = 1e-4, double floor = 1e-5) {
  loss_and_grad();
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& slot = p->value.data()[i];
      const double saved = slot;
      auto at = [&](double offset) {
        slot = saved + offset;
        return loss();
      };
      const double numeric = (at(-2 * step) - 8 * at(-step) + 8 * at(step) - at(2 * step)) / (12 * step);
      slot = saved;
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace vxa::nn
