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
#include <string>
#include <vector>

#include "vxa/errors.hpp"
#include "vxa/nn.hpp"

namespace vxa::nn {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Adam moments plus the step counter, one moment pair per parameter in the
/// order the parameters were registered.
struct OptimizerState {
  AdamWOptions options;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// AdamW with decoupled weight decay: the decay theta *= (1 - lr * wd) is
/// applied before, and independently of, the bias-corrected adaptive step.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options = {}) : params_(std::move(params)) {
    state_.options = options;
    for (const Parameter* p : params_) {
      state_.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state_.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  /// Rejects the whole step, leaving parameters and state untouched, if any
  /// gradient is non-finite.
  void step(double lr) {
    for (const Parameter* p : params_)
      if (!p->grad.allFinite()) throw NumericError("AdamW: non-finite gradient in " + p->name);
    const auto& o = state_.options;
    ++state_.step;
    const double correction1 = 1.0 - std::pow(o.beta1, static_cast<double>(state_.step));
    const double correction2 = 1.0 - std::pow(o.beta2, static_cast<double>(state_.step));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      Matrix& m = state_.first_moment[i];
      Matrix& v = state_.second_moment[i];
      if (o.weight_decay != 0.0) p.value *= 1.0 - lr * o.weight_decay;
      m = o.beta1 * m + (1.0 - o.beta1) * p.grad;
      v = o.beta2 * v + (1.0 - o.beta2) * p.grad.cwiseAbs2();
      p.value.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + o.eps);
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  const OptimizerState& state() const { return state_; }

  void load_state(OptimizerState s) {
    if (s.first_moment.size() != params_.size() || s.second_moment.size() != params_.size())
      throw ShapeError("optimizer state does not match parameter list");
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (s.first_moment[i].rows() != params_[i]->value.rows() || s.first_moment[i].cols() != params_[i]->value.cols() ||
          s.second_moment[i].rows() != params_[i]->value.rows() || s.second_moment[i].cols() != params_[i]->value.cols())
        throw ShapeError("optimizer moment shape mismatch for " + params_[i]->name);
    state_ = std::move(s);
  }

  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  OptimizerState state_;
};

struct LrSchedule {
  double lr_min = 1e-6;
  double lr_max = 1e-4;
  std::int64_t cycle_steps = 13000;

  void validate() const {
    if (!(lr_min < lr_max)) throw ArgumentError("lr_min must be below lr_max");
    if (cycle_steps <= 0 || cycle_steps % 2 != 0) throw ArgumentError("cycle_steps must be positive and even");
  }
};

/// Triangular cyclic schedule: lr_min at the start of each cycle, lr_max at
/// its midpoint, linear in between.
inline double cyclic_lr(std::int64_t step, const LrSchedule& s) {
  s.validate();
  if (step < 0) throw ArgumentError("cyclic_lr: negative step");
  const std::int64_t half = s.cycle_steps / 2;
  const std::int64_t pos = step % s.cycle_steps;
  const std::int64_t rise = pos <= half ? pos : s.cycle_steps - pos;
  const double frac = static_cast<double>(rise) / static_cast<double>(half);
  // Convex combination so both endpoints are reproduced exactly.
  return (1.0 - frac) * s.lr_min + frac * s.lr_max;
}

}  // namespace vxa::nn
