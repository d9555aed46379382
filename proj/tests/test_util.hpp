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

#include <functional>
#include <vector>

#include "vxa/nn.hpp"
#include "vxa/random.hpp"

namespace vxa::testing {

inline nn::Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Gradient check of a single layer: the loss is sum(layer(x) .* probe) for a
/// fixed random probe, and the input is treated as one more parameter.
/// `forward` maps x to y; `backward` maps dy to dx (accumulating parameter
/// gradients as a side effect).
inline double check_layer(std::vector<nn::Parameter*> params, nn::Parameter& input, const nn::Matrix& probe,
                          const std::function<nn::Matrix(const nn::Matrix&)>& forward,
                          const std::function<nn::Matrix(const nn::Matrix&)>& backward, double step = 1e-4) {
  params.push_back(&input);
  auto loss = [&] { return forward(input.value).cwiseProduct(probe).sum(); };
  auto loss_and_grad = [&] {
    for (auto* p : params) p->zero_grad();
    const double l = loss();
    input.grad = backward(probe);
    return l;
  };
  return nn::gradient_check(params, loss_and_grad, loss, step);
}

}  // namespace vxa::testing
