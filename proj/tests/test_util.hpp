// Copyright (c) the CVC Project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>

#include "cvc/autograd.hpp"

namespace cvc::testutil {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central-difference check of d f / d leaf against the recorded analytic
// gradient. f must rebuild the graph from current leaf values and return a
// scalar Var. Returns the worst relative error over all elements whose
// analytic or numeric gradient is above `floor`. Probe points where the
// second difference is large relative to the first (a piecewise-linear kink
// under the probe, e.g. a relu crossing) are excluded: the finite
// difference itself is not meaningful there.
inline double check_gradient(const std::function<ag::Var()>& f, const ag::Var& leaf,
                             double step = 1e-4, double floor = 1e-6) {
  if (leaf->grad_ready) leaf->grad.fill(0.0);
  ag::Var root = f();
  const double f0 = root->value[0];
  ag::backward(root);
  Tensor analytic = leaf->grad_ready ? leaf->grad : Tensor::zeros_like(leaf->value);

  double worst = 0.0;
  for (std::int64_t i = 0; i < leaf->value.numel(); ++i) {
    const double saved = leaf->value[i];
    leaf->value[i] = saved + step;
    const double fp = f()->value[0];
    leaf->value[i] = saved - step;
    const double fm = f()->value[0];
    leaf->value[i] = saved;
    const double first = fp - fm;
    const double second = fp + fm - 2.0 * f0;
    if (std::fabs(second) > 1e-3 * std::max(std::fabs(first), 1e-12)) continue;
    const double numeric = first / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
    if (std::fabs(a) < floor && std::fabs(numeric) < floor) continue;
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  // Reset gradients accumulated during the check.
  if (leaf->grad_ready) leaf->grad.fill(0.0);
  return worst;
}

}  // namespace cvc::testutil
