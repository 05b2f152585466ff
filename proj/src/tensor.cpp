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

#include "cvc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cvc {

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  std::int64_t n = 1;
  for (int d : shape_) {
    if (d <= 0) throw ArgumentError("tensor dimensions must be positive");
    n *= d;
  }
  data_.assign(static_cast<size_t>(n), fill);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::min() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::min(m, v);
  return m;
}

double Tensor::max() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::max(m, v);
  return m;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace cvc
