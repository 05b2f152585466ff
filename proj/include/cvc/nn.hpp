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

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cvc/autograd.hpp"

namespace cvc::nn {

using ag::Var;

// Ordered name -> parameter map. Deterministic iteration order matters for
// the optimizer, checkpoint layout and reproducibility.
using ParamMap = std::map<std::string, Var>;

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParamMap& out, const std::string& prefix) const;
  const Var& weight() const { return w_; }
  const Var& bias() const { return b_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

 private:
  int k_ = 0, stride_ = 1, pad_ = 0;
  Var w_, b_;
};

// Stride-s upsampler: output is exactly s * input in each spatial dim.
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int cin, int cout, int k, int stride, Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParamMap& out, const std::string& prefix) const;

 private:
  int k_ = 0, stride_ = 2, pad_ = 0;
  Var w_, b_;
};

// 2-d convolution with a strict raster-causal kernel mask: the output at a
// spatial position sees only inputs strictly before it in raster order.
class MaskedConv2d {
 public:
  MaskedConv2d() = default;
  MaskedConv2d(int cin, int cout, int k, Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParamMap& out, const std::string& prefix) const;
  const Var& weight() const { return w_; }
  const Var& bias() const { return b_; }
  const Tensor& mask() const { return mask_; }
  int kernel() const { return k_; }

 private:
  int k_ = 0;
  Var w_, b_;
  Tensor mask_;
};

// GDN / IGDN with squared reparameterization keeping beta >= beta_min and
// gamma >= 0 without projection steps.
class Gdn {
 public:
  Gdn() = default;
  Gdn(int channels, bool inverse, Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParamMap& out, const std::string& prefix) const;
  Var effective_beta() const;
  Var effective_gamma() const;

 private:
  bool inverse_ = false;
  Var beta_raw_, gamma_raw_;
};

class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(int channels, Rng& rng);
  Var operator()(const Var& x) const;
  void collect(ParamMap& out, const std::string& prefix) const;

 private:
  Conv2d c1_, c2_;
};

// Grad bookkeeping helpers shared by the optimizer and tests.
void zero_grads(ParamMap& params);
double grad_norm(const ParamMap& params, const std::string& prefix);

}  // namespace cvc::nn
