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

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "cvc/tensor.hpp"

namespace cvc::ag {

// Reverse-mode autodiff over a dynamically built graph. Nodes own their
// parents through shared_ptr, so a graph stays alive exactly as long as
// someone holds its root. Backward walks nodes in decreasing creation id,
// which is a valid topological order because parents are always created
// before children.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily; same shape as value
  bool requires_grad = false;
  bool grad_ready = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (!grad_ready) {
      grad = Tensor::zeros_like(value);
      grad_ready = true;
    }
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

// When grad mode is off (eval / coding paths), ops compute values only and
// record no parents; graphs degenerate to flat leaves.
bool grad_enabled();
void set_grad_enabled(bool on);

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }

 private:
  bool prev_;
};

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);

// Backpropagate from a scalar root (shape [1]); seeds d(root)/d(root) = 1.
void backward(const Var& root);

// ---- elementwise arithmetic ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);

// ---- elementwise nonlinearities ----
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh_(const Var& a);
Var softplus(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var abs_(const Var& a);
Var square(const Var& a);
Var sqrt_(const Var& a);
Var pow_scalar(const Var& a, double p);  // a must stay positive

// ---- quantization relaxations ----
// Round-to-nearest, ties away from zero; gradient is identity.
Var round_ste(const Var& a);
// Adds u ~ Uniform(-1/2, 1/2) elementwise; gradient is identity.
Var uniform_noise(const Var& a, Rng& rng);
// Clamp values, pass gradients through unchanged.
Var clamp_ste(const Var& a, double lo, double hi);

// ---- shape ops ----
Var concat_ch(const std::vector<Var>& xs);            // along dim 0 of [C,H,W]
Var slice_ch(const Var& x, int c_begin, int c_end);   // half-open
Var reshape(const Var& x, std::vector<int> shape);

// ---- reductions ----
Var sum_all(const Var& a);   // -> [1]
Var mean_all(const Var& a);  // -> [1]

// ---- spatial ops ----
// x: [Cin,H,W], w: [Cout,Cin,k,k], b: [Cout] (may be null). Zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x: [Cin,Hi,Wi], w: [Cin,Cout,k,k]; caller fixes the output size.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride,
                     int pad, int out_h, int out_w);
Var avg_pool2(const Var& x);           // 2x2, stride 2; H and W even
Var upsample_bilinear2(const Var& x);  // x2, half-pixel centers

// Backward warping with border replication: out(p) = src(p + flow(p)),
// bilinear; differentiable in both src and flow.
Var warp_bilinear(const Var& src, const Var& flow);

// Generalized divisive normalization.
//   y_c = x_c / sqrt(beta_c + sum_j gamma_cj x_j^2)      (inverse=false)
//   y_c = x_c * sqrt(beta_c + sum_j gamma_cj x_j^2)      (inverse=true)
// beta: [C] with beta_i >= beta_min > 0; gamma: [C,C] nonnegative.
Var gdn(const Var& x, const Var& beta, const Var& gamma, bool inverse);
constexpr double kGdnBetaMin = 1e-6;

// Per-element code length of the box-convolved Laplace model:
//   bits = -log2( F(v + 1/2) - F(v - 1/2) ),  F = Laplace CDF(mu, scale sigma)
// Stable in the far tails; masses are floored at 1e-12 for the value while
// gradients keep the exact log-domain form.
Var laplace_bits(const Var& v, const Var& mu, const Var& sigma);

// ---- building blocks of the per-channel factorized CDF ----
// v: [C,fin,N], w: [C,fout,fin], b: [C,fout] -> [C,fout,N]
Var cwise_linear(const Var& v, const Var& w, const Var& b);
// v: [C,f,N], a_raw: [C,f] -> v + tanh(a_raw) * tanh(v)
Var factor_step(const Var& v, const Var& a_raw);
// bits = -log2(sigmoid(upper) - sigmoid(lower)), elementwise; upper > lower.
Var logistic_mass_bits(const Var& upper, const Var& lower);

}  // namespace cvc::ag
