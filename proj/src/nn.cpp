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

#include "cvc/nn.hpp"

#include <cmath>

namespace cvc::nn {

namespace {

Var init_conv_weight(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor w(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  return ag::leaf(std::move(w), true);
}

Var init_bias(int n, int fan_in, Rng& rng) {
  Tensor b({n});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int i = 0; i < n; ++i) b[i] = rng.uniform(-bound, bound);
  return ag::leaf(std::move(b), true);
}

}  // namespace

Conv2d::Conv2d(int cin, int cout, int k, int stride, Rng& rng)
    : k_(k), stride_(stride), pad_(k / 2) {
  const int fan_in = cin * k * k;
  w_ = init_conv_weight({cout, cin, k, k}, fan_in, rng);
  b_ = init_bias(cout, fan_in, rng);
}

Var Conv2d::operator()(const Var& x) const {
  return ag::conv2d(x, w_, b_, stride_, pad_);
}

void Conv2d::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".weight"] = w_;
  out[prefix + ".bias"] = b_;
}

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int k, int stride, Rng& rng)
    : k_(k), stride_(stride), pad_((k - 1) / 2) {
  const int fan_in = cin * k * k;
  w_ = init_conv_weight({cin, cout, k, k}, fan_in, rng);
  b_ = init_bias(cout, fan_in, rng);
}

Var ConvTranspose2d::operator()(const Var& x) const {
  const int ho = x->value.dim(1) * stride_;
  const int wo = x->value.dim(2) * stride_;
  return ag::conv_transpose2d(x, w_, b_, stride_, pad_, ho, wo);
}

void ConvTranspose2d::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".weight"] = w_;
  out[prefix + ".bias"] = b_;
}

MaskedConv2d::MaskedConv2d(int cin, int cout, int k, Rng& rng) : k_(k) {
  const int fan_in = cin * k * k;  // nominal; half the taps are masked off
  w_ = init_conv_weight({cout, cin, k, k}, fan_in, rng);
  b_ = init_bias(cout, fan_in, rng);
  mask_ = Tensor({cout, cin, k, k});
  const int kc = k / 2;
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const bool causal = ky < kc || (ky == kc && kx < kc);
          mask_[static_cast<std::int64_t>(((co * cin + ci) * k + ky) * k + kx)] =
              causal ? 1.0 : 0.0;
        }
      }
    }
  }
}

Var MaskedConv2d::operator()(const Var& x) const {
  Var wm = ag::mul(w_, ag::constant(mask_));
  return ag::conv2d(x, wm, b_, 1, k_ / 2);
}

void MaskedConv2d::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".weight"] = w_;
  out[prefix + ".bias"] = b_;
}

Gdn::Gdn(int channels, bool inverse, Rng& rng) : inverse_(inverse) {
  (void)rng;
  // beta = beta_min + beta_raw^2 initialized at 1, gamma = gamma_raw^2
  // initialized at 0.1 on the diagonal and 1e-4 elsewhere (nonzero so the
  // squared reparameterization keeps a gradient path).
  Tensor braw({channels});
  for (int i = 0; i < channels; ++i) braw[i] = std::sqrt(1.0 - ag::kGdnBetaMin);
  beta_raw_ = ag::leaf(std::move(braw), true);
  Tensor graw({channels, channels});
  for (int i = 0; i < channels; ++i) {
    for (int j = 0; j < channels; ++j) {
      graw[static_cast<std::int64_t>(i) * channels + j] =
          (i == j) ? std::sqrt(0.1) : 0.01;
    }
  }
  gamma_raw_ = ag::leaf(std::move(graw), true);
}

Var Gdn::effective_beta() const {
  return ag::add_scalar(ag::square(beta_raw_), ag::kGdnBetaMin);
}

Var Gdn::effective_gamma() const { return ag::square(gamma_raw_); }

Var Gdn::operator()(const Var& x) const {
  return ag::gdn(x, effective_beta(), effective_gamma(), inverse_);
}

void Gdn::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".beta_raw"] = beta_raw_;
  out[prefix + ".gamma_raw"] = gamma_raw_;
}

ResBlock::ResBlock(int channels, Rng& rng)
    : c1_(channels, channels, 3, 1, rng), c2_(channels, channels, 3, 1, rng) {}

Var ResBlock::operator()(const Var& x) const {
  return ag::add(x, c2_(ag::relu(c1_(x))));
}

void ResBlock::collect(ParamMap& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".conv1");
  c2_.collect(out, prefix + ".conv2");
}

void zero_grads(ParamMap& params) {
  for (auto& [name, p] : params) {
    if (p->grad_ready) p->grad.fill(0.0);
  }
}

double grad_norm(const ParamMap& params, const std::string& prefix) {
  double s = 0.0;
  for (const auto& [name, p] : params) {
    if (name.rfind(prefix, 0) != 0 || !p->grad_ready) continue;
    for (std::int64_t i = 0; i < p->grad.numel(); ++i) s += p->grad[i] * p->grad[i];
  }
  return std::sqrt(s);
}

}  // namespace cvc::nn
