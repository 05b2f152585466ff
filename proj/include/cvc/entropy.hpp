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

#include <utility>
#include <vector>

#include "cvc/config.hpp"
#include "cvc/nn.hpp"

namespace cvc {

// sigma here is the Laplace *scale* parameter (the paper's notation is
// ambiguous between scale and stddev; scale is what the cited reference
// implementations use).
constexpr double kSigmaMin = 0.01;
constexpr double kLeakySlope = 0.1;

struct EntropyParams {
  Tensor mu;
  Tensor sigma;  // >= kSigmaMin everywhere
};

// ---- Laplace interval model -------------------------------------------

double laplace_cdf(double x, double mu, double sigma);

// Exact interval mass F(v+1/2) - F(v-1/2); stable in the far tails.
double laplace_interval_mass(double v, double mu, double sigma);

// -log2 of the interval mass, computed in the log domain (always finite).
double laplace_interval_bits(double v, double mu, double sigma);

// Masses over the symbol range [-r, r] with the tails folded into the edge
// symbols; sums to 1 exactly. Throws if sigma < kSigmaMin.
std::vector<double> laplace_mass_row(double mu, double sigma, int range_r);

// Per-element probability tables over [-r, r]; row i corresponds to the
// i-th element of the parameter tensors.
struct ProbabilityTable {
  int range_r = 0;
  std::vector<std::vector<double>> rows;
};

ProbabilityTable laplace_mass(const EntropyParams& params, int range_r);

// Model cross-entropy of integer symbols under per-element Laplace
// parameters (the training-time R term evaluated at rounded symbols).
double estimate_rate(const Tensor& symbols, const EntropyParams& params);

// ---- factorized (hyper-latent) model ----------------------------------

// Per-channel monotone CDF built from a tiny constrained network
// (softplus-positive matrices, tanh-bounded residual factors), evaluated at
// half-integer offsets. Used for the hyper latents z and s.
class FactorizedModel {
 public:
  FactorizedModel() = default;
  FactorizedModel(int channels, Rng& rng);

  int channels() const { return channels_; }

  // x: [C, 1, N] -> logits [C, 1, N]; F(x) = sigmoid(logits).
  nn::Var logits(const nn::Var& x) const;

  // Per-element code length in bits for (typically noise-quantized) values
  // arranged [C,H,W].
  nn::Var bits(const nn::Var& values) const;

  // CDF value per channel at a scalar point (eval path).
  double cdf(int channel, double x) const;

  // Folded masses over [-r, r] for every channel (eval/coding path).
  std::vector<std::vector<double>> masses_all(int range_r) const;

  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  int channels_ = 0;
  // filters 1 -> 3 -> 3 -> 3 -> 1
  nn::Var h1_, b1_, a1_, h2_, b2_, a2_, h3_, b3_, a3_, h4_, b4_;
};

// ---- prior networks ----------------------------------------------------

// y at /16 -> z at /64 (two extra stride-2 stages).
class HyperEncoder {
 public:
  HyperEncoder() = default;
  HyperEncoder(int in_ch, int hidden, int z_ch, Rng& rng);
  nn::Var operator()(const nn::Var& y) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::Conv2d c1_, c2_, c3_;
};

// z at /64 -> prior features at /16 matching the latent grid.
class HyperDecoder {
 public:
  HyperDecoder() = default;
  HyperDecoder(int z_ch, int hidden, int out_ch, Rng& rng);
  nn::Var operator()(const nn::Var& z_hat) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::ConvTranspose2d u1_, u2_;
  nn::Conv2d c3_;
};

// Context at full resolution -> temporal prior at /16: four stride-2
// convolutions with GDN after the first three.
class TemporalPriorEncoder {
 public:
  TemporalPriorEncoder() = default;
  TemporalPriorEncoder(int in_ch, int hidden, int out_ch, Rng& rng);
  nn::Var operator()(const nn::Var& ctx) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::Conv2d c1_, c2_, c3_, c4_;
  nn::Gdn g1_, g2_, g3_;
};

// Fuses hyper (+ optional temporal, + optional spatial) prior features into
// per-element (mu, sigma). Stage 1 is a 3x3 convolution over the non-causal
// priors; once the causal spatial features join, only 1x1 stages follow, so
// the fused parameters at a position depend on decoded latents strictly
// before it.
class PriorFusion {
 public:
  PriorFusion() = default;
  PriorFusion(int latent_ch, int hyper_feat_ch, int temporal_ch, int spatial_ch,
              Rng& rng);

  bool uses_temporal() const { return temporal_ch_ > 0; }
  bool uses_spatial() const { return spatial_ch_ > 0; }
  int latent_channels() const { return latent_ch_; }

  // Any prior the mode does not use must be passed as nullptr; passing a
  // tensor to an unused slot (or omitting a used one) is a config error.
  std::pair<nn::Var, nn::Var> operator()(const nn::Var& hyper_feat,
                                         const nn::Var* temporal_feat,
                                         const nn::Var* spatial_feat) const;

  // Batch stage-1 activation over the non-causal priors (shared by the
  // batch and the sequential paths).
  nn::Var stage1(const nn::Var& hyper_feat, const nn::Var* temporal_feat) const;

  void collect(nn::ParamMap& out, const std::string& prefix) const;

  const nn::Conv2d& stage2_conv() const { return s2_; }
  const nn::Conv2d& stage3_conv() const { return s3_; }

 private:
  int latent_ch_ = 0, temporal_ch_ = 0, spatial_ch_ = 0;
  nn::Conv2d s1_, s2_, s3_;
};

// Autoregressive prior over quantized latents: strict raster-causal masked
// convolution (no activation; the fusion stages consume it raw).
class SpatialPrior {
 public:
  SpatialPrior() = default;
  SpatialPrior(int latent_ch, int out_ch, Rng& rng);
  nn::Var operator()(const nn::Var& y_hat) const;
  const nn::MaskedConv2d& conv() const { return conv_; }
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::MaskedConv2d conv_;
};

// ---- sequential evaluation for coding ----------------------------------
//
// In the spatial-prior modes the coding parameters at raster position i
// depend on latents decoded before i. Encoder and decoder both walk this
// exact routine so the integer CDF tables match bit for bit.
struct SequentialFusion {
  const SpatialPrior* spatial = nullptr;
  const PriorFusion* fusion = nullptr;
  Tensor stage1_act;  // [F1, h, w]

  // y_hat: latent buffer [M, h, w]; positions at or after (py, px) in
  // raster order are never read. mu/sigma must hold M doubles.
  void params_at(const Tensor& y_hat, int py, int px, double* mu,
                 double* sigma) const;
};

// Shannon entropy in bits of a discrete distribution (helper shared by
// tests and the benchmark demonstrator).
double shannon_entropy_bits(const std::vector<double>& pmf);

}  // namespace cvc
