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

#include "cvc/entropy.hpp"
#include "cvc/nn.hpp"

namespace cvc {

// Motion fields are [2,H,W]: channel 0 horizontal, channel 1 vertical
// displacement in pixels. warp(src, m)(p) samples src at p + m(p).

constexpr int kFlowLevels = 4;  // frames must be divisible by 2^kFlowLevels
constexpr int kMvLatentCh = 64;
constexpr int kMvHiddenCh = 64;

// One pyramid level: a 5-layer conv stack estimating residual flow from
// [current, warped reference, upsampled flow] (8 input channels).
class FlowLevel {
 public:
  FlowLevel() = default;
  explicit FlowLevel(Rng& rng);
  nn::Var operator()(const nn::Var& in) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::Conv2d c1_, c2_, c3_, c4_, c5_;
};

// Coarse-to-fine pyramid estimator in the style of the classic lightweight
// pyramid flow networks.
class FlowNet {
 public:
  FlowNet() = default;
  explicit FlowNet(Rng& rng);
  // ref, cur: [3,H,W] with H, W divisible by 2^kFlowLevels.
  nn::Var operator()(const nn::Var& ref, const nn::Var& cur) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  std::vector<FlowLevel> levels_;  // index 0 = coarsest
};

// MV encoder: four stride-2 stages with GDN, to kMvLatentCh at /16.
class MvEncoder {
 public:
  MvEncoder() = default;
  explicit MvEncoder(Rng& rng);
  nn::Var operator()(const nn::Var& m) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::Conv2d c1_, c2_, c3_, c4_;
  nn::Gdn g1_, g2_, g3_;
};

// MV decoder (mirrored) plus a small residual refinement stack on the
// reconstructed field.
class MvDecoder {
 public:
  MvDecoder() = default;
  explicit MvDecoder(Rng& rng);
  nn::Var operator()(const nn::Var& g_hat) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::ConvTranspose2d u1_, u2_, u3_, u4_;
  nn::Gdn ig1_, ig2_, ig3_;
  nn::Conv2d r1_, r2_, r3_;
};

// All trainable state of the motion branch, including the MV entropy model
// (hyper + autoregressive, no temporal prior).
struct MotionCodec {
  FlowNet flow;
  MvEncoder encoder;
  MvDecoder decoder;
  HyperEncoder hyper_enc;
  HyperDecoder hyper_dec;
  SpatialPrior spatial;
  PriorFusion fusion;
  FactorizedModel factorized_s;

  static MotionCodec init(Rng& rng);
  void collect(nn::ParamMap& out, const std::string& prefix) const;
};

// Quantized MV latents: g_hat at /16, s_hat (hyper) at /64.
struct MvLatentBlock {
  Tensor g_hat;
  Tensor s_hat;
};

// ---- module-level ops (eval path, deterministic given weights) ----------

Tensor estimate_flow(const Tensor& ref, const Tensor& cur, const FlowNet& net);

MvLatentBlock mv_encode(const Tensor& m, const MotionCodec& codec);
Tensor mv_decode(const MvLatentBlock& block, const MotionCodec& codec);

}  // namespace cvc
