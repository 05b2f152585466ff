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

#include "cvc/config.hpp"
#include "cvc/nn.hpp"

namespace cvc {

constexpr int kLatentCh = 96;   // frame latents at /16
constexpr int kCodecHidden = 64;
constexpr int kDecoderFeatCh = 32;  // upsampled feature width at full res
constexpr int kPadMultiple = 64;    // hyper latents live at /64

enum class QuantMode { kRound, kNoise };

// Rounding (ties away from zero, straight-through gradient) or the additive
// uniform-noise training relaxation.
nn::Var quantize(const nn::Var& x, QuantMode mode, Rng* rng = nullptr);
Tensor quantize(const Tensor& x, QuantMode mode, Rng* rng = nullptr);

// Four stride-2 stages, GDN plus one residual block on the first three,
// plain conv head to the latent width.
class LatentEncoder {
 public:
  LatentEncoder() = default;
  LatentEncoder(int in_ch, Rng& rng);
  nn::Var operator()(const nn::Var& x) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::Conv2d c1_, c2_, c3_, c4_;
  nn::Gdn g1_, g2_, g3_;
  nn::ResBlock r1_, r2_, r3_;
};

// Mirrored upsampler: latents back to full resolution features.
class LatentDecoder {
 public:
  LatentDecoder() = default;
  explicit LatentDecoder(Rng& rng);
  nn::Var operator()(const nn::Var& y_hat) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::ConvTranspose2d u1_, u2_, u3_, u4_;
  nn::Gdn ig1_, ig2_, ig3_;
  nn::ResBlock r1_, r2_, r3_;
};

// Fuses full-resolution features with the condition (when present) into the
// reconstructed frame. cond_ch == 0 builds a head without a condition input
// (residue mode and the intra codec).
class ReconHead {
 public:
  ReconHead() = default;
  ReconHead(int cond_ch, Rng& rng);
  nn::Var operator()(const nn::Var& feat, const nn::Var* cond) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  int cond_ch_ = 0;
  nn::Conv2d c1_, c2_;
  nn::ResBlock res_;
};

// Channel width of the condition tensor consumed by the encoder/decoder for
// a given mode (0 for residue, which subtracts instead of concatenating).
int condition_channels(const CodecConfig& config);

}  // namespace cvc
