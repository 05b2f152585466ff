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

#include "cvc/codec.hpp"

#include <cmath>

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

Var quantize(const Var& x, QuantMode mode, Rng* rng) {
  if (mode == QuantMode::kRound) return ag::round_ste(x);
  if (rng == nullptr) throw ArgumentError("quantize: noise mode needs an rng");
  return ag::uniform_noise(x, *rng);
}

Tensor quantize(const Tensor& x, QuantMode mode, Rng* rng) {
  Tensor out = x;
  if (mode == QuantMode::kRound) {
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::round(out[i]);
  } else {
    if (rng == nullptr) throw ArgumentError("quantize: noise mode needs an rng");
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += rng->uniform(-0.5, 0.5);
  }
  return out;
}

LatentEncoder::LatentEncoder(int in_ch, Rng& rng)
    : c1_(in_ch, kCodecHidden, 5, 2, rng),
      c2_(kCodecHidden, kCodecHidden, 5, 2, rng),
      c3_(kCodecHidden, kCodecHidden, 5, 2, rng),
      c4_(kCodecHidden, kLatentCh, 5, 2, rng),
      g1_(kCodecHidden, false, rng),
      g2_(kCodecHidden, false, rng),
      g3_(kCodecHidden, false, rng),
      r1_(kCodecHidden, rng),
      r2_(kCodecHidden, rng),
      r3_(kCodecHidden, rng) {}

Var LatentEncoder::operator()(const Var& x) const {
  Var v = r1_(g1_(c1_(x)));
  v = r2_(g2_(c2_(v)));
  v = r3_(g3_(c3_(v)));
  return c4_(v);
}

void LatentEncoder::collect(nn::ParamMap& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".conv1");
  c2_.collect(out, prefix + ".conv2");
  c3_.collect(out, prefix + ".conv3");
  c4_.collect(out, prefix + ".conv4");
  g1_.collect(out, prefix + ".gdn1");
  g2_.collect(out, prefix + ".gdn2");
  g3_.collect(out, prefix + ".gdn3");
  r1_.collect(out, prefix + ".res1");
  r2_.collect(out, prefix + ".res2");
  r3_.collect(out, prefix + ".res3");
}

LatentDecoder::LatentDecoder(Rng& rng)
    : u1_(kLatentCh, kCodecHidden, 5, 2, rng),
      u2_(kCodecHidden, kCodecHidden, 5, 2, rng),
      u3_(kCodecHidden, kCodecHidden, 5, 2, rng),
      u4_(kCodecHidden, kDecoderFeatCh, 5, 2, rng),
      ig1_(kCodecHidden, true, rng),
      ig2_(kCodecHidden, true, rng),
      ig3_(kCodecHidden, true, rng),
      r1_(kCodecHidden, rng),
      r2_(kCodecHidden, rng),
      r3_(kCodecHidden, rng) {}

Var LatentDecoder::operator()(const Var& y_hat) const {
  Var v = r1_(ig1_(u1_(y_hat)));
  v = r2_(ig2_(u2_(v)));
  v = r3_(ig3_(u3_(v)));
  return u4_(v);
}

void LatentDecoder::collect(nn::ParamMap& out, const std::string& prefix) const {
  u1_.collect(out, prefix + ".up1");
  u2_.collect(out, prefix + ".up2");
  u3_.collect(out, prefix + ".up3");
  u4_.collect(out, prefix + ".up4");
  ig1_.collect(out, prefix + ".igdn1");
  ig2_.collect(out, prefix + ".igdn2");
  ig3_.collect(out, prefix + ".igdn3");
  r1_.collect(out, prefix + ".res1");
  r2_.collect(out, prefix + ".res2");
  r3_.collect(out, prefix + ".res3");
}

ReconHead::ReconHead(int cond_ch, Rng& rng)
    : cond_ch_(cond_ch),
      c1_(kDecoderFeatCh + cond_ch, kDecoderFeatCh, 3, 1, rng),
      c2_(kDecoderFeatCh, 3, 3, 1, rng),
      res_(kDecoderFeatCh, rng) {}

Var ReconHead::operator()(const Var& feat, const Var* cond) const {
  Var in = feat;
  if (cond_ch_ > 0) {
    if (cond == nullptr) throw ContractError("recon head: condition expected");
    in = ag::concat_ch({feat, *cond});
  } else if (cond != nullptr) {
    throw ContractError("recon head: no condition input in this mode");
  }
  return c2_(res_(c1_(in)));
}

void ReconHead::collect(nn::ParamMap& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".conv1");
  c2_.collect(out, prefix + ".conv2");
  res_.collect(out, prefix + ".res");
}

int condition_channels(const CodecConfig& config) {
  switch (config.condition_mode) {
    case ConditionMode::kContextFeature: return config.context_dim;
    case ConditionMode::kRgbPrediction: return 3;
    case ConditionMode::kResidue: return 0;
  }
  throw ContractError("bad condition mode");
}

}  // namespace cvc
