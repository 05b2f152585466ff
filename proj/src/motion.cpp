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

#include "cvc/motion.hpp"

#include <cmath>

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

FlowLevel::FlowLevel(Rng& rng)
    : c1_(8, 32, 3, 1, rng),
      c2_(32, 48, 3, 1, rng),
      c3_(48, 32, 3, 1, rng),
      c4_(32, 16, 3, 1, rng),
      c5_(16, 2, 3, 1, rng) {}

Var FlowLevel::operator()(const Var& in) const {
  Var v = ag::leaky_relu(c1_(in), kLeakySlope);
  v = ag::leaky_relu(c2_(v), kLeakySlope);
  v = ag::leaky_relu(c3_(v), kLeakySlope);
  v = ag::leaky_relu(c4_(v), kLeakySlope);
  return c5_(v);
}

void FlowLevel::collect(nn::ParamMap& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".conv1");
  c2_.collect(out, prefix + ".conv2");
  c3_.collect(out, prefix + ".conv3");
  c4_.collect(out, prefix + ".conv4");
  c5_.collect(out, prefix + ".conv5");
}

FlowNet::FlowNet(Rng& rng) {
  levels_.reserve(kFlowLevels);
  for (int i = 0; i < kFlowLevels; ++i) levels_.emplace_back(rng);
}

Var FlowNet::operator()(const Var& ref, const Var& cur) const {
  check_shape(ref->value.ndim() == 3 && cur->value.ndim() == 3,
              "estimate_flow: frames must be [3,H,W]");
  check_shape(ref->value.same_shape(cur->value),
              "estimate_flow: frame dimension mismatch");
  const int h = ref->value.dim(1), w = ref->value.dim(2);
  const int div = 1 << kFlowLevels;
  check_shape(h % div == 0 && w % div == 0,
              "estimate_flow: dimensions must be divisible by " + std::to_string(div));

  // Image pyramids, finest first.
  std::vector<Var> refs{ref}, curs{cur};
  for (int l = 1; l < kFlowLevels; ++l) {
    refs.push_back(ag::avg_pool2(refs.back()));
    curs.push_back(ag::avg_pool2(curs.back()));
  }

  Var flow = ag::constant(Tensor({2, h / (1 << (kFlowLevels - 1)),
                                  w / (1 << (kFlowLevels - 1))},
                                 0.0));
  for (int l = kFlowLevels - 1; l >= 0; --l) {
    if (l != kFlowLevels - 1) {
      flow = ag::mul_scalar(ag::upsample_bilinear2(flow), 2.0);
    }
    Var warped = ag::warp_bilinear(refs[static_cast<size_t>(l)], flow);
    Var in = ag::concat_ch({curs[static_cast<size_t>(l)], warped, flow});
    Var delta = levels_[static_cast<size_t>(kFlowLevels - 1 - l)](in);
    flow = ag::add(flow, delta);
  }
  return flow;
}

void FlowNet::collect(nn::ParamMap& out, const std::string& prefix) const {
  for (int i = 0; i < kFlowLevels; ++i) {
    levels_[static_cast<size_t>(i)].collect(out,
                                            prefix + ".level" + std::to_string(i));
  }
}

MvEncoder::MvEncoder(Rng& rng)
    : c1_(2, kMvHiddenCh, 3, 2, rng),
      c2_(kMvHiddenCh, kMvHiddenCh, 3, 2, rng),
      c3_(kMvHiddenCh, kMvHiddenCh, 3, 2, rng),
      c4_(kMvHiddenCh, kMvLatentCh, 3, 2, rng),
      g1_(kMvHiddenCh, false, rng),
      g2_(kMvHiddenCh, false, rng),
      g3_(kMvHiddenCh, false, rng) {}

Var MvEncoder::operator()(const Var& m) const {
  Var v = g1_(c1_(m));
  v = g2_(c2_(v));
  v = g3_(c3_(v));
  return c4_(v);
}

void MvEncoder::collect(nn::ParamMap& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".conv1");
  c2_.collect(out, prefix + ".conv2");
  c3_.collect(out, prefix + ".conv3");
  c4_.collect(out, prefix + ".conv4");
  g1_.collect(out, prefix + ".gdn1");
  g2_.collect(out, prefix + ".gdn2");
  g3_.collect(out, prefix + ".gdn3");
}

MvDecoder::MvDecoder(Rng& rng)
    : u1_(kMvLatentCh, kMvHiddenCh, 3, 2, rng),
      u2_(kMvHiddenCh, kMvHiddenCh, 3, 2, rng),
      u3_(kMvHiddenCh, kMvHiddenCh, 3, 2, rng),
      u4_(kMvHiddenCh, 2, 3, 2, rng),
      ig1_(kMvHiddenCh, true, rng),
      ig2_(kMvHiddenCh, true, rng),
      ig3_(kMvHiddenCh, true, rng),
      r1_(2, 32, 3, 1, rng),
      r2_(32, 32, 3, 1, rng),
      r3_(32, 2, 3, 1, rng) {}

Var MvDecoder::operator()(const Var& g_hat) const {
  Var v = ig1_(u1_(g_hat));
  v = ig2_(u2_(v));
  v = ig3_(u3_(v));
  Var m0 = u4_(v);
  // Residual refinement of the reconstructed field.
  Var r = ag::leaky_relu(r1_(m0), kLeakySlope);
  r = ag::leaky_relu(r2_(r), kLeakySlope);
  return ag::add(m0, r3_(r));
}

void MvDecoder::collect(nn::ParamMap& out, const std::string& prefix) const {
  u1_.collect(out, prefix + ".up1");
  u2_.collect(out, prefix + ".up2");
  u3_.collect(out, prefix + ".up3");
  u4_.collect(out, prefix + ".up4");
  ig1_.collect(out, prefix + ".igdn1");
  ig2_.collect(out, prefix + ".igdn2");
  ig3_.collect(out, prefix + ".igdn3");
  r1_.collect(out, prefix + ".refine1");
  r2_.collect(out, prefix + ".refine2");
  r3_.collect(out, prefix + ".refine3");
}

MotionCodec MotionCodec::init(Rng& rng) {
  MotionCodec mc;
  mc.flow = FlowNet(rng);
  mc.encoder = MvEncoder(rng);
  mc.decoder = MvDecoder(rng);
  mc.hyper_enc = HyperEncoder(kMvLatentCh, kMvHiddenCh, kMvLatentCh, rng);
  mc.hyper_dec = HyperDecoder(kMvLatentCh, kMvHiddenCh, kMvLatentCh, rng);
  mc.spatial = SpatialPrior(kMvLatentCh, kMvLatentCh, rng);
  mc.fusion = PriorFusion(kMvLatentCh, kMvLatentCh, 0, kMvLatentCh, rng);
  mc.factorized_s = FactorizedModel(kMvLatentCh, rng);
  return mc;
}

void MotionCodec::collect(nn::ParamMap& out, const std::string& prefix) const {
  flow.collect(out, prefix + ".flow");
  encoder.collect(out, prefix + ".mv_enc");
  decoder.collect(out, prefix + ".mv_dec");
  hyper_enc.collect(out, prefix + ".mv_hyper_enc");
  hyper_dec.collect(out, prefix + ".mv_hyper_dec");
  spatial.collect(out, prefix + ".mv_spatial");
  fusion.collect(out, prefix + ".mv_fusion");
  factorized_s.collect(out, prefix + ".mv_factorized");
}

namespace {
void check_mv_dims(int h, int w) {
  check_shape(h % 64 == 0 && w % 64 == 0,
              "motion coding requires dimensions padded to multiples of 64");
}

Tensor round_tensor(const Tensor& t) {
  Tensor out = t;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::round(out[i]);
  return out;
}
}  // namespace

Tensor estimate_flow(const Tensor& ref, const Tensor& cur, const FlowNet& net) {
  ag::NoGradGuard ng;
  return net(ag::constant(ref), ag::constant(cur))->value;
}

MvLatentBlock mv_encode(const Tensor& m, const MotionCodec& codec) {
  check_shape(m.ndim() == 3 && m.dim(0) == 2, "mv_encode: field must be [2,H,W]");
  check_mv_dims(m.dim(1), m.dim(2));
  ag::NoGradGuard ng;
  Var g = codec.encoder(ag::constant(m));
  Var s = codec.hyper_enc(g);
  MvLatentBlock block;
  block.g_hat = round_tensor(g->value);
  block.s_hat = round_tensor(s->value);
  return block;
}

Tensor mv_decode(const MvLatentBlock& block, const MotionCodec& codec) {
  check_shape(block.g_hat.ndim() == 3 && block.g_hat.dim(0) == kMvLatentCh,
              "mv_decode: bad latent block");
  check_mv_dims(block.g_hat.dim(1) * 16, block.g_hat.dim(2) * 16);
  ag::NoGradGuard ng;
  return codec.decoder(ag::constant(block.g_hat))->value;
}

}  // namespace cvc
