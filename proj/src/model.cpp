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

#include "cvc/model.hpp"

#include <cmath>

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

IntraModel IntraModel::init(Rng& rng) {
  IntraModel m;
  m.enc = LatentEncoder(3, rng);
  m.dec = LatentDecoder(rng);
  m.head = ReconHead(0, rng);
  m.hyper_enc = HyperEncoder(kLatentCh, kHyperCh, kHyperCh, rng);
  m.hyper_dec = HyperDecoder(kHyperCh, kHyperCh, kHyperFeatCh, rng);
  m.fusion = PriorFusion(kLatentCh, kHyperFeatCh, 0, 0, rng);
  m.factorized_z = FactorizedModel(kHyperCh, rng);
  return m;
}

void IntraModel::collect(nn::ParamMap& out, const std::string& prefix) const {
  enc.collect(out, prefix + ".enc");
  dec.collect(out, prefix + ".dec");
  head.collect(out, prefix + ".head");
  hyper_enc.collect(out, prefix + ".hyper_enc");
  hyper_dec.collect(out, prefix + ".hyper_dec");
  fusion.collect(out, prefix + ".fusion");
  factorized_z.collect(out, prefix + ".factorized_z");
}

VideoCodecModel VideoCodecModel::init(const CodecConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  VideoCodecModel m;
  m.config = config;
  if (config.motion_mode == MotionMode::kMemc) {
    m.motion = MotionCodec::init(rng);
  }
  if (config.condition_mode == ConditionMode::kContextFeature) {
    m.fe = FeatureExtractor(config.context_dim, rng);
    m.cr = ContextRefiner(config.context_dim, rng);
  }
  m.enc = LatentEncoder(3 + condition_channels(config), rng);
  m.dec = LatentDecoder(rng);
  m.head = ReconHead(condition_channels(config), rng);
  m.hyper_enc = HyperEncoder(kLatentCh, kHyperCh, kHyperCh, rng);
  m.hyper_dec = HyperDecoder(kHyperCh, kHyperCh, kHyperFeatCh, rng);
  if (config.uses_temporal_prior()) {
    m.tpe = TemporalPriorEncoder(m.temporal_source_channels(), kTemporalCh,
                                 kTemporalCh, rng);
  }
  if (config.uses_spatial_prior()) {
    m.spatial = SpatialPrior(kLatentCh, kSpatialCh, rng);
  }
  m.fusion = PriorFusion(kLatentCh, kHyperFeatCh,
                         config.uses_temporal_prior() ? kTemporalCh : 0,
                         config.uses_spatial_prior() ? kSpatialCh : 0, rng);
  m.factorized_z = FactorizedModel(kHyperCh, rng);
  m.intra = IntraModel::init(rng);
  return m;
}

nn::ParamMap VideoCodecModel::parameters() const {
  nn::ParamMap out;
  if (motion) motion->collect(out, "motion");
  if (fe) fe->collect(out, "main.feature_extract");
  if (cr) cr->collect(out, "main.context_refine");
  enc.collect(out, "main.enc");
  dec.collect(out, "main.dec");
  head.collect(out, "main.head");
  hyper_enc.collect(out, "main.hyper_enc");
  hyper_dec.collect(out, "main.hyper_dec");
  if (tpe) tpe->collect(out, "main.temporal_prior");
  if (spatial) spatial->collect(out, "main.spatial_prior");
  fusion.collect(out, "main.fusion");
  factorized_z.collect(out, "main.factorized_z");
  intra.collect(out, "intra");
  return out;
}

Var assemble_encoder_input(const CodecConfig& config, const Var& x, const Var& cond) {
  switch (config.condition_mode) {
    case ConditionMode::kContextFeature:
    case ConditionMode::kRgbPrediction:
      return ag::concat_ch({x, cond});
    case ConditionMode::kResidue:
      return ag::sub(x, cond);
  }
  throw ContractError("bad condition mode");
}

Var reconstruct_frame(const VideoCodecModel& m, const Var& y_hat, const Var& cond) {
  Var feat = m.dec(y_hat);
  Var out;
  switch (m.config.condition_mode) {
    case ConditionMode::kContextFeature:
    case ConditionMode::kRgbPrediction:
      out = m.head(feat, &cond);
      break;
    case ConditionMode::kResidue:
      out = ag::add(m.head(feat, nullptr), cond);
      break;
    default:
      throw ContractError("bad condition mode");
  }
  return ag::clamp_ste(out, 0.0, 1.0);
}

namespace {
void check_padded(const Tensor& x) {
  check_shape(x.ndim() == 3, "frame must be [C,H,W]");
  check_shape(x.dim(1) % kPadMultiple == 0 && x.dim(2) % kPadMultiple == 0,
              "frame dimensions must be padded to multiples of " +
                  std::to_string(kPadMultiple));
}
}  // namespace

Tensor contextual_encode(const VideoCodecModel& m, const Tensor& x,
                         const Tensor& cond) {
  check_padded(x);
  check_shape(cond.dim(1) == x.dim(1) && cond.dim(2) == x.dim(2),
              "condition dims must match the padded frame");
  ag::NoGradGuard ng;
  Var in = assemble_encoder_input(m.config, ag::constant(x), ag::constant(cond));
  return m.enc(in)->value;
}

Tensor contextual_decode(const VideoCodecModel& m, const Tensor& y_hat,
                         const Tensor& cond) {
  check_shape(y_hat.ndim() == 3 && y_hat.dim(0) == kLatentCh,
              "latents must be [96,h,w]");
  for (std::int64_t i = 0; i < y_hat.numel(); ++i) {
    if (y_hat[i] != std::round(y_hat[i])) {
      throw ContractError("contextual_decode: latents must be quantized");
    }
  }
  ag::NoGradGuard ng;
  return reconstruct_frame(m, ag::constant(y_hat), ag::constant(cond))->value;
}

}  // namespace cvc
