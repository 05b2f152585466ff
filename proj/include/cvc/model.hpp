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

#include <optional>

#include "cvc/codec.hpp"
#include "cvc/context.hpp"
#include "cvc/entropy.hpp"
#include "cvc/motion.hpp"

namespace cvc {

constexpr int kHyperCh = 64;      // z / s channels
constexpr int kHyperFeatCh = 96;  // hyper-decoded feature width (frame path)
constexpr int kTemporalCh = 64;
constexpr int kSpatialCh = 96;

// Self-contained hyperprior image codec used as the learned intra plug.
struct IntraModel {
  LatentEncoder enc;
  LatentDecoder dec;
  ReconHead head;  // no condition input
  HyperEncoder hyper_enc;
  HyperDecoder hyper_dec;
  PriorFusion fusion;  // hyper prior only
  FactorizedModel factorized_z;

  static IntraModel init(Rng& rng);
  void collect(nn::ParamMap& out, const std::string& prefix) const;
};

// Everything trainable, grouped as
//   motion.*  flow estimation + MV codec + MV entropy model
//   main.*    context, contextual codec, frame entropy model
//   intra.*   the learned intra plug
// Submodules that the configuration cannot exercise are not instantiated.
struct VideoCodecModel {
  CodecConfig config;

  std::optional<MotionCodec> motion;        // motion_mode == memc
  std::optional<FeatureExtractor> fe;       // condition_mode == context_feature
  std::optional<ContextRefiner> cr;
  LatentEncoder enc;
  LatentDecoder dec;
  ReconHead head;
  HyperEncoder hyper_enc;
  HyperDecoder hyper_dec;
  std::optional<TemporalPriorEncoder> tpe;  // temporal entropy modes
  std::optional<SpatialPrior> spatial;      // spatial entropy modes
  PriorFusion fusion;
  FactorizedModel factorized_z;
  IntraModel intra;

  static VideoCodecModel init(const CodecConfig& config, std::uint64_t seed);

  bool has_motion() const { return motion.has_value(); }
  nn::ParamMap parameters() const;

  // Width of the channel the temporal prior encoder consumes: the learned
  // context in context_feature mode, the 3-channel pixel prediction in the
  // pixel-domain modes.
  int temporal_source_channels() const {
    return config.condition_mode == ConditionMode::kContextFeature
               ? config.context_dim
               : 3;
  }
};

// ---- eval-path single ops (deterministic given weights) -----------------

// cond is the condition tensor for the configured mode: the context
// (context_feature), or the pixel prediction (rgb_prediction / residue).
Tensor contextual_encode(const VideoCodecModel& m, const Tensor& x,
                         const Tensor& cond);

// y_hat must be integer-valued (coding-path contract).
Tensor contextual_decode(const VideoCodecModel& m, const Tensor& y_hat,
                         const Tensor& cond);

// Graph-building variants shared by the training loss and the eval ops.
nn::Var assemble_encoder_input(const CodecConfig& config, const nn::Var& x,
                               const nn::Var& cond);
nn::Var reconstruct_frame(const VideoCodecModel& m, const nn::Var& y_hat,
                          const nn::Var& cond);

}  // namespace cvc
