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

#include <string>

#include "cvc/common.hpp"

namespace cvc {

// How the inter-frame encoder/decoder consume the temporal condition.
enum class ConditionMode {
  kContextFeature = 0,  // concatenate the learned feature-domain context
  kRgbPrediction = 1,   // concatenate the 3-channel pixel prediction
  kResidue = 2,         // subtract the pixel prediction (classic baseline)
};

enum class MotionMode {
  kMemc = 0,  // flow estimation + coded motion + warping
  kNone = 1,  // condition derived from the unwarped reference
};

// Which priors feed the (mu, sigma) estimate for the frame latents.
enum class EntropyMode {
  kHyperOnly = 0,
  kHyperSpatial = 1,
  kHyperTemporal = 2,  // fully parallel decode
  kHyperSpatialTemporal = 3,
};

enum class DistortionMetric {
  kMse = 0,
  kMsSsim = 1,
};

struct CodecConfig {
  ConditionMode condition_mode = ConditionMode::kContextFeature;
  MotionMode motion_mode = MotionMode::kMemc;
  EntropyMode entropy_mode = EntropyMode::kHyperSpatialTemporal;
  int context_dim = 64;  // one of {3, 16, 64, 256}
  double lambda = 1024.0;
  DistortionMetric distortion_metric = DistortionMetric::kMse;

  void validate() const {
    if (context_dim != 3 && context_dim != 16 && context_dim != 64 &&
        context_dim != 256) {
      throw ConfigError("context_dim must be one of {3, 16, 64, 256}, got " +
                        std::to_string(context_dim));
    }
    if (!(lambda > 0.0)) {
      throw ConfigError("lambda must be positive");
    }
  }

  bool uses_spatial_prior() const {
    return entropy_mode == EntropyMode::kHyperSpatial ||
           entropy_mode == EntropyMode::kHyperSpatialTemporal;
  }
  bool uses_temporal_prior() const {
    return entropy_mode == EntropyMode::kHyperTemporal ||
           entropy_mode == EntropyMode::kHyperSpatialTemporal;
  }
};

std::string to_string(ConditionMode m);
std::string to_string(MotionMode m);
std::string to_string(EntropyMode m);
std::string to_string(DistortionMetric m);

ConditionMode condition_mode_from_string(const std::string& s);
MotionMode motion_mode_from_string(const std::string& s);
EntropyMode entropy_mode_from_string(const std::string& s);
DistortionMetric distortion_metric_from_string(const std::string& s);

}  // namespace cvc
