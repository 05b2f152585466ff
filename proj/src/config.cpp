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

#include "cvc/config.hpp"

namespace cvc {

std::string to_string(ConditionMode m) {
  switch (m) {
    case ConditionMode::kContextFeature: return "context_feature";
    case ConditionMode::kRgbPrediction: return "rgb_prediction";
    case ConditionMode::kResidue: return "residue";
  }
  throw ContractError("bad ConditionMode");
}

std::string to_string(MotionMode m) {
  switch (m) {
    case MotionMode::kMemc: return "memc";
    case MotionMode::kNone: return "none";
  }
  throw ContractError("bad MotionMode");
}

std::string to_string(EntropyMode m) {
  switch (m) {
    case EntropyMode::kHyperOnly: return "hyper_only";
    case EntropyMode::kHyperSpatial: return "hyper_spatial";
    case EntropyMode::kHyperTemporal: return "hyper_temporal";
    case EntropyMode::kHyperSpatialTemporal: return "hyper_spatial_temporal";
  }
  throw ContractError("bad EntropyMode");
}

std::string to_string(DistortionMetric m) {
  switch (m) {
    case DistortionMetric::kMse: return "mse";
    case DistortionMetric::kMsSsim: return "ms_ssim";
  }
  throw ContractError("bad DistortionMetric");
}

ConditionMode condition_mode_from_string(const std::string& s) {
  if (s == "context_feature") return ConditionMode::kContextFeature;
  if (s == "rgb_prediction") return ConditionMode::kRgbPrediction;
  if (s == "residue") return ConditionMode::kResidue;
  throw ConfigError("unknown condition_mode: " + s);
}

MotionMode motion_mode_from_string(const std::string& s) {
  if (s == "memc") return MotionMode::kMemc;
  if (s == "none") return MotionMode::kNone;
  throw ConfigError("unknown motion_mode: " + s);
}

EntropyMode entropy_mode_from_string(const std::string& s) {
  if (s == "hyper_only") return EntropyMode::kHyperOnly;
  if (s == "hyper_spatial") return EntropyMode::kHyperSpatial;
  if (s == "hyper_temporal") return EntropyMode::kHyperTemporal;
  if (s == "hyper_spatial_temporal") return EntropyMode::kHyperSpatialTemporal;
  throw ConfigError("unknown entropy_mode: " + s);
}

DistortionMetric distortion_metric_from_string(const std::string& s) {
  if (s == "mse") return DistortionMetric::kMse;
  if (s == "ms_ssim") return DistortionMetric::kMsSsim;
  throw ConfigError("unknown distortion_metric: " + s);
}

}  // namespace cvc
