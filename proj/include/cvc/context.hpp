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

// Reference frame -> feature tensor at full resolution: one convolution
// plus one residual block.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(int out_ch, Rng& rng);
  nn::Var operator()(const nn::Var& frame) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::Conv2d conv_;
  nn::ResBlock res_;
};

// Smooths the warped features into the final condition: one convolution
// plus one residual block (kept shallow on purpose).
class ContextRefiner {
 public:
  ContextRefiner() = default;
  ContextRefiner(int ch, Rng& rng);
  nn::Var operator()(const nn::Var& feat) const;
  void collect(nn::ParamMap& out, const std::string& prefix) const;

 private:
  nn::Conv2d conv_;
  nn::ResBlock res_;
};

// Condition generation: refine(warp(extract(ref), mv)). With motion_mode
// none the warp stage is skipped and the context comes from the unwarped
// reference features.
nn::Var generate_context(const nn::Var& ref, const nn::Var* mv,
                         const FeatureExtractor& fe, const ContextRefiner& cr,
                         MotionMode motion_mode);

}  // namespace cvc
