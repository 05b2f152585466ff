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

#include "cvc/context.hpp"

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

FeatureExtractor::FeatureExtractor(int out_ch, Rng& rng)
    : conv_(3, out_ch, 3, 1, rng), res_(out_ch, rng) {}

Var FeatureExtractor::operator()(const Var& frame) const {
  return res_(conv_(frame));
}

void FeatureExtractor::collect(nn::ParamMap& out, const std::string& prefix) const {
  conv_.collect(out, prefix + ".conv");
  res_.collect(out, prefix + ".res");
}

ContextRefiner::ContextRefiner(int ch, Rng& rng)
    : conv_(ch, ch, 3, 1, rng), res_(ch, rng) {}

Var ContextRefiner::operator()(const Var& feat) const { return res_(conv_(feat)); }

void ContextRefiner::collect(nn::ParamMap& out, const std::string& prefix) const {
  conv_.collect(out, prefix + ".conv");
  res_.collect(out, prefix + ".res");
}

Var generate_context(const Var& ref, const Var* mv, const FeatureExtractor& fe,
                     const ContextRefiner& cr, MotionMode motion_mode) {
  Var feat = fe(ref);
  if (motion_mode == MotionMode::kMemc) {
    if (mv == nullptr) throw ArgumentError("generate_context: motion field required");
    check_shape(mv->get()->value.dim(1) == ref->value.dim(1) &&
                    mv->get()->value.dim(2) == ref->value.dim(2),
                "generate_context: motion/frame dimension mismatch");
    feat = ag::warp_bilinear(feat, *mv);
  }
  return cr(feat);
}

}  // namespace cvc
