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

#include <cmath>

#include "cvc/context.hpp"
#include "cvc/synthetic.hpp"
#include "cvc/training.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvc;
using cvc::testutil::random_tensor;

namespace {

double pearson(const Tensor& a, const Tensor& b) {
  const std::int64_t n = a.numel();
  double ma = 0.0, mb = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_SUITE_BEGIN("context");

TEST_CASE("feature extraction shapes per configured context dim") {
  Rng rng(3);
  ag::NoGradGuard ng;
  auto frame = ag::constant(random_tensor({3, 64, 64}, rng, 0.0, 1.0));
  for (int dim : {3, 16, 64}) {
    FeatureExtractor fe(dim, rng);
    auto feat = fe(frame);
    CHECK(feat->value.shape() == std::vector<int>{dim, 64, 64});
    auto feat2 = fe(frame);
    for (std::int64_t i = 0; i < feat->value.numel(); ++i) {
      CHECK(feat->value[i] == feat2->value[i]);
    }
  }
}

TEST_CASE("generate_context equals the manual three-stage composition") {
  Rng rng(5);
  ag::NoGradGuard ng;
  FeatureExtractor fe(64, rng);
  ContextRefiner cr(64, rng);
  auto ref = ag::constant(random_tensor({3, 64, 64}, rng, 0.0, 1.0));
  auto mv = ag::constant(random_tensor({2, 64, 64}, rng, -2.0, 2.0));

  auto ctx = generate_context(ref, &mv, fe, cr, MotionMode::kMemc);
  auto manual = cr(ag::warp_bilinear(fe(ref), mv));
  CHECK(ctx->value.shape() == std::vector<int>{64, 64, 64});
  for (std::int64_t i = 0; i < ctx->value.numel(); ++i) {
    CHECK(ctx->value[i] == manual->value[i]);
  }

  // Zero motion: warp is the identity, so the context equals cr(fe(ref)).
  auto zero = ag::constant(Tensor({2, 64, 64}, 0.0));
  auto ctx0 = generate_context(ref, &zero, fe, cr, MotionMode::kMemc);
  auto nowarp = cr(fe(ref));
  for (std::int64_t i = 0; i < ctx0->value.numel(); ++i) {
    CHECK(ctx0->value[i] == nowarp->value[i]);
  }

  // motion_mode none ignores the motion argument entirely.
  auto ctx_none1 = generate_context(ref, &mv, fe, cr, MotionMode::kNone);
  auto ctx_none2 = generate_context(ref, nullptr, fe, cr, MotionMode::kNone);
  for (std::int64_t i = 0; i < ctx_none1->value.numel(); ++i) {
    CHECK(ctx_none1->value[i] == ctx_none2->value[i]);
  }
}

TEST_CASE("generate_context is differentiable w.r.t. the reference frame") {
  Rng rng(7);
  FeatureExtractor fe(8, rng);
  ContextRefiner cr(8, rng);
  auto ref = ag::leaf(random_tensor({3, 16, 16}, rng, 0.1, 0.9), true);
  Tensor mvt = random_tensor({2, 16, 16}, rng, -0.8, 0.8);
  for (std::int64_t i = 0; i < mvt.numel(); ++i) {
    if (std::fabs(mvt[i] - std::round(mvt[i])) < 0.1) mvt[i] += 0.2;
  }
  auto mv = ag::constant(mvt);
  auto f = [&] {
    return ag::sum_all(
        ag::square(generate_context(ref, &mv, fe, cr, MotionMode::kMemc)));
  };
  CHECK(testutil::check_gradient(f, ref) < 1e-4);
}

TEST_CASE("warped context matches the current frame better than unwarped" *
          doctest::timeout(300)) {
  // Pure translation with the ground-truth flow supplied directly.
  const FrameSequence clip = make_translating_clip(64, 64, 2, 4.0, 0.0, 11);
  Rng rng(13);
  FeatureExtractor fe(64, rng);
  ContextRefiner cr(64, rng);

  // Brief overfit: make the context path predict the current frame's own
  // features (teacher = extract_features(cur)).
  nn::ParamMap params;
  fe.collect(params, "fe");
  cr.collect(params, "cr");
  Adam opt(1e-4);
  Tensor gt_flow({2, 64, 64});
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) gt_flow.at(0, y, x) = 4.0;
  }
  auto mv = ag::constant(gt_flow);
  auto ref = ag::constant(clip.frames[0]);
  auto cur = ag::constant(clip.frames[1]);
  for (int step = 0; step < 50; ++step) {
    nn::zero_grads(params);
    auto ctx = generate_context(ref, &mv, fe, cr, MotionMode::kMemc);
    auto target = fe(cur);
    auto loss = ag::mean_all(ag::square(ag::sub(ctx, target)));
    ag::backward(loss);
    opt.step(params, {});
  }

  ag::NoGradGuard ng;
  const Tensor target = fe(cur)->value;
  const Tensor warped = generate_context(ref, &mv, fe, cr, MotionMode::kMemc)->value;
  const Tensor unwarped = generate_context(ref, nullptr, fe, cr, MotionMode::kNone)->value;
  CHECK(pearson(warped, target) > pearson(unwarped, target));
}

TEST_SUITE_END();
