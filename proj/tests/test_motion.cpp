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

#include "cvc/motion.hpp"
#include "cvc/synthetic.hpp"
#include "cvc/training.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvc;
using cvc::testutil::random_tensor;

TEST_SUITE_BEGIN("motion");

TEST_CASE("estimate_flow: shape contract and argument errors") {
  Rng rng(3);
  FlowNet net(rng);
  const Tensor ref = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
  const Tensor cur = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
  const Tensor flow = estimate_flow(ref, cur, net);
  CHECK(flow.shape() == std::vector<int>{2, 64, 64});
  CHECK(flow.all_finite());

  const Tensor flow2 = estimate_flow(ref, cur, net);
  for (std::int64_t i = 0; i < flow.numel(); ++i) CHECK(flow[i] == flow2[i]);

  const Tensor other = random_tensor({3, 32, 64}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(estimate_flow(ref, other, net), ArgumentError);
  // 24 is not divisible by 2^4.
  const Tensor odd1 = random_tensor({3, 24, 64}, rng, 0.0, 1.0);
  const Tensor odd2 = random_tensor({3, 24, 64}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(estimate_flow(odd1, odd2, net), ArgumentError);
}

TEST_CASE("mv codec: shape contracts and determinism") {
  Rng rng(5);
  MotionCodec mc = MotionCodec::init(rng);
  const Tensor m = random_tensor({2, 64, 64}, rng, -3.0, 3.0);
  const MvLatentBlock block = mv_encode(m, mc);
  CHECK(block.g_hat.shape() == std::vector<int>{64, 4, 4});
  CHECK(block.s_hat.shape() == std::vector<int>{64, 1, 1});
  for (std::int64_t i = 0; i < block.g_hat.numel(); ++i) {
    CHECK(block.g_hat[i] == std::round(block.g_hat[i]));
  }

  const Tensor d1 = mv_decode(block, mc);
  const Tensor d2 = mv_decode(block, mc);
  CHECK(d1.shape() == std::vector<int>{2, 64, 64});
  for (std::int64_t i = 0; i < d1.numel(); ++i) CHECK(d1[i] == d2[i]);

  const Tensor bad = random_tensor({2, 48, 64}, rng, -1.0, 1.0);
  CHECK_THROWS_AS(mv_encode(bad, mc), ArgumentError);
}

TEST_CASE("flow overfit oracle: recovers a known constant translation" *
          doctest::timeout(600)) {
  // Clip whose ground-truth backward flow is exactly (2, 0).
  const FrameSequence clip = make_translating_clip(64, 64, 4, 2.0, 0.0, 21);
  Rng rng(7);
  FlowNet net(rng);
  nn::ParamMap params;
  net.collect(params, "flow");
  Adam opt(1e-4);

  for (int step = 0; step < 600; ++step) {
    nn::zero_grads(params);
    const int t = 1 + step % 3;
    auto ref = ag::constant(clip.frames[static_cast<size_t>(t - 1)]);
    auto cur = ag::constant(clip.frames[static_cast<size_t>(t)]);
    auto flow = net(ref, cur);
    auto warped = ag::warp_bilinear(ref, flow);
    auto loss = ag::mean_all(ag::square(ag::sub(cur, warped)));
    ag::backward(loss);
    opt.step(params, {});
  }

  const Tensor flow = estimate_flow(clip.frames[0], clip.frames[1], net);
  double mean_dx = 0.0, mean_dy = 0.0;
  const std::int64_t n = static_cast<std::int64_t>(flow.dim(1)) * flow.dim(2);
  for (std::int64_t i = 0; i < n; ++i) {
    mean_dx += flow[i] / static_cast<double>(n);
    mean_dy += flow[n + i] / static_cast<double>(n);
  }
  CHECK(std::fabs(mean_dx - 2.0) < 0.5);
  CHECK(std::fabs(mean_dy - 0.0) < 0.5);
}

TEST_CASE("mv round trip overfit oracle: static clip codes to near-zero motion" *
          doctest::timeout(600)) {
  const FrameSequence clip = make_static_clip(64, 64, 3, 33);
  CodecConfig cfg;
  VideoCodecModel model = VideoCodecModel::init(cfg, 99);

  TrainOptions opts;
  opts.batch_size = 1;
  opts.crop = 64;
  Adam opt(1e-4);
  Rng rng(5);
  train_steps(model, {clip}, /*stage=*/1, /*steps=*/300, opt,
              frozen_prefixes_for_stage(1), opts, rng);

  const Tensor zero_motion({2, 64, 64}, 0.0);
  const MvLatentBlock block = mv_encode(zero_motion, *model.motion);
  const Tensor m_hat = mv_decode(block, *model.motion);
  double mean_abs = 0.0;
  for (std::int64_t i = 0; i < m_hat.numel(); ++i) {
    mean_abs += std::fabs(m_hat[i]) / static_cast<double>(m_hat.numel());
  }
  CHECK(mean_abs <= 0.5);
}

TEST_SUITE_END();
