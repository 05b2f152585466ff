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
#include <filesystem>

#include "cvc/checkpoint.hpp"
#include "cvc/synthetic.hpp"
#include "cvc/training.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvc;
using cvc::testutil::random_tensor;

TEST_SUITE_BEGIN("training");

TEST_CASE("loss stages: algebraic identities") {
  Rng rng(3);
  const Tensor x = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
  auto xv = ag::constant(x);

  PipelineOutputs outs;
  outs.x_hat = ag::constant(x);  // perfect reconstruction
  const StageLoss s2 = compute_loss(2, xv, outs, 512.0, DistortionMetric::kMse);
  CHECK(s2.breakdown.total == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s2.breakdown.distortion == 0.0);

  // Stage 4 minus stage 3 equals R_g + R_s on identical tensors.
  PipelineOutputs full;
  full.x_hat = ag::constant(random_tensor({3, 64, 64}, rng, 0.0, 1.0));
  full.x_warp = ag::constant(random_tensor({3, 64, 64}, rng, 0.0, 1.0));
  full.bpp_y = ag::constant(Tensor({1}, 0.31));
  full.bpp_z = ag::constant(Tensor({1}, 0.02));
  full.bpp_g = ag::constant(Tensor({1}, 0.05));
  full.bpp_s = ag::constant(Tensor({1}, 0.01));
  const StageLoss s3 = compute_loss(3, xv, full, 512.0, DistortionMetric::kMse);
  const StageLoss s4 = compute_loss(4, xv, full, 512.0, DistortionMetric::kMse);
  CHECK(s4.breakdown.total - s3.breakdown.total ==
        doctest::Approx(0.05 + 0.01).epsilon(1e-12));

  // Doubling lambda doubles the distortion term and leaves rates unchanged.
  const StageLoss s3b = compute_loss(3, xv, full, 1024.0, DistortionMetric::kMse);
  CHECK(s3b.breakdown.total - s3.breakdown.total ==
        doctest::Approx(512.0 * s3.breakdown.distortion).epsilon(1e-9));
  CHECK(s3b.breakdown.bpp_y == s3.breakdown.bpp_y);

  // Decomposition identity: total is recomputable from the parts.
  CHECK(s4.breakdown.total ==
        doctest::Approx(s4.breakdown.lambda * s4.breakdown.distortion +
                        s4.breakdown.bpp_y + s4.breakdown.bpp_z +
                        s4.breakdown.bpp_g + s4.breakdown.bpp_s)
            .epsilon(1e-12));

  // Stage-appropriate tensors are mandatory.
  PipelineOutputs missing;
  missing.x_hat = ag::constant(x);
  CHECK_THROWS_AS(compute_loss(3, xv, missing, 512.0, DistortionMetric::kMse),
                  ContractError);
  CHECK_THROWS_AS(compute_loss(1, xv, missing, 512.0, DistortionMetric::kMse),
                  ContractError);
}

TEST_CASE("stage 2 freezes the motion group byte for byte" *
          doctest::timeout(300)) {
  const FrameSequence clip = make_translating_clip(64, 64, 3, 1.0, 0.5, 7);
  CodecConfig cfg;
  VideoCodecModel model = VideoCodecModel::init(cfg, 11);

  nn::ParamMap params = model.parameters();
  std::map<std::string, Tensor> motion_before;
  for (const auto& [name, p] : params) {
    if (name.rfind("motion.", 0) == 0) motion_before[name] = p->value;
  }
  REQUIRE(!motion_before.empty());

  TrainOptions opts;
  opts.batch_size = 1;
  opts.crop = 64;
  Adam opt(1e-4);
  Rng rng(13);
  train_steps(model, {clip}, /*stage=*/2, /*steps=*/4, opt,
              frozen_prefixes_for_stage(2), opts, rng);

  int changed_main = 0;
  for (const auto& [name, p] : params) {
    if (name.rfind("motion.", 0) == 0) {
      const Tensor& before = motion_before.at(name);
      for (std::int64_t i = 0; i < before.numel(); ++i) {
        CHECK(before[i] == p->value[i]);
      }
    } else if (name.rfind("main.", 0) == 0) {
      bool diff = false;
      for (std::int64_t i = 0; i < p->value.numel(); ++i) {
        if (p->grad_ready && p->grad[i] != 0.0) diff = true;
      }
      changed_main += diff ? 1 : 0;
    }
  }
  CHECK(changed_main > 0);
}

TEST_CASE("stage 4 reaches every trainable parameter group" *
          doctest::timeout(300)) {
  const FrameSequence clip = make_translating_clip(64, 64, 3, 1.0, 0.0, 17);
  CodecConfig cfg;  // full default: memc + context + spatial + temporal
  VideoCodecModel model = VideoCodecModel::init(cfg, 19);
  nn::ParamMap params = model.parameters();
  nn::zero_grads(params);

  Rng rng(23);
  PipelineOutputs outs = forward_train(model, clip.frames[0], clip.frames[1], 4, rng);
  StageLoss loss =
      compute_loss(4, ag::constant(clip.frames[1]), outs, 1024.0, DistortionMetric::kMse);
  ag::backward(loss.total);

  const std::vector<std::string> groups = {
      "motion.flow",        "motion.mv_enc",     "motion.mv_dec",
      "motion.mv_hyper_enc", "motion.mv_hyper_dec", "motion.mv_spatial",
      "motion.mv_fusion",   "motion.mv_factorized", "main.feature_extract",
      "main.context_refine", "main.enc",          "main.dec",
      "main.head",          "main.hyper_enc",    "main.hyper_dec",
      "main.temporal_prior", "main.spatial_prior", "main.fusion",
      "main.factorized_z"};
  for (const auto& g : groups) {
    CAPTURE(g);
    CHECK(nn::grad_norm(params, g) > 0.0);
  }
}

TEST_CASE("checkpoint save/load round trip is exact") {
  namespace fs = std::filesystem;
  CodecConfig cfg;
  cfg.entropy_mode = EntropyMode::kHyperSpatial;
  cfg.lambda = 2048.0;
  VideoCodecModel model = VideoCodecModel::init(cfg, 29);
  const fs::path path = fs::temp_directory_path() / "cvc_test.ckpt";
  save_checkpoint(path.string(), model, 3, 123, nullptr);

  VideoCodecModel back = load_model(path.string());
  CHECK(back.config.entropy_mode == EntropyMode::kHyperSpatial);
  CHECK(back.config.lambda == 2048.0);
  const nn::ParamMap pa = model.parameters();
  const nn::ParamMap pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (const auto& [name, p] : pa) {
    const Tensor& other = pb.at(name)->value;
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      CHECK(p->value[i] == other[i]);
    }
  }

  const CheckpointData data = load_checkpoint_data(path.string());
  CHECK(data.schedule_stage == 3);
  CHECK(data.schedule_step == 123);

  // Mismatched architecture fails loudly in strict mode.
  CodecConfig other_cfg;
  other_cfg.entropy_mode = EntropyMode::kHyperOnly;
  VideoCodecModel other = VideoCodecModel::init(other_cfg, 1);
  CHECK_THROWS_AS(apply_checkpoint(other, data, true), DataError);
  // Non-strict apply keeps the fresh initialization for missing tensors.
  apply_checkpoint(other, data, false);
}

TEST_CASE("nan losses abort with a diagnostic snapshot") {
  const FrameSequence clip = make_translating_clip(64, 64, 3, 1.0, 0.0, 31);
  CodecConfig cfg;
  VideoCodecModel model = VideoCodecModel::init(cfg, 37);
  // Poison one weight so the first forward pass produces a non-finite loss.
  model.parameters().at("main.enc.conv1.weight")->value[0] =
      std::numeric_limits<double>::quiet_NaN();

  namespace fs = std::filesystem;
  TrainOptions opts;
  opts.batch_size = 1;
  opts.crop = 64;
  opts.checkpoint_out = (fs::temp_directory_path() / "cvc_nan.ckpt").string();
  Adam opt(1e-4);
  Rng rng(41);
  CHECK_THROWS_AS(train_steps(model, {clip}, 2, 3, opt, frozen_prefixes_for_stage(2),
                              opts, rng),
                  DataError);
  CHECK(fs::exists(opts.checkpoint_out + ".nan-dump"));
}

TEST_SUITE_END();
