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

#include <map>

#include "cvc/model.hpp"

namespace cvc {

class Adam;

// Single-file checkpoint: "CVCW" magic, version byte, a JSON header with
// the codec config, schedule state and the tensor manifest, then raw
// little-endian float64 payloads in manifest order (optimizer moments
// appended when saved).
struct CheckpointData {
  CodecConfig config;
  int schedule_stage = 0;
  std::int64_t schedule_step = 0;
  std::map<std::string, Tensor> tensors;
  bool has_opt = false;
  std::int64_t opt_t = 0;
  std::map<std::string, Tensor> opt_m, opt_v;
};

void save_checkpoint(const std::string& path, const VideoCodecModel& model,
                     int stage, std::int64_t step, const Adam* opt);

CheckpointData load_checkpoint_data(const std::string& path);

// strict: every model parameter must be present with a matching shape.
// Non-strict keeps the initialization for missing names (used by the
// entropy-mode ablations, which rebuild part of the entropy path).
void apply_checkpoint(VideoCodecModel& model, const CheckpointData& data,
                      bool strict);

// init(config from checkpoint) + strict apply.
VideoCodecModel load_model(const std::string& path);

}  // namespace cvc
