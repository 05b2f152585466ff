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

#include "cvc/video_io.hpp"

namespace cvc {

// Band-limited random texture translated by a constant displacement per
// frame. The ground-truth backward flow from frame t to frame t-1 (the
// displacement warp() samples at) is exactly (flow_dx, flow_dy).
FrameSequence make_translating_clip(int width, int height, int frames,
                                    double flow_dx, double flow_dy,
                                    std::uint64_t seed);

// Identical textured frames with per-pixel noise baked in (hard for a
// lossless intra coder, trivial for a P frame).
FrameSequence make_static_clip(int width, int height, int frames,
                               std::uint64_t seed);

}  // namespace cvc
