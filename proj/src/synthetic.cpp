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

#include "cvc/synthetic.hpp"

#include <cmath>

namespace cvc {

namespace {

constexpr int kWaves = 10;

struct WaveField {
  double u[3][kWaves], v[3][kWaves], phase[3][kWaves], amp[3][kWaves];

  explicit WaveField(Rng& rng) {
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < kWaves; ++k) {
        // Low spatial frequencies so small flow networks can track the
        // motion; amplitudes keep the sum within [0, 1].
        u[c][k] = rng.uniform(-0.08, 0.08);
        v[c][k] = rng.uniform(-0.08, 0.08);
        phase[c][k] = rng.uniform(0.0, 2.0 * M_PI);
        amp[c][k] = rng.uniform(0.3, 1.0);
      }
    }
  }

  double eval(int c, double x, double y) const {
    double s = 0.0, norm = 0.0;
    for (int k = 0; k < kWaves; ++k) {
      s += amp[c][k] *
           std::sin(2.0 * M_PI * (u[c][k] * x + v[c][k] * y) + phase[c][k]);
      norm += amp[c][k];
    }
    return 0.5 + 0.45 * s / norm;
  }
};

}  // namespace

FrameSequence make_translating_clip(int width, int height, int frames,
                                    double flow_dx, double flow_dy,
                                    std::uint64_t seed) {
  if (width < 1 || height < 1 || frames < 1) {
    throw ArgumentError("clip dimensions must be positive");
  }
  Rng rng(seed);
  const WaveField field(rng);
  FrameSequence seq;
  for (int t = 0; t < frames; ++t) {
    Tensor frame({3, height, width});
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          frame.at(c, y, x) =
              field.eval(c, x + flow_dx * t, y + flow_dy * t);
        }
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

FrameSequence make_static_clip(int width, int height, int frames,
                               std::uint64_t seed) {
  if (width < 1 || height < 1 || frames < 1) {
    throw ArgumentError("clip dimensions must be positive");
  }
  Rng rng(seed);
  const WaveField field(rng);
  Tensor base({3, height, width});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double v = field.eval(c, x, y) + rng.uniform(-0.12, 0.12);
        base.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  FrameSequence seq;
  for (int t = 0; t < frames; ++t) seq.frames.push_back(base);
  return seq;
}

}  // namespace cvc
