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

#include "cvc/bitstream.hpp"
#include "cvc/metrics.hpp"

namespace cvc {

// One codec variant in a benchmark run: a label plus a trained model.
struct BenchCodec {
  std::string label;
  const VideoCodecModel* model = nullptr;
  std::uint8_t intra_id = kIntraLosslessDeflate;
};

struct BenchResult {
  std::vector<RDRecord> records;       // one row per (codec, sequence, lambda)
  std::vector<SequenceRateRecord> per_frame;  // concatenated frame reports
};

// Encodes and decodes every manifest sequence under every codec variant,
// verifies reconstructions match, and gathers RD points. GOP defaults to 10
// for raw YUV inputs and 12 for image sequences when the manifest leaves it
// unset; msssim is reported when frames are large enough, else 0.
BenchResult run_benchmark(const std::vector<DatasetEntry>& manifest,
                          const std::vector<BenchCodec>& codecs);

void write_bench_report(const std::string& csv_path, const std::string& json_path,
                        const BenchResult& result);

}  // namespace cvc
