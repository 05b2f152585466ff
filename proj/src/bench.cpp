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

#include "cvc/bench.hpp"

#include <fstream>

#include "json.hpp"

namespace cvc {

BenchResult run_benchmark(const std::vector<DatasetEntry>& manifest,
                          const std::vector<BenchCodec>& codecs) {
  if (manifest.empty()) throw ArgumentError("benchmark: empty manifest");
  if (codecs.empty()) throw ArgumentError("benchmark: no codec variants");
  for (const auto& c : codecs) {
    if (c.model == nullptr) {
      throw ConfigError("benchmark: codec '" + c.label + "' has no checkpoint");
    }
  }

  BenchResult result;
  for (const auto& entry : manifest) {
    const FrameSequence seq = load_dataset_entry(entry);
    const int gop =
        entry.gop > 0 ? entry.gop : (entry.format == "yuv420" ? 10 : 12);
    const GopStructure gops = segment_gops(seq, gop);
    for (const auto& codec : codecs) {
      const IntraCodecRegistry registry = IntraCodecRegistry::standard(codec.model);
      EncodedSequence enc = encode_sequence(seq, gops, *codec.model, registry,
                                            codec.intra_id);
      const FrameSequence dec = decode_sequence(enc.container, *codec.model, registry);
      const double pixels = static_cast<double>(seq.width()) * seq.height() *
                            static_cast<double>(seq.frames.size());
      const auto bytes = serialize_container(enc.container);

      double psnr_sum = 0.0, msssim_sum = 0.0;
      bool msssim_ok = std::min(seq.width(), seq.height()) >= kMsSsimMinSize;
      for (size_t i = 0; i < seq.frames.size(); ++i) {
        for (std::int64_t e = 0; e < dec.frames[i].numel(); ++e) {
          if (dec.frames[i][e] != enc.reconstructions[i][e]) {
            throw DataError("benchmark: decoder mismatch on '" + entry.name + "'");
          }
        }
        psnr_sum += psnr(seq.frames[i], dec.frames[i]);
        if (msssim_ok) msssim_sum += ms_ssim(seq.frames[i], dec.frames[i]);
      }
      RDRecord r;
      r.codec = codec.label;
      r.sequence = entry.name;
      r.lambda = codec.model->config.lambda;
      r.bpp = static_cast<double>(bytes.size()) * 8.0 / pixels;
      r.psnr = psnr_sum / static_cast<double>(seq.frames.size());
      r.msssim = msssim_ok ? msssim_sum / static_cast<double>(seq.frames.size()) : 0.0;
      result.records.push_back(r);
      for (const auto& fr : enc.rates) result.per_frame.push_back(fr);
    }
  }
  return result;
}

void write_bench_report(const std::string& csv_path, const std::string& json_path,
                        const BenchResult& result) {
  if (!csv_path.empty()) write_rd_csv(csv_path, result.records);
  if (json_path.empty()) return;
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& r : result.records) {
    j["points"].push_back({{"codec", r.codec},
                           {"sequence", r.sequence},
                           {"lambda", r.lambda},
                           {"bpp", r.bpp},
                           {"psnr", r.psnr},
                           {"msssim", r.msssim}});
  }
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot open for writing: " + json_path);
  out << j.dump(2) << "\n";
}

}  // namespace cvc
