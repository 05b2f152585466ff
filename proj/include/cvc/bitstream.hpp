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

#include <array>
#include <map>
#include <memory>

#include "cvc/model.hpp"
#include "cvc/rangecoder.hpp"
#include "cvc/video_io.hpp"

namespace cvc {

// ---- container ----------------------------------------------------------
//
// File layout (all integers big-endian):
//   magic "DCV1", version u8
//   orig_w u32, orig_h u32, padded_w u32, padded_h u32
//   gop_size u16, entropy_mode u8, condition_mode u8, motion_mode u8,
//   context_dim u16, frame_count u32
//   frame records:
//     type u8 (0 = I, 1 = P)
//     I: intra_id u8, payload_len u32, payload
//     P: 4 x (len u32, payload) in the fixed order g, s, y, z
// Each coded substream payload starts with its symbol range r (u16),
// followed by the range coder bytes.

constexpr char kContainerMagic[4] = {'D', 'C', 'V', '1'};
constexpr std::uint8_t kContainerVersion = 1;

struct FrameBitstream {
  FrameRole type = FrameRole::kIntra;
  std::uint8_t intra_id = 0;                         // I only
  std::vector<std::uint8_t> intra_payload;           // I only
  std::array<std::vector<std::uint8_t>, 4> substreams;  // P only: g, s, y, z

  // 4 x 32-bit length prefixes plus the substream payloads (P frames).
  std::int64_t payload_bits() const;
};

struct ContainerHeader {
  int orig_w = 0, orig_h = 0;
  int padded_w = 0, padded_h = 0;
  int gop_size = 1;
  EntropyMode entropy_mode = EntropyMode::kHyperSpatialTemporal;
  ConditionMode condition_mode = ConditionMode::kContextFeature;
  MotionMode motion_mode = MotionMode::kMemc;
  int context_dim = 64;
};

struct BitstreamContainer {
  ContainerHeader header;
  std::vector<FrameBitstream> frames;
};

std::vector<std::uint8_t> serialize_container(const BitstreamContainer& c);
BitstreamContainer parse_container(const std::vector<std::uint8_t>& bytes);
void write_container(const std::string& path, const BitstreamContainer& c);
BitstreamContainer read_container(const std::string& path);

// ---- intra plug ----------------------------------------------------------

class IntraCodec {
 public:
  virtual ~IntraCodec() = default;
  virtual std::uint8_t id() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<std::uint8_t> encode(const Tensor& frame) const = 0;
  virtual Tensor decode(const std::vector<std::uint8_t>& payload) const = 0;
};

constexpr std::uint8_t kIntraLosslessDeflate = 0;
constexpr std::uint8_t kIntraToyHyperprior = 1;

class IntraCodecRegistry {
 public:
  void add(std::shared_ptr<IntraCodec> codec);
  const IntraCodec& get(std::uint8_t id) const;  // ConfigError if unknown
  // Registers lossless-deflate, plus toy-hyperprior when a model is given.
  static IntraCodecRegistry standard(const VideoCodecModel* model);

 private:
  std::map<std::uint8_t, std::shared_ptr<IntraCodec>> by_id_;
};

// ---- frame coding ---------------------------------------------------------

struct SubstreamInfo {
  std::int64_t bytes = 0;
  double quantized_ce_bits = 0.0;  // sum of -log2(freq/2^16) over symbols
  std::int64_t symbols = 0;
};

struct PFrameInfo {
  SubstreamInfo g, s, y, z;
};

struct PFrameResult {
  FrameBitstream bits;
  Tensor reconstruction;  // padded size; bit-identical to the decoder's
  PFrameInfo info;
};

// x and ref are padded frames ([3,Hp,Wp], multiples of kPadMultiple). ref is
// the previous decoded frame.
PFrameResult encode_frame_p(const Tensor& x, const Tensor& ref,
                            const VideoCodecModel& model);

// table_build_order (optional, parallel entropy modes only): permutation of
// latent element indices in which the per-element CDF tables are computed;
// the reconstruction must not depend on it.
//
// Hazard: decoding against the wrong reference frame is not detectable. In
// the non-temporal entropy modes it silently yields a different
// reconstruction; in the temporal modes the coding tables themselves depend
// on the reference, so the entropy decode may desynchronize and raise a
// corruption error instead.
Tensor decode_frame_p(const FrameBitstream& bits, const Tensor& ref,
                      const VideoCodecModel& model,
                      const std::vector<int>* table_build_order = nullptr);

// ---- sequence coding ------------------------------------------------------

struct SequenceRateRecord {
  int frame = 0;
  FrameRole type = FrameRole::kIntra;
  std::int64_t bits_g = 0, bits_s = 0, bits_y = 0, bits_z = 0;
  double bpp = 0.0;
};

struct EncodedSequence {
  BitstreamContainer container;
  std::vector<Tensor> reconstructions;  // original (cropped) size
  std::vector<SequenceRateRecord> rates;
};

EncodedSequence encode_sequence(const FrameSequence& seq, const GopStructure& gops,
                                const VideoCodecModel& model,
                                const IntraCodecRegistry& registry,
                                std::uint8_t intra_id);

FrameSequence decode_sequence(const BitstreamContainer& container,
                              const VideoCodecModel& model,
                              const IntraCodecRegistry& registry);

// JSON-lines per-frame rate report ({frame, type, bits_g, ...}).
void write_rate_report(const std::string& path,
                       const std::vector<SequenceRateRecord>& rates);

}  // namespace cvc
