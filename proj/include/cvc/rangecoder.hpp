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

#include <cstdint>
#include <vector>

#include "cvc/common.hpp"

namespace cvc {

// 16-bit cumulative frequency table over the symbol alphabet
// [-range_r, +range_r]: cum has 2*range_r + 2 entries, cum[0] == 0,
// cum.back() == 65536, strictly increasing (every symbol gets >= 1 count).
struct CdfTable {
  int range_r = 0;
  std::vector<std::uint32_t> cum;

  int num_symbols() const { return static_cast<int>(cum.size()) - 1; }
  int symbol_min() const { return -range_r; }
  int symbol_max() const { return range_r; }
  std::uint32_t freq(int index) const {
    return cum[static_cast<size_t>(index) + 1] - cum[static_cast<size_t>(index)];
  }
};

constexpr int kCdfPrecisionBits = 16;
constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecisionBits;

// Quantizes probability masses into 16-bit cumulative frequencies
// (cum[0] == 0, cum[n] == 65536, strictly increasing). Every symbol keeps
// frequency >= 1; the rounding surplus/deficit is settled against the
// largest-mass symbol, so the result is a pure function of the masses.
std::vector<std::uint32_t> quantize_cdf(const std::vector<double>& masses);

// Same, shaped as a symbol table over [-r, r] (tails already folded into
// the edge symbols).
CdfTable build_cdf(const std::vector<double>& masses, int range_r);

// Range coder with 64-bit state and 16-bit probabilities. Carries are
// propagated into the emitted bytes, so nothing is lost to interval
// truncation; the flush costs exactly 8 bytes and a stream of symbols with
// quantized probabilities q_i occupies at most sum(-log2 q_i) + 64 bits.
class RangeEncoder {
 public:
  void encode(const CdfTable& cdf, int symbol_value);
  void encode_index(const CdfTable& cdf, int index);
  std::vector<std::uint8_t> finish();

 private:
  void normalize();
  std::uint64_t low_ = 0;
  std::uint64_t range_ = ~0ull;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  // The buffer must stay alive for the decoder's lifetime.
  RangeDecoder(const std::uint8_t* data, size_t size);
  int decode(const CdfTable& cdf);  // returns the symbol value

 private:
  void normalize();
  std::uint8_t next_byte();
  const std::uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  std::uint64_t low_ = 0;
  std::uint64_t range_ = ~0ull;
  std::uint64_t code_ = 0;
};

}  // namespace cvc
