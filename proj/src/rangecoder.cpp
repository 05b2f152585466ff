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

#include "cvc/rangecoder.hpp"

#include <algorithm>
#include <cmath>

namespace cvc {

namespace {
// Renormalize whenever fewer than 48 bits of range remain; with 16-bit
// probabilities, range >> 16 keeps at least 32 bits of headroom.
constexpr std::uint64_t kBot = 1ull << 48;
}  // namespace

std::vector<std::uint32_t> quantize_cdf(const std::vector<double>& masses) {
  const size_t n = masses.size();
  if (n == 0) throw ArgumentError("quantize_cdf: empty alphabet");
  if (n >= kCdfTotal) throw ArgumentError("quantize_cdf: alphabet too large");

  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw ArgumentError("quantize_cdf: masses must be finite and nonnegative");
    }
    total += m;
  }
  if (!(total > 0.0)) throw ArgumentError("quantize_cdf: all masses are zero");

  // Round the cumulative distribution, not the individual masses: each
  // symbol's quantized frequency then sits within +-1 of its exact share,
  // independent of how many near-zero symbols share the table.
  std::vector<std::uint32_t> cum(n + 1, 0);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    acc += masses[i];
    cum[i + 1] = static_cast<std::uint32_t>(
        std::llround(acc / total * static_cast<double>(kCdfTotal)));
  }
  // Give every symbol at least one count while staying inside the budget;
  // the clamp window is always non-empty because n < 2^16.
  for (size_t i = 1; i <= n; ++i) {
    const std::uint32_t lo = cum[i - 1] + 1;
    const std::uint32_t hi = kCdfTotal - static_cast<std::uint32_t>(n - i);
    cum[i] = std::clamp(cum[i], lo, hi);
  }
  return cum;
}

CdfTable build_cdf(const std::vector<double>& masses, int range_r) {
  if (range_r < 0 || masses.size() != static_cast<size_t>(2 * range_r + 1)) {
    throw ArgumentError("build_cdf: expected 2*r+1 masses");
  }
  CdfTable t;
  t.range_r = range_r;
  t.cum = quantize_cdf(masses);
  return t;
}

void RangeEncoder::encode(const CdfTable& cdf, int symbol_value) {
  const int index = symbol_value + cdf.range_r;
  if (index < 0 || index >= cdf.num_symbols()) {
    throw ContractError("range encoder: symbol out of table range");
  }
  encode_index(cdf, index);
}

void RangeEncoder::encode_index(const CdfTable& cdf, int index) {
  const std::uint64_t r = range_ >> kCdfPrecisionBits;
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(low_) +
      static_cast<unsigned __int128>(r) * cdf.cum[static_cast<size_t>(index)];
  if (wide >> 64) {
    // The interval crossed a 2^64 boundary: propagate the carry into the
    // bytes already emitted. A carry can only follow a renormalization, so
    // the buffer is never empty here.
    size_t i = out_.size();
    while (i > 0 && ++out_[--i] == 0) {
    }
  }
  low_ = static_cast<std::uint64_t>(wide);
  range_ = r * cdf.freq(index);
  normalize();
}

void RangeEncoder::normalize() {
  while (range_ < kBot) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
    low_ <<= 8;
    range_ <<= 8;
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 8; ++i) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
    low_ <<= 8;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::uint8_t* data, size_t size)
    : data_(data), size_(size) {
  for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= size_) throw DataError("range decoder: truncated stream");
  return data_[pos_++];
}

int RangeDecoder::decode(const CdfTable& cdf) {
  const std::uint64_t r = range_ >> kCdfPrecisionBits;
  // low_ mirrors the encoder's value modulo 2^64, so the unsigned
  // wraparound of code_ - low_ lands inside [0, range).
  const std::uint64_t target =
      std::min<std::uint64_t>((code_ - low_) / r, kCdfTotal - 1);
  // Largest index with cum[index] <= target.
  const auto it = std::upper_bound(cdf.cum.begin(), cdf.cum.end(),
                                   static_cast<std::uint32_t>(target));
  const int index = static_cast<int>(it - cdf.cum.begin()) - 1;
  if (index < 0 || index >= cdf.num_symbols()) {
    throw DataError("range decoder: corrupted stream");
  }
  low_ += r * cdf.cum[static_cast<size_t>(index)];
  range_ = r * cdf.freq(index);
  normalize();
  return index - cdf.range_r;
}

void RangeDecoder::normalize() {
  while (range_ < kBot) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

}  // namespace cvc
