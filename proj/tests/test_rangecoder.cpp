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

#include "cvc/entropy.hpp"
#include "cvc/rangecoder.hpp"
#include "doctest.h"

using namespace cvc;

TEST_SUITE_BEGIN("rangecoder");

TEST_CASE("quantize_cdf: uniform masses quantize to exact quarters") {
  const auto cum = quantize_cdf(std::vector<double>(4, 0.25));
  CHECK(cum == std::vector<std::uint32_t>{0, 16384, 32768, 49152, 65536});
}

TEST_CASE("quantize_cdf: zero-mass symbols keep one count") {
  const auto cum = quantize_cdf({0.5, 0.0, 0.5});
  CHECK(cum.size() == 4);
  CHECK(cum[2] - cum[1] == 1);
  CHECK(cum[3] == kCdfTotal);
}

TEST_CASE("build_cdf: laplace symbol-zero frequency matches the closed form") {
  const auto masses = laplace_mass_row(0.0, 1.0, 32);
  const CdfTable t = build_cdf(masses, 32);
  const double expect = std::round((1.0 - std::exp(-0.5)) * kCdfTotal);
  CHECK(std::fabs(static_cast<double>(t.freq(32)) - expect) <= 1.0);
  CHECK(t.freq(32) == 25786);
}

TEST_CASE("build_cdf: strict monotonicity for random parameters") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const double mu = rng.uniform(-0.5, 0.5);
    const double sigma = rng.uniform(kSigmaMin, 5.0);
    const CdfTable t = build_cdf(laplace_mass_row(mu, sigma, 32), 32);
    for (size_t i = 1; i < t.cum.size(); ++i) CHECK(t.cum[i] > t.cum[i - 1]);
    CHECK(t.cum.back() == kCdfTotal);
  }
}

TEST_CASE("range coder: lossless round trip over random adaptive tables") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = rng.uniform_int(1, 2000);
    std::vector<CdfTable> tables;
    std::vector<int> symbols;
    RangeEncoder enc;
    for (int i = 0; i < n; ++i) {
      const double mu = rng.uniform(-0.5, 0.5);
      const double sigma = rng.uniform(0.05, 4.0);
      const int r = 16;
      tables.push_back(build_cdf(laplace_mass_row(mu, sigma, r), r));
      int s = static_cast<int>(std::lround(rng.normal(0.0, 3.0)));
      s = std::clamp(s, -r, r);
      symbols.push_back(s);
      enc.encode(tables.back(), s);
    }
    const auto bytes = enc.finish();
    RangeDecoder dec(bytes.data(), bytes.size());
    for (int i = 0; i < n; ++i) CHECK(dec.decode(tables[static_cast<size_t>(i)]) == symbols[static_cast<size_t>(i)]);
  }
}

TEST_CASE("range coder: 1000 half-probability symbols fit in 125..133 bytes") {
  CdfTable half;
  half.range_r = 0;
  half.cum = quantize_cdf({0.5, 0.5});  // two equiprobable symbols
  RangeEncoder enc;
  Rng rng(11);
  std::vector<int> symbols;
  for (int i = 0; i < 1000; ++i) {
    const int idx = rng.uniform_int(0, 1);
    symbols.push_back(idx);
    enc.encode_index(half, idx);
  }
  const auto bytes = enc.finish();
  CHECK(bytes.size() >= 125);
  CHECK(bytes.size() <= 133);
  RangeDecoder dec(bytes.data(), bytes.size());
  for (int i = 0; i < 1000; ++i) {
    CHECK(dec.decode(half) == symbols[static_cast<size_t>(i)]);
  }
}

TEST_CASE("range coder: empty stream is just the flush") {
  RangeEncoder enc;
  const auto bytes = enc.finish();
  CHECK(bytes.size() <= 8);
}

TEST_CASE("range coder: truncated stream raises a corruption error") {
  const CdfTable t = build_cdf(laplace_mass_row(0.0, 1.0, 8), 8);
  RangeEncoder enc;
  Rng rng(13);
  for (int i = 0; i < 100; ++i) enc.encode(t, rng.uniform_int(-8, 8));
  auto bytes = enc.finish();
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(
      [&] {
        RangeDecoder dec(bytes.data(), bytes.size());
        for (int i = 0; i < 100; ++i) (void)dec.decode(t);
      }(),
      DataError);
}

TEST_CASE("range coder: coded length within 64 bits of the quantized cross-entropy") {
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 12000;
    const double sigma = rng.uniform(0.3, 3.0);
    const int r = 24;
    const CdfTable t = build_cdf(laplace_mass_row(0.0, sigma, r), r);
    RangeEncoder enc;
    double ce_bits = 0.0;
    for (int i = 0; i < n; ++i) {
      // Draw from a Laplace-ish source so the table fits the data.
      const double u = rng.uniform(-0.499, 0.499);
      int s = static_cast<int>(std::lround(-sigma * std::copysign(
          std::log(1.0 - 2.0 * std::fabs(u)), u)));
      s = std::clamp(s, -r, r);
      enc.encode(t, s);
      ce_bits += kCdfPrecisionBits - std::log2(static_cast<double>(t.freq(s + r)));
    }
    const auto bytes = enc.finish();
    const double coded_bits = 8.0 * static_cast<double>(bytes.size());
    CHECK(coded_bits <= ce_bits + 64.0);
    // >= 1e4 symbols: within 1% of the quantized cross-entropy.
    CHECK(coded_bits <= ce_bits * 1.01);
    CHECK(coded_bits >= ce_bits * 0.999);
  }
}

TEST_SUITE_END();
