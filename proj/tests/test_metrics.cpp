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

#include "cvc/metrics.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvc;
using cvc::testutil::random_tensor;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("psnr closed forms, cap and symmetry") {
  Rng rng(3);
  const Tensor a = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  CHECK(psnr(a, a) == kPsnrCap);

  Tensor b = a;
  for (std::int64_t i = 0; i < b.numel(); ++i) {
    b[i] += (b[i] < 0.5 ? 1.0 : -1.0) / 255.0;
  }
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-9));
  CHECK(psnr(a, b) == doctest::Approx(48.131).epsilon(1e-4));

  // MSE = 0.01 -> 20 dB.
  Tensor c = a;
  for (std::int64_t i = 0; i < c.numel(); ++i) c[i] += (c[i] < 0.5 ? 0.1 : -0.1);
  CHECK(psnr(a, c) == doctest::Approx(20.0).epsilon(1e-9));

  CHECK(psnr(a, b) == psnr(b, a));
  const Tensor d = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(psnr(a, d), ArgumentError);
}

TEST_CASE("ms_ssim: identity, bound check, inversion") {
  Rng rng(5);
  const Tensor a = random_tensor({3, 160, 160}, rng, 0.0, 1.0);
  CHECK(ms_ssim(a, a) == 1.0);

  const Tensor small = random_tensor({3, 159, 159}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(ms_ssim(small, small), ArgumentError);

  // Mid-contrast pattern against its negative scores below 0.5.
  Tensor pat({3, 160, 160});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 160; ++y) {
      for (int x = 0; x < 160; ++x) {
        pat.at(c, y, x) = 0.5 + 0.3 * std::sin(0.21 * x) * std::cos(0.17 * y);
      }
    }
  }
  Tensor inv = pat;
  for (std::int64_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0 - inv[i];
  CHECK(ms_ssim(pat, inv) < 0.5);
}

TEST_CASE("bd_rate: identical curves, pure scaling, antisymmetry") {
  RDCurve anchor;
  anchor.codec = "a";
  anchor.sequence = "s";
  anchor.points = {{0.1, 30.0}, {0.2, 33.0}, {0.4, 36.0}, {0.8, 39.0}};
  CHECK(bd_rate(anchor, anchor) == doctest::Approx(0.0).epsilon(1e-12));

  RDCurve twice = anchor;
  for (auto& p : twice.points) p.bpp *= 2.0;
  CHECK(bd_rate(anchor, twice) == doctest::Approx(100.0).epsilon(1e-8));
  CHECK(std::fabs(bd_rate(anchor, twice) - 100.0) < 1e-6);

  // Antisymmetry identity for pure rate scalings.
  const double fwd = bd_rate(anchor, twice);
  const double bwd = bd_rate(twice, anchor);
  CHECK(fwd == doctest::Approx(-bwd / (1.0 + bwd / 100.0)).epsilon(1e-9));

  // Errors.
  RDCurve short_curve = anchor;
  short_curve.points.resize(3);
  CHECK_THROWS_AS(bd_rate(anchor, short_curve), ArgumentError);
  RDCurve disjoint = anchor;
  for (auto& p : disjoint.points) p.quality += 100.0;
  CHECK_THROWS_AS(bd_rate(anchor, disjoint), DataError);
}

TEST_CASE("bd_rate agrees with a trapezoidal integration oracle") {
  // Oracle: independent cubic fit (normal equations) + trapezoid sampling at
  // 1e-4 quality resolution.
  auto oracle = [](const RDCurve& a, const RDCurve& t) {
    auto fit = [](const RDCurve& c) {
      // Solve the 4x4 Vandermonde system exactly with Gaussian elimination.
      std::array<std::array<double, 5>, 4> mat{};
      for (int i = 0; i < 4; ++i) {
        const double q = c.points[static_cast<size_t>(i)].quality;
        mat[static_cast<size_t>(i)] = {1.0, q, q * q, q * q * q,
                                       std::log10(c.points[static_cast<size_t>(i)].bpp)};
      }
      for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r) {
          if (std::fabs(mat[static_cast<size_t>(r)][static_cast<size_t>(col)]) >
              std::fabs(mat[static_cast<size_t>(piv)][static_cast<size_t>(col)])) {
            piv = r;
          }
        }
        std::swap(mat[static_cast<size_t>(col)], mat[static_cast<size_t>(piv)]);
        for (int r = 0; r < 4; ++r) {
          if (r == col) continue;
          const double f = mat[static_cast<size_t>(r)][static_cast<size_t>(col)] /
                           mat[static_cast<size_t>(col)][static_cast<size_t>(col)];
          for (int k = col; k < 5; ++k) {
            mat[static_cast<size_t>(r)][static_cast<size_t>(k)] -=
                f * mat[static_cast<size_t>(col)][static_cast<size_t>(k)];
          }
        }
      }
      return std::array<double, 4>{mat[0][4] / mat[0][0], mat[1][4] / mat[1][1],
                                   mat[2][4] / mat[2][2], mat[3][4] / mat[3][3]};
    };
    const auto ca = fit(a);
    const auto ct = fit(t);
    double lo = -1e300, hi = 1e300;
    for (const auto* c : {&a, &t}) {
      double qmin = 1e300, qmax = -1e300;
      for (const auto& p : c->points) {
        qmin = std::min(qmin, p.quality);
        qmax = std::max(qmax, p.quality);
      }
      lo = std::max(lo, qmin);
      hi = std::min(hi, qmax);
    }
    auto eval = [](const std::array<double, 4>& c, double q) {
      return c[0] + c[1] * q + c[2] * q * q + c[3] * q * q * q;
    };
    const int n = static_cast<int>(std::ceil((hi - lo) / 1e-4));
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double q0 = lo + (hi - lo) * i / n;
      const double q1 = lo + (hi - lo) * (i + 1) / n;
      acc += 0.5 * ((eval(ct, q0) - eval(ca, q0)) + (eval(ct, q1) - eval(ca, q1))) *
             (q1 - q0);
    }
    return (std::pow(10.0, acc / (hi - lo)) - 1.0) * 100.0;
  };

  Rng rng(7);
  int tested = 0;
  while (tested < 20) {
    // Smooth monotone synthetic curves (log-linear with mild curvature).
    RDCurve a, t;
    a.codec = "anchor";
    t.codec = "test";
    a.sequence = t.sequence = "synthetic";
    // Curvature bounded so the fitted cubics stay monotone over the
    // overlap; both routes then integrate the same interpolant family.
    const double qa0 = rng.uniform(28.0, 32.0);
    const double slope_a = rng.uniform(0.06, 0.12);
    const double curve_a = rng.uniform(-1.0, 1.0) * slope_a / 40.0;
    const double qt0 = qa0 + rng.uniform(-1.0, 1.0);
    const double slope_t = slope_a * rng.uniform(0.8, 1.2);
    const double curve_t = rng.uniform(-1.0, 1.0) * slope_t / 40.0;
    for (int i = 0; i < 4; ++i) {
      const double qa = qa0 + 2.5 * i;
      const double qt = qt0 + 2.5 * i;
      a.points.push_back(
          {std::pow(10.0, -1.2 + slope_a * (qa - 30.0) + curve_a * (qa - 30.0) * (qa - 30.0)),
           qa});
      t.points.push_back(
          {std::pow(10.0, -1.1 + slope_t * (qt - 30.0) + curve_t * (qt - 30.0) * (qt - 30.0)),
           qt});
    }
    ++tested;
    const double got = bd_rate(a, t);
    const double want = oracle(a, t);
    CHECK(std::fabs(got - want) <= std::max(0.001 * std::fabs(want), 1e-4));
  }
}

TEST_CASE("entropy gap: degenerate, independent-uniform and random cases") {
  // x == pred deterministically.
  JointPmf diag;
  diag.n = 4;
  diag.p.assign(16, 0.0);
  for (int i = 0; i < 4; ++i) diag.p[static_cast<size_t>(i) * 4 + i] = 0.25;
  const EntropyGap g0 = entropy_gap(diag);
  CHECK(g0.h_residue == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g0.h_conditional == doctest::Approx(0.0).epsilon(1e-12));

  // Independent uniform over {0..3}.
  JointPmf uni;
  uni.n = 4;
  uni.p.assign(16, 1.0 / 16.0);
  const EntropyGap g1 = entropy_gap(uni);
  CHECK(g1.h_conditional == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g1.h_residue == doctest::Approx(2.6556).epsilon(1e-3));

  // The inequality holds for every valid joint pmf.
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const JointPmf j = random_joint_pmf(rng.uniform_int(2, 9), rng);
    const EntropyGap g = entropy_gap(j);
    CHECK(g.h_residue >= g.h_conditional - 1e-12);
  }

  JointPmf bad;
  bad.n = 2;
  bad.p = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(entropy_gap(bad), ArgumentError);
}

TEST_CASE("rd csv round trip and curve grouping") {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / "cvc_rd.csv";
  std::vector<RDRecord> rows = {
      {"cvc", "clipA", 256, 0.1, 30.5, 0.92},
      {"cvc", "clipA", 512, 0.2, 33.1, 0.95},
      {"x", "clipA", 256, 0.15, 30.0, 0.91},
  };
  write_rd_csv(p.string(), rows);
  const auto back = read_rd_csv(p.string());
  REQUIRE(back.size() == 3);
  CHECK(back[0].codec == "cvc");
  CHECK(back[1].bpp == doctest::Approx(0.2));

  const auto curves = curves_from_records(back, "psnr");
  CHECK(curves.size() == 2);
  CHECK(curves[0].points.size() == 2);
  CHECK(curves[0].points[0].quality == doctest::Approx(30.5));
}

TEST_SUITE_END();
